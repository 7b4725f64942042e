//! Static (plateau, laser-free) Dirac Hamiltonian and its eigenstates.
//!
//! Two-component reduction: α → σ₁, β → σ₃, so `H = σ₁ p + σ₃ + qφ(x)`. The
//! derivative is spectral, i.e. `p` is diagonal in the Fourier basis, and the
//! well is diagonal in position. Vectors have length 2N: upper components on
//! sites `0..N`, lower components on sites `N..2N`.

use faer::{Mat, Par, Side};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::FieldConfig;
use crate::grid::{Fourier, Grid};

/// Margin separating gap states from the continuum thresholds ±1.
pub const GAP_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateClass {
    NegativeContinuum,
    Gap,
    PositiveContinuum,
}

impl StateClass {
    pub fn of(energy: f64) -> Self {
        if energy <= -1.0 + GAP_EPS {
            StateClass::NegativeContinuum
        } else if energy >= 1.0 - GAP_EPS {
            StateClass::PositiveContinuum
        } else {
            StateClass::Gap
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            StateClass::NegativeContinuum => "negative-continuum",
            StateClass::Gap => "gap",
            StateClass::PositiveContinuum => "positive-continuum",
        }
    }
}

/// Dense Hermitian `2N × 2N` matrix of the plateau Hamiltonian in the position basis.
pub fn build_static_hamiltonian(grid: &Grid, cfg: &FieldConfig) -> Mat<Complex64> {
    let n = grid.len();
    // p is circulant in position: P_{jl} = c_{(j-l) mod N}, c = IDFT(p)/N
    let mut c: Vec<Complex64> = grid.p().iter().map(|&p| Complex64::new(p, 0.0)).collect();
    Fourier::for_grid(grid).inverse(&mut c);
    let scale = 1.0 / (n as f64).sqrt();
    c.iter_mut().for_each(|v| *v *= scale);

    let mut h = Mat::<Complex64>::zeros(2 * n, 2 * n);
    for j in 0..n {
        for l in 0..=j {
            let v = if j == l {
                Complex64::new(c[0].re, 0.0)
            } else {
                c[(j + n - l) % n]
            };
            // σ₁ p: off-diagonal blocks
            h[(j, n + l)] = v;
            h[(n + l, j)] = v.conj();
            h[(n + j, l)] = v;
            h[(l, n + j)] = v.conj();
        }
    }
    for (j, &x) in grid.x().iter().enumerate() {
        let v = cfg.well_profile(x);
        h[(j, j)] = Complex64::new(1.0 + v, 0.0);
        h[(n + j, n + j)] = Complex64::new(-1.0 + v, 0.0);
    }
    h
}

fn eigenvalues(h: &Mat<Complex64>) -> Result<Vec<f64>> {
    let mut e = h
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    e.sort_by(f64::total_cmp);
    Ok(e)
}

/// Eigenpairs of the plateau Hamiltonian, sorted by energy.
#[derive(Debug, Clone)]
pub struct StaticSpectrum {
    grid: Grid,
    energies: Vec<f64>,
    states: Mat<Complex64>,
}

impl StaticSpectrum {
    pub fn compute(grid: &Grid, cfg: &FieldConfig) -> Result<Self> {
        faer::set_global_parallelism(Par::Seq);
        let h = build_static_hamiltonian(grid, cfg);
        let evd = h
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
        let s = evd.S().column_vector();
        let u = evd.U();
        let dim = 2 * grid.len();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| s[a].re.total_cmp(&s[b].re));
        let energies = order.iter().map(|&i| s[i].re).collect();
        let states = Mat::from_fn(dim, dim, |r, c| u[(r, order[c])]);
        Ok(StaticSpectrum { grid: grid.clone(), energies, states })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn class(&self, n: usize) -> StateClass {
        StateClass::of(self.energies[n])
    }

    /// Eigenvectors as columns.
    pub fn states(&self) -> &Mat<Complex64> {
        &self.states
    }

    pub fn state(&self, n: usize) -> Vec<Complex64> {
        self.states.col(n).iter().copied().collect()
    }

    /// Probability of state `n` within `|x| < radius`.
    pub fn localization(&self, n: usize, radius: f64) -> f64 {
        let g = &self.grid;
        let col = self.states.col(n);
        g.x()
            .iter()
            .enumerate()
            .filter(|(_, x)| x.abs() < radius)
            .map(|(j, _)| col[j].norm_sqr() + col[g.len() + j].norm_sqr())
            .sum()
    }

    pub fn gap_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&n| self.class(n) == StateClass::Gap).collect()
    }

    pub fn ground_index(&self) -> Option<usize> {
        self.gap_indices().first().copied()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundState {
    pub index: usize,
    pub energy: f64,
    pub width: f64,
    #[serde(skip)]
    pub wavefunction: Vec<Complex64>,
}

/// All gap states, ascending in energy, with widths attached.
pub fn bound_states(spec: &StaticSpectrum) -> Result<Vec<BoundState>> {
    spec.gap_indices()
        .into_iter()
        .map(|index| {
            let wavefunction = spec.state(index);
            let width = state_width(&wavefunction, spec.grid())?;
            Ok(BoundState { index, energy: spec.energies[index], width, wavefunction })
        })
        .collect()
}

/// Width `2 sqrt(<x²> - <x>²)` of a normalized two-component state.
pub fn state_width(psi: &[Complex64], grid: &Grid) -> Result<f64> {
    let n = grid.len();
    assert_eq!(psi.len(), 2 * n, "state length must be 2N");
    let dens = |j: usize| psi[j].norm_sqr() + psi[n + j].norm_sqr();
    let norm: f64 = (0..n).map(dens).sum();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized(norm));
    }
    let (m1, m2) = grid
        .x()
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(a, b), (j, &x)| (a + x * dens(j), b + x * x * dens(j)));
    Ok(2.0 * (m2 - m1 * m1).max(0.0).sqrt())
}

/// Quantity a well depth is tuned for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TuneTarget {
    /// Energy of the lowest gap state.
    GroundEnergy(f64),
    /// Spacing between the two lowest gap states.
    LevelSpacing(f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct TunedWell {
    pub v0: f64,
    pub achieved: f64,
    pub evaluations: usize,
}

/// Tolerance on the tuned quantity.
pub const TUNE_TOL: f64 = 1e-5;

/// Bisection on V₀ so the well of width `d` and edge `w` hits `target`.
///
/// The bracket is found by scanning V₀ upward from zero in steps of 0.125 up
/// to `v0_max`; the tuned quantity must be monotone inside it.
pub fn tune_well_depth(d: f64, w: f64, target: TuneTarget, grid: &Grid) -> Result<TunedWell> {
    tune_well_depth_in(d, w, target, grid, 4.0)
}

pub fn tune_well_depth_in(
    d: f64,
    w: f64,
    target: TuneTarget,
    grid: &Grid,
    v0_max: f64,
) -> Result<TunedWell> {
    faer::set_global_parallelism(Par::Seq);
    let mut evaluations = 0;
    let goal = match target {
        TuneTarget::GroundEnergy(e) | TuneTarget::LevelSpacing(e) => e,
    };
    let no_bracket = |reason: String| Error::NoBracket { d, target: goal, reason };
    if let TuneTarget::GroundEnergy(e) = target {
        if !(e > -1.0 && e < 1.0) {
            return Err(no_bracket("target energy outside the gap".into()));
        }
    }
    // Signed residual, oriented so it decreases with V0. None when undefined.
    let mut eval = |v0: f64| -> Result<Option<f64>> {
        evaluations += 1;
        let cfg = FieldConfig::well(v0, d, w, 0.0);
        let e = eigenvalues(&build_static_hamiltonian(grid, &cfg))?;
        let gap: Vec<f64> = e.into_iter().filter(|&x| StateClass::of(x) == StateClass::Gap).collect();
        Ok(match target {
            TuneTarget::GroundEnergy(t) => Some(gap.first().copied().unwrap_or(1.0) - t),
            TuneTarget::LevelSpacing(t) => (gap.len() >= 2).then(|| t - (gap[1] - gap[0])),
        })
    };

    let step = 0.125;
    let mut lo = 0.0;
    let mut f_lo = eval(lo)?;
    let mut bracket = None;
    let mut seen = Vec::new();
    let mut v = step;
    while v <= v0_max + 1e-12 {
        let f = eval(v)?;
        if let Some(fv) = f {
            seen.push(fv);
            if let Some(fl) = f_lo {
                if fl > 0.0 && fv <= 0.0 {
                    bracket = Some((lo, fl, v, fv));
                    break;
                }
            }
        }
        lo = v;
        f_lo = f;
        v += step;
    }
    let (mut a, mut fa, mut b, mut fb) = match bracket {
        Some(br) => br,
        None => {
            let reason = if seen.is_empty() {
                "tuned quantity undefined over the scan".to_string()
            } else {
                let (mn, mx) = seen
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
                format!(
                    "residual stays within [{mn:.4}, {mx:.4}] for V0 in [0, {v0_max}] without a sign change"
                )
            };
            return Err(no_bracket(reason));
        }
    };
    if fb == 0.0 {
        return Ok(TunedWell { v0: b, achieved: goal, evaluations });
    }
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        let fm = eval(m)?.ok_or_else(|| no_bracket("tuned quantity undefined inside bracket".into()))?;
        if fm > fa + 1e-12 || fm < fb - 1e-12 {
            return Err(Error::NotMonotone(m));
        }
        if fm.abs() < TUNE_TOL * 0.1 || (b - a) < 1e-10 {
            let achieved = match target {
                TuneTarget::GroundEnergy(t) => t + fm,
                TuneTarget::LevelSpacing(t) => t - fm,
            };
            return Ok(TunedWell { v0: m, achieved, evaluations });
        }
        if fm > 0.0 {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    Err(Error::NonConvergence("bisection did not converge".into()))
}

/// Quasibound resonance embedded in the negative continuum.
#[derive(Debug, Clone, Serialize)]
pub struct Quasibound {
    pub index: usize,
    pub energy: f64,
    /// Probability inside `|x| < D/2 + 2W`.
    pub localization: f64,
}

/// Negative-continuum eigenstate with the largest weight inside the well.
///
/// Candidates are restricted to `1 - V₀ < E < -1`, the window in which a state
/// can be a positive-energy solution inside the well and a negative-energy one
/// outside it.
pub fn locate_quasibound(spec: &StaticSpectrum, cfg: &FieldConfig) -> Result<Quasibound> {
    if cfg.v0 <= 2.0 {
        return Err(Error::Subcritical(cfg.v0));
    }
    let radius = 0.5 * cfg.d + 2.0 * cfg.w;
    let lower = 1.0 - cfg.v0;
    (0..spec.len())
        .filter(|&n| {
            let e = spec.energies[n];
            e > lower && spec.class(n) == StateClass::NegativeContinuum
        })
        .map(|n| Quasibound { index: n, energy: spec.energies[n], localization: spec.localization(n, radius) })
        .max_by(|a, b| a.localization.total_cmp(&b.localization))
        .ok_or(Error::Subcritical(cfg.v0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    use crate::grid::free_energy;

    fn small_grid() -> Grid {
        Grid::new(40.0, 128).unwrap()
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let g = small_grid();
        let h = build_static_hamiltonian(&g, &FieldConfig::well(1.7, 3.2, 0.3, 0.0));
        let mut worst: f64 = 0.0;
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                worst = worst.max((h[(i, j)] - h[(j, i)].conj()).norm());
            }
        }
        assert!(worst < 1e-12);
    }

    #[test]
    fn free_spectrum_is_relativistic_dispersion() {
        let g = small_grid();
        let spec = StaticSpectrum::compute(&g, &FieldConfig::well(0.0, 3.2, 0.3, 0.0)).unwrap();
        let mut want: Vec<f64> = g
            .p()
            .iter()
            .flat_map(|&p| [free_energy(p), -free_energy(p)])
            .collect();
        want.sort_by(f64::total_cmp);
        assert_eq!(spec.len(), 2 * g.len());
        for (a, b) in spec.energies().iter().zip(&want) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        assert!(bound_states(&spec).unwrap().is_empty());
    }

    #[test]
    fn eigenvectors_orthonormal_and_complete() {
        let g = Grid::new(20.0, 64).unwrap();
        let spec = StaticSpectrum::compute(&g, &FieldConfig::well(1.9, 2.443, 0.3, 0.0)).unwrap();
        let u = spec.states();
        let gram = u.adjoint() * u;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - want).norm() < 1e-8);
            }
        }
        // completeness on a test state
        let chi: Vec<Complex64> = (0..128)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let nrm: f64 = chi.iter().map(|c| c.norm_sqr()).sum();
        let total: f64 = (0..spec.len())
            .map(|n| {
                let col = u.col(n);
                let ov: Complex64 = (0..128).map(|r| col[r].conj() * chi[r]).sum();
                ov.norm_sqr()
            })
            .sum();
        assert_relative_eq!(total / nrm, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn width_of_gaussian() {
        let g = Grid::new(80.0, 512).unwrap();
        let sigma = 1.7;
        let mut psi: Vec<Complex64> = g
            .x()
            .iter()
            .map(|x| Complex64::new((-x * x / (4.0 * sigma * sigma)).exp(), 0.0))
            .collect();
        psi.extend(std::iter::repeat(Complex64::default()).take(g.len()));
        let n: f64 = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|c| *c /= n);
        assert_relative_eq!(state_width(&psi, &g).unwrap(), 2.0 * sigma, epsilon = 1e-9);
    }

    #[test]
    fn width_of_single_site_and_bad_norm() {
        let g = small_grid();
        let mut psi = vec![Complex64::default(); 2 * g.len()];
        psi[g.len() / 2] = Complex64::new(1.0, 0.0);
        assert!(state_width(&psi, &g).unwrap() < 1e-12);
        psi[3] = Complex64::new(0.5, 0.0);
        assert!(matches!(state_width(&psi, &g), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn bound_state_symmetric_well_centered() {
        let g = Grid::new(40.0, 256).unwrap();
        let spec = StaticSpectrum::compute(&g, &FieldConfig::well(1.9, 2.443, 0.3, 0.0)).unwrap();
        let b = bound_states(&spec).unwrap();
        assert!(!b.is_empty());
        let gs = &b[0];
        assert!((gs.energy + 0.4).abs() < 0.01);
        let n = g.len();
        let mean: f64 = (0..n)
            .map(|j| g.x()[j] * (gs.wavefunction[j].norm_sqr() + gs.wavefunction[n + j].norm_sqr()))
            .sum();
        assert!(mean.abs() < 1e-6 * g.length());
        assert!(gs.width > 0.0);
        for w in b.windows(2) {
            assert!(w[0].energy < w[1].energy);
        }
    }

    #[test]
    fn quasibound_requires_supercritical_well() {
        let g = Grid::new(20.0, 64).unwrap();
        let cfg = FieldConfig::well(1.726, 3.2, 0.3, 0.0);
        let spec = StaticSpectrum::compute(&g, &cfg).unwrap();
        assert!(matches!(locate_quasibound(&spec, &cfg), Err(Error::Subcritical(_))));
    }

    #[test]
    fn tuner_rejects_target_outside_gap() {
        let g = Grid::new(20.0, 64).unwrap();
        let r = tune_well_depth(3.2, 0.3, TuneTarget::GroundEnergy(-1.5), &g);
        assert!(matches!(r, Err(Error::NoBracket { .. })));
    }

    #[test]
    fn tuner_hits_target_on_small_grid() {
        let g = Grid::new(30.0, 128).unwrap();
        let t = tune_well_depth(3.2, 0.3, TuneTarget::GroundEnergy(-0.2), &g).unwrap();
        let spec = StaticSpectrum::compute(&g, &FieldConfig::well(t.v0, 3.2, 0.3, 0.0)).unwrap();
        let e0 = spec.energies()[spec.ground_index().unwrap()];
        assert!((e0 + 0.2).abs() < 1e-4);
    }
}
