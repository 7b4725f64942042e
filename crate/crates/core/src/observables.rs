//! Field-theoretic observables built from evolved single-particle states.
//!
//! Every evolved state is labelled by the free mode it started in. Projecting
//! it back onto the free basis gives one column of the transition amplitudes
//! G(ν; ν'). Electrons created from the Dirac sea are counted through
//! G(+; −), positrons through G(−; +).

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{free_energy, Fourier, Grid};
use crate::propagator::SpinorField;
use crate::spectrum::{StateClass, StaticSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn label(self) -> &'static str {
        match self {
            Sign::Positive => "+",
            Sign::Negative => "-",
        }
    }
}

/// Free mode `k` (FFT index) on the `sign` energy branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mode {
    pub k: usize,
    pub sign: Sign,
}

/// Modes with `|p| <= p_max`: the negative branch first, then optionally the positive one.
pub fn evolved_modes(grid: &Grid, p_max: f64, with_positive: bool) -> Vec<Mode> {
    let ks = grid.modes_within(p_max);
    let mut modes: Vec<Mode> = ks.iter().map(|&k| Mode { k, sign: Sign::Negative }).collect();
    if with_positive {
        modes.extend(ks.iter().map(|&k| Mode { k, sign: Sign::Positive }));
    }
    modes
}

/// Free spinor amplitudes `(upper, lower)` on the given branch.
pub fn free_spinor(p: f64, sign: Sign) -> [f64; 2] {
    let e = free_energy(p);
    let n = (2.0 * e * (e + 1.0)).sqrt();
    match sign {
        Sign::Positive => [(e + 1.0) / n, p / n],
        Sign::Negative => [-p / n, (e + 1.0) / n],
    }
}

/// Free plane-wave spinors on a grid.
#[derive(Debug, Clone)]
pub struct FreeBasis {
    grid: Grid,
    fourier: Fourier,
    spinors: Vec<[[f64; 2]; 2]>,
}

impl FreeBasis {
    pub fn new(grid: &Grid) -> Self {
        let spinors = grid
            .p()
            .iter()
            .map(|&p| [free_spinor(p, Sign::Positive), free_spinor(p, Sign::Negative)])
            .collect();
        FreeBasis { grid: grid.clone(), fourier: Fourier::for_grid(grid), spinors }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spinor(&self, k: usize, sign: Sign) -> [f64; 2] {
        match sign {
            Sign::Positive => self.spinors[k][0],
            Sign::Negative => self.spinors[k][1],
        }
    }

    /// Plane wave `u_ν(p_k) e^{i p_k (x - x₀)} / sqrt(N)`.
    pub fn state(&self, mode: Mode) -> SpinorField {
        let n = self.grid.len();
        let mut up = vec![Complex64::default(); n];
        let mut dn = vec![Complex64::default(); n];
        let s = self.spinor(mode.k, mode.sign);
        up[mode.k] = Complex64::new(s[0], 0.0);
        dn[mode.k] = Complex64::new(s[1], 0.0);
        self.fourier.inverse(&mut up);
        self.fourier.inverse(&mut dn);
        SpinorField::from_components(&up, &dn)
    }

    pub fn states(&self, modes: &[Mode]) -> Vec<SpinorField> {
        modes.iter().map(|&m| self.state(m)).collect()
    }

    /// Overlaps `(⟨+,k|ψ⟩, ⟨−,k|ψ⟩)` for every mode `k`.
    pub fn project(&self, psi: &SpinorField) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut up = psi.upper().to_vec();
        let mut dn = psi.lower().to_vec();
        self.fourier.forward(&mut up);
        self.fourier.forward(&mut dn);
        let mut plus = Vec::with_capacity(up.len());
        let mut minus = Vec::with_capacity(up.len());
        for ((s, u), d) in self.spinors.iter().zip(&up).zip(&dn) {
            plus.push(u * s[0][0] + d * s[0][1]);
            minus.push(u * s[1][0] + d * s[1][1]);
        }
        (plus, minus)
    }

    /// Positive-branch part of `Σ_k c_k |+,k⟩` as a field on the grid.
    fn positive_field(&self, coeffs: &[Complex64]) -> SpinorField {
        let mut up: Vec<Complex64> = coeffs.iter().zip(&self.spinors).map(|(c, s)| c * s[0][0]).collect();
        let mut dn: Vec<Complex64> = coeffs.iter().zip(&self.spinors).map(|(c, s)| c * s[0][1]).collect();
        self.fourier.inverse(&mut up);
        self.fourier.inverse(&mut dn);
        SpinorField::from_components(&up, &dn)
    }
}

/// Transition amplitudes of the evolved modes at one time.
///
/// Column `c` holds the projections of the state that started in `modes[c]`.
#[derive(Debug, Clone)]
pub struct AmplitudeSet {
    pub time: f64,
    modes: Vec<Mode>,
    plus: Mat<Complex64>,
    minus: Mat<Complex64>,
}

impl AmplitudeSet {
    pub fn new(time: f64, modes: &[Mode], states: &[SpinorField], basis: &FreeBasis) -> Result<Self> {
        if modes.len() != states.len() {
            return Err(Error::Invariant(format!(
                "{} modes for {} evolved states",
                modes.len(),
                states.len()
            )));
        }
        let n = basis.grid().len();
        let mut plus = Mat::zeros(n, modes.len());
        let mut minus = Mat::zeros(n, modes.len());
        for (c, psi) in states.iter().enumerate() {
            let (gp, gm) = basis.project(psi);
            for k in 0..n {
                plus[(k, c)] = gp[k];
                minus[(k, c)] = gm[k];
            }
        }
        Ok(AmplitudeSet { time, modes: modes.to_vec(), plus, minus })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// `G(+; modes[c])_k`.
    pub fn plus(&self) -> MatRef<'_, Complex64> {
        self.plus.as_ref()
    }

    /// `G(−; modes[c])_k`.
    pub fn minus(&self) -> MatRef<'_, Complex64> {
        self.minus.as_ref()
    }

    fn columns(&self, sign: Sign) -> impl Iterator<Item = usize> + '_ {
        self.modes.iter().enumerate().filter(move |(_, m)| m.sign == sign).map(|(c, _)| c)
    }

    pub fn has_positive_set(&self) -> bool {
        self.columns(Sign::Positive).next().is_some()
    }

    /// Largest deviation of `Σ_{k,ν} |G(ν; c)_k|²` from one over all columns.
    pub fn column_unitarity_error(&self) -> f64 {
        (0..self.modes.len())
            .map(|c| {
                let s: f64 = (0..self.plus.nrows())
                    .map(|k| self.plus[(k, c)].norm_sqr() + self.minus[(k, c)].norm_sqr())
                    .sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `N = Σ_{k, c∈−} |G(+; c)_k|²`.
    pub fn particle_number(&self) -> f64 {
        self.columns(Sign::Negative)
            .map(|c| (0..self.plus.nrows()).map(|k| self.plus[(k, c)].norm_sqr()).sum::<f64>())
            .sum()
    }

    /// Diagonal sum of the S matrix, accumulated mode by mode.
    pub fn s_trace(&self) -> f64 {
        let cols: Vec<usize> = self.columns(Sign::Negative).collect();
        (0..self.plus.nrows())
            .map(|k| cols.iter().map(|&c| (self.plus[(k, c)].conj() * self.plus[(k, c)]).re).sum::<f64>())
            .sum()
    }

    /// `S_{k,k'} = Σ_{c∈−} G*(+; c)_k G(+; c)_{k'}`.
    pub fn s_matrix(&self) -> SMatrix {
        let cols: Vec<usize> = self.columns(Sign::Negative).collect();
        let n = self.plus.nrows();
        let g = Mat::from_fn(n, cols.len(), |k, j| self.plus[(k, cols[j])]);
        let mut s = Mat::zeros(n, n);
        matmul(&mut s, Accum::Replace, g.conjugate(), g.transpose(), Complex64::new(1.0, 0.0), Par::Seq);
        SMatrix { data: s }
    }

    /// Electron momentum distribution `χ⁻(p_k) = Σ_{c∈−} |G(+; c)_k|²`.
    pub fn electron_momentum_spectrum(&self, grid: &Grid) -> MomentumSpectrum {
        let cols: Vec<usize> = self.columns(Sign::Negative).collect();
        let chi: Vec<f64> = (0..self.plus.nrows())
            .map(|k| cols.iter().map(|&c| self.plus[(k, c)].norm_sqr()).sum())
            .collect();
        MomentumSpectrum::from_modes(grid, grid.p().to_vec(), chi)
    }

    /// Positron momentum distribution from the evolved positive-energy set.
    ///
    /// A vacancy left in negative-energy mode `p_k` is a positron with momentum
    /// `-p_k`. The Nyquist mode is its own mirror image on the lattice.
    pub fn positron_momentum_spectrum(&self, grid: &Grid) -> Result<MomentumSpectrum> {
        let cols: Vec<usize> = self.columns(Sign::Positive).collect();
        if cols.is_empty() {
            return Err(Error::MissingPositiveSet);
        }
        let chi: Vec<f64> = (0..self.minus.nrows())
            .map(|k| cols.iter().map(|&c| self.minus[(k, c)].norm_sqr()).sum())
            .collect();
        let nyquist = grid.len() / 2;
        let p = grid.p().iter().enumerate().map(|(k, &p)| if k == nyquist { p } else { -p }).collect();
        Ok(MomentumSpectrum::from_modes(grid, p, chi))
    }

    /// Electron density built directly from the positive-branch parts of the evolved states.
    pub fn spatial_density_direct(&self, basis: &FreeBasis) -> Vec<f64> {
        let grid = basis.grid();
        let mut rho = vec![0.0; grid.len()];
        for c in self.columns(Sign::Negative) {
            let coeffs: Vec<Complex64> = (0..grid.len()).map(|k| self.plus[(k, c)]).collect();
            let f = basis.positive_field(&coeffs);
            for (j, r) in rho.iter_mut().enumerate() {
                *r += f.upper()[j].norm_sqr() + f.lower()[j].norm_sqr();
            }
        }
        rho.iter_mut().for_each(|r| *r /= grid.dx());
        rho
    }
}

/// Hermitian matrix of created-electron correlations in the free positive modes.
#[derive(Debug, Clone)]
pub struct SMatrix {
    data: Mat<Complex64>,
}

impl SMatrix {
    pub fn matrix(&self) -> MatRef<'_, Complex64> {
        self.data.as_ref()
    }

    pub fn trace(&self) -> f64 {
        (0..self.data.nrows()).map(|k| self.data[(k, k)].re).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let n = self.data.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..=i {
                worst = worst.max((self.data[(i, j)] - self.data[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let ev = self
            .data
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
        Ok(ev.iter().copied().fold(f64::INFINITY, f64::min))
    }
}

/// Electron density `ρ(x_j)` per unit length from the S matrix.
///
/// `ρ(x_j) = Σ_{k,k'} S_{k,k'} (u_k·u_{k'}) e^{i(p_{k'}-p_k)(x_j-x₀)} / (N Δx)`,
/// evaluated one row of S at a time with an inverse transform.
pub fn spatial_density(s: &SMatrix, basis: &FreeBasis) -> Vec<f64> {
    let grid = basis.grid();
    let n = grid.len();
    let mut rho = vec![0.0; n];
    for k in 0..n {
        let row: Vec<Complex64> = (0..n).map(|kp| s.data[(k, kp)]).collect();
        if row.iter().all(|c| c.norm_sqr() == 0.0) {
            continue;
        }
        let f = basis.positive_field(&row);
        let u = basis.spinor(k, Sign::Positive);
        let scale = 1.0 / (n as f64).sqrt();
        for (j, r) in rho.iter_mut().enumerate() {
            let w = Complex64::from_polar(scale, -grid.p()[k] * (grid.x()[j] - grid.x()[0]));
            let v = w * (f.upper()[j] * u[0] + f.lower()[j] * u[1]);
            *r += v.re;
        }
    }
    rho.iter_mut().for_each(|r| *r /= grid.dx());
    rho
}

/// `∫ρ dx` on the grid.
pub fn integrate_density(rho: &[f64], grid: &Grid) -> f64 {
    rho.iter().sum::<f64>() * grid.dx()
}

/// Per-mode momentum distribution, sorted by momentum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentumSpectrum {
    pub p: Vec<f64>,
    pub chi: Vec<f64>,
    pub dp: f64,
}

impl MomentumSpectrum {
    pub fn from_modes(grid: &Grid, p: Vec<f64>, chi: Vec<f64>) -> Self {
        let mut pairs: Vec<(f64, f64)> = p.into_iter().zip(chi).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (p, chi) = pairs.into_iter().unzip();
        MomentumSpectrum { p, chi, dp: grid.dp() }
    }

    pub fn total(&self) -> f64 {
        self.chi.iter().sum()
    }

    /// Momentum of the largest entry with `0 < p <= p_max` (or `-p_max <= p < 0`
    /// when `positive` is false).
    pub fn peak(&self, positive: bool, p_max: f64) -> Option<(f64, f64)> {
        self.p
            .iter()
            .zip(&self.chi)
            .filter(|(p, _)| p.abs() <= p_max && if positive { **p > 0.0 } else { **p < 0.0 })
            .map(|(p, c)| (*p, *c))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Relative asymmetry `Σ|χ(p) - χ(-p)| / Σχ`.
    pub fn asymmetry(&self) -> f64 {
        let total = self.total();
        if total == 0.0 {
            return 0.0;
        }
        let mut diff = 0.0;
        for (i, &p) in self.p.iter().enumerate() {
            if let Some(j) = self.p.iter().position(|&q| (q + p).abs() < 1e-9 * self.dp.max(1.0)) {
                diff += (self.chi[i] - self.chi[j]).abs();
            }
        }
        0.5 * diff / total
    }

    /// `∫_{-∞}^{p} ρ(q) dq` for the density `ρ = χ/Δp` interpolated linearly between modes.
    fn cumulative(&self, p: f64) -> f64 {
        let i = self.p.partition_point(|&q| q <= p);
        if i == 0 {
            return 0.0;
        }
        // trapezoids over the full intervals below p_{i-1}
        let mut acc = 0.0;
        for j in 1..i {
            acc += 0.5 * (self.chi[j - 1] + self.chi[j]) * (self.p[j] - self.p[j - 1]);
        }
        if i < self.p.len() {
            let (p0, p1) = (self.p[i - 1], self.p[i]);
            let s = (p - p0) / (p1 - p0);
            let c = (1.0 - s) * self.chi[i - 1] + s * self.chi[i];
            acc += 0.5 * (self.chi[i - 1] + c) * (p - p0);
        }
        acc / self.dp
    }
}

/// Energy spectrum on uniform bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergySpectrum {
    pub energy: Vec<f64>,
    pub density: Vec<f64>,
    pub bin_width: f64,
}

impl EnergySpectrum {
    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width
    }

    pub fn peak(&self) -> Option<(f64, f64)> {
        self.energy
            .iter()
            .zip(&self.density)
            .map(|(e, d)| (*e, *d))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Converts a momentum distribution to `S(E)` on `bins` bins over `[1, e_max]`.
///
/// Both momentum branches `±sqrt(E²-1)` contribute. Each bin holds the
/// average of `ρ(p(E))|dp/dE|` over the bin, evaluated exactly as the
/// momentum integral between the bin edges.
pub fn positron_energy_spectrum(chi: &MomentumSpectrum, bins: usize, e_max: f64) -> Result<EnergySpectrum> {
    if chi.p.len() < 2 || bins == 0 || !(e_max > 1.0) {
        return Err(Error::EmptySpectrum);
    }
    let width = (e_max - 1.0) / bins as f64;
    let momentum = |e: f64| (e * e - 1.0).max(0.0).sqrt();
    let mut energy = Vec::with_capacity(bins);
    let mut density = Vec::with_capacity(bins);
    for b in 0..bins {
        let (lo, hi) = (momentum(1.0 + b as f64 * width), momentum(1.0 + (b + 1) as f64 * width));
        let mass = chi.cumulative(hi) - chi.cumulative(lo) + chi.cumulative(-lo) - chi.cumulative(-hi);
        energy.push(1.0 + (b as f64 + 0.5) * width);
        density.push(mass / width);
    }
    Ok(EnergySpectrum { energy, density, bin_width: width })
}

/// Occupation of static eigenstates by the evolved Dirac-sea states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Occupation {
    pub first: usize,
    pub energy: Vec<f64>,
    pub occupation: Vec<f64>,
}

impl Occupation {
    pub fn depletion(&self) -> Vec<f64> {
        self.occupation.iter().map(|o| 1.0 - o).collect()
    }

    pub fn total(&self) -> f64 {
        self.occupation.iter().sum()
    }

    pub fn get(&self, n: usize) -> Option<f64> {
        n.checked_sub(self.first).and_then(|i| self.occupation.get(i).copied())
    }

    /// Energy of the most depleted negative-continuum state within `(e_lo, e_hi)`.
    pub fn depletion_peak(&self, e_lo: f64, e_hi: f64) -> Option<(f64, f64)> {
        self.energy
            .iter()
            .zip(&self.occupation)
            .filter(|(e, _)| **e > e_lo && **e < e_hi && StateClass::of(**e) == StateClass::NegativeContinuum)
            .map(|(e, o)| (*e, 1.0 - o))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

fn states_matrix(states: &[SpinorField]) -> Mat<Complex64> {
    let rows = states.first().map_or(0, |s| s.as_slice().len());
    Mat::from_fn(rows, states.len(), |i, c| states[c].as_slice()[i])
}

/// `O(n) = Σ_c |⟨n|ψ_c⟩|²` for the eigenstates `n` in `range`.
pub fn occupation_range(
    states: &[SpinorField],
    spec: &StaticSpectrum,
    range: std::ops::Range<usize>,
) -> Result<Occupation> {
    let n2 = spec.len();
    if let Some(s) = states.iter().find(|s| s.as_slice().len() != n2) {
        return Err(Error::Invariant(format!(
            "state of length {} against a spectrum of size {n2}",
            s.as_slice().len()
        )));
    }
    let v = spec.states().subcols(range.start, range.len());
    let psi = states_matrix(states);
    let mut c = Mat::zeros(range.len(), states.len());
    matmul(&mut c, Accum::Replace, v.adjoint(), &psi, Complex64::new(1.0, 0.0), Par::Seq);
    let occupation = (0..range.len())
        .map(|i| (0..states.len()).map(|j| c[(i, j)].norm_sqr()).sum())
        .collect();
    Ok(Occupation {
        first: range.start,
        energy: spec.energies()[range].to_vec(),
        occupation,
    })
}

/// Occupation of every static eigenstate.
pub fn instantaneous_occupation(states: &[SpinorField], spec: &StaticSpectrum) -> Result<Occupation> {
    occupation_range(states, spec, 0..spec.len())
}

/// Ground-state population `N_b` and positive-continuum population `N_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundContinuum {
    pub n_b: f64,
    pub n_c: f64,
    /// Population of all gap states.
    pub n_gap: f64,
}

/// Evaluates `N_b` and `N_c`, projecting only onto states above the negative continuum.
pub fn bound_and_continuum_numbers(states: &[SpinorField], spec: &StaticSpectrum) -> Result<BoundContinuum> {
    let ground = spec.ground_index().ok_or(Error::NoBoundState)?;
    let occ = occupation_range(states, spec, ground..spec.len())?;
    Ok(bound_and_continuum_from(&occ, spec)?)
}

pub fn bound_and_continuum_from(occ: &Occupation, spec: &StaticSpectrum) -> Result<BoundContinuum> {
    let ground = spec.ground_index().ok_or(Error::NoBoundState)?;
    let n_b = occ.get(ground).ok_or(Error::NoBoundState)?;
    let mut n_c = 0.0;
    let mut n_gap = 0.0;
    for (e, o) in occ.energy.iter().zip(&occ.occupation) {
        match StateClass::of(*e) {
            StateClass::PositiveContinuum => n_c += o,
            StateClass::Gap => n_gap += o,
            StateClass::NegativeContinuum => {}
        }
    }
    Ok(BoundContinuum { n_b, n_c, n_gap })
}

/// `|⟨ψ|ν,p⟩|²` against every free mode, sorted by momentum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeOverlap {
    pub p: Vec<f64>,
    pub negative: Vec<f64>,
    pub positive: Vec<f64>,
}

impl FreeOverlap {
    pub fn negative_mass(&self) -> f64 {
        self.negative.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.negative_mass() + self.positive.iter().sum::<f64>()
    }

    /// Energies `-E(p)` of the negative-branch entries.
    pub fn negative_energies(&self) -> Vec<f64> {
        self.p.iter().map(|&p| -free_energy(p)).collect()
    }
}

pub fn bound_free_overlap(psi: &[Complex64], basis: &FreeBasis) -> Result<FreeOverlap> {
    let field = SpinorField::from_vec(psi.to_vec());
    let norm = field.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized(norm));
    }
    let (plus, minus) = basis.project(&field);
    let mut rows: Vec<(f64, f64, f64)> = basis
        .grid()
        .p()
        .iter()
        .zip(plus.iter().zip(&minus))
        .map(|(&p, (a, b))| (p, b.norm_sqr(), a.norm_sqr()))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(FreeOverlap {
        p: rows.iter().map(|r| r.0).collect(),
        negative: rows.iter().map(|r| r.1).collect(),
        positive: rows.iter().map(|r| r.2).collect(),
    })
}
