//! Split-operator evolution of two-component Dirac spinors.
//!
//! One step is the symmetric product `e^{-iV dt/2} e^{-iT dt} e^{-iV dt/2}` with
//! `V` sampled at the step midpoint. Both factors are exact 2×2 exponentials:
//! the kinetic one per Fourier mode, the potential one per lattice site. With
//! `V = a·I + b·σ₂` (a = qφ, b = e·A_y) every potential factor lies in the
//! commuting family spanned by `I` and `σ₂`, so adjacent half steps fuse into
//! a single factor.

use num_complex::Complex64;
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{Error, Result};
use crate::fields::FieldConfig;
use crate::grid::{free_energy, Fourier, Grid};

/// Largest tolerated deviation of a state norm from one.
pub const NORM_TOL: f64 = 1e-8;

const BLOCK_STEPS: usize = 128;

/// Two-component amplitude on the grid: upper components then lower components.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    data: Vec<Complex64>,
}

impl SpinorField {
    pub fn zeros(points: usize) -> Self {
        SpinorField { data: vec![Complex64::default(); 2 * points] }
    }

    pub fn from_components(upper: &[Complex64], lower: &[Complex64]) -> Self {
        assert_eq!(upper.len(), lower.len());
        let mut data = upper.to_vec();
        data.extend_from_slice(lower);
        SpinorField { data }
    }

    pub fn from_vec(data: Vec<Complex64>) -> Self {
        assert!(data.len() % 2 == 0);
        SpinorField { data }
    }

    pub fn points(&self) -> usize {
        self.data.len() / 2
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn upper(&self) -> &[Complex64] {
        &self.data[..self.points()]
    }

    pub fn lower(&self) -> &[Complex64] {
        &self.data[self.points()..]
    }

    pub fn components_mut(&mut self) -> (&mut [Complex64], &mut [Complex64]) {
        let n = self.points();
        self.data.split_at_mut(n)
    }

    /// `<ψ|ψ>` with unit-norm lattice vectors.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &SpinorField) -> Complex64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }
}

/// Time axis of a run: `steps` equal steps from `t_start`, with snapshots at
/// selected step indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    t_start: f64,
    dt: f64,
    steps: usize,
    snapshot_steps: Vec<usize>,
}

impl Schedule {
    /// Uniform schedule with the largest step `<= dt_max` that divides the interval.
    pub fn new(t_start: f64, t_end: f64, dt_max: f64, snapshots: &[f64]) -> Result<Self> {
        if !(dt_max > 0.0 && dt_max.is_finite()) {
            return Err(Error::BadSchedule(format!("dt must be positive, got {dt_max}")));
        }
        if !(t_end >= t_start) {
            return Err(Error::BadSchedule(format!("t_end {t_end} before t_start {t_start}")));
        }
        let span = t_end - t_start;
        let steps = ((span / dt_max) - 1e-9).ceil().max(1.0) as usize;
        let dt = if span > 0.0 { span / steps as f64 } else { dt_max };
        let steps = if span > 0.0 { steps } else { 0 };
        Self::with_steps(t_start, dt, steps, snapshots)
    }

    /// Schedule whose step divides `period` exactly, so snapshots placed at
    /// multiples of `period` land on the same laser phase.
    pub fn locked(t_start: f64, t_end: f64, dt_max: f64, period: f64, snapshots: &[f64]) -> Result<Self> {
        if !(period > 0.0) {
            return Err(Error::BadSchedule("locking period must be positive".into()));
        }
        let per = (period / dt_max - 1e-9).ceil().max(1.0);
        let dt = period / per;
        let steps_f = (t_end - t_start) / dt;
        let steps = steps_f.round();
        if (steps - steps_f).abs() > 1e-6 {
            return Err(Error::BadSchedule(format!(
                "interval [{t_start}, {t_end}] is not a whole number of locking periods"
            )));
        }
        Self::with_steps(t_start, dt, steps as usize, snapshots)
    }

    pub fn with_steps(t_start: f64, dt: f64, steps: usize, snapshots: &[f64]) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::BadSchedule(format!("dt must be positive, got {dt}")));
        }
        let t_end = t_start + dt * steps as f64;
        let mut snapshot_steps = Vec::with_capacity(snapshots.len());
        for &t in snapshots {
            if t < t_start - 1e-9 * dt.max(1.0) || t > t_end + 1e-6 * dt {
                return Err(Error::BadSchedule(format!(
                    "snapshot {t} outside [{t_start}, {t_end}]"
                )));
            }
            let idx = ((t - t_start) / dt).round() as usize;
            snapshot_steps.push(idx.min(steps));
        }
        snapshot_steps.sort_unstable();
        snapshot_steps.dedup();
        Ok(Schedule { t_start, dt, steps, snapshot_steps })
    }

    /// Schedule running from `t_from` back to `t_to < t_from` with steps of `-dt`.
    pub fn backward(t_from: f64, t_to: f64, dt_max: f64) -> Result<Self> {
        let fwd = Schedule::new(t_to, t_from, dt_max, &[])?;
        Ok(Schedule { t_start: t_from, dt: -fwd.dt, steps: fwd.steps, snapshot_steps: vec![] })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.time_at(self.steps)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time_at(&self, step: usize) -> f64 {
        self.t_start + step as f64 * self.dt
    }

    pub fn snapshot_steps(&self) -> &[usize] {
        &self.snapshot_steps
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshot_steps.iter().map(|&s| self.time_at(s)).collect()
    }

    /// Same span and snapshots with the step divided by `factor`.
    pub fn refined(&self, factor: usize) -> Schedule {
        Schedule {
            t_start: self.t_start,
            dt: self.dt / factor as f64,
            steps: self.steps * factor,
            snapshot_steps: self.snapshot_steps.iter().map(|s| s * factor).collect(),
        }
    }
}

/// States at one snapshot step.
#[derive(Debug)]
pub struct Snapshot<'a> {
    pub index: usize,
    pub step: usize,
    pub time: f64,
    pub states: &'a [SpinorField],
}

#[derive(Debug, Clone, Copy)]
struct SiteFactor {
    phase: Complex64,
    cos: f64,
    sin: f64,
}

impl SiteFactor {
    #[inline]
    fn apply(&self, u: &mut Complex64, d: &mut Complex64) {
        let (a, b) = (*u, *d);
        *u = self.phase * (a * self.cos - b * self.sin);
        *d = self.phase * (a * self.sin + b * self.cos);
    }
}

/// Split-operator propagator for one field configuration and step size.
#[derive(Debug, Clone)]
pub struct Propagator {
    grid: Grid,
    fields: FieldConfig,
    dt: f64,
    fourier: Fourier,
    kinetic: Vec<[Complex64; 4]>,
    well: Vec<f64>,
    cos_kx: Vec<f64>,
    sin_kx: Vec<f64>,
}

/// Kinetic factor `exp(-i(σ₁p + σ₃)dt)` as row-major 2×2 blocks, scaled by `scale`.
fn kinetic_factors(grid: &Grid, dt: f64, scale: f64) -> Vec<[Complex64; 4]> {
    grid.p()
        .iter()
        .map(|&p| {
            let e = free_energy(p);
            let (s, c) = (e * dt).sin_cos();
            let i = Complex64::new(0.0, 1.0);
            [
                (c - i * (s / e)) * scale,
                -i * (s * p / e) * scale,
                -i * (s * p / e) * scale,
                (c + i * (s / e)) * scale,
            ]
        })
        .collect()
}

impl Propagator {
    pub fn new(grid: &Grid, fields: &FieldConfig, dt: f64) -> Result<Self> {
        fields.validate()?;
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::BadSchedule(format!("invalid step {dt}")));
        }
        let n = grid.len();
        let omega = if fields.laser_on { fields.omega } else { 0.0 };
        Ok(Propagator {
            grid: grid.clone(),
            fields: *fields,
            dt,
            fourier: Fourier::for_grid(grid),
            kinetic: kinetic_factors(grid, dt, 1.0 / n as f64),
            well: grid.x().iter().map(|&x| fields.well_profile(x)).collect(),
            cos_kx: grid.x().iter().map(|&x| (omega * x).cos()).collect(),
            sin_kx: grid.x().iter().map(|&x| (omega * x).sin()).collect(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn fields(&self) -> &FieldConfig {
        &self.fields
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Scalar coefficients `(f, A₀ f sin ωt, A₀ f cos ωt)` at time `t`.
    fn coefficients(&self, t: f64) -> [f64; 3] {
        let f = self.fields.envelope(t);
        if !self.fields.laser_on || f == 0.0 {
            return [f, 0.0, 0.0];
        }
        let (s, c) = (self.fields.omega * t).sin_cos();
        let a = self.fields.a0 * f;
        [f, a * s, a * c]
    }

    /// Site factors for `exp(-i h Σ V(t_m))` over the given midpoints.
    fn site_factors(&self, midpoints: &[f64], h: f64, out: &mut Vec<SiteFactor>) {
        let mut acc = [0.0; 3];
        for &t in midpoints {
            let c = self.coefficients(t);
            for (a, v) in acc.iter_mut().zip(c) {
                *a += v;
            }
        }
        out.clear();
        let laser = self.fields.laser_on && (acc[1] != 0.0 || acc[2] != 0.0);
        for j in 0..self.grid.len() {
            let alpha = self.well[j] * acc[0] * h;
            // sin ω(t - x) = sin ωt cos ωx - cos ωt sin ωx
            let beta = if laser { (acc[1] * self.cos_kx[j] - acc[2] * self.sin_kx[j]) * h } else { 0.0 };
            let (s, c) = if beta == 0.0 { (0.0, 1.0) } else { beta.sin_cos() };
            out.push(SiteFactor { phase: Complex64::from_polar(1.0, -alpha), cos: c, sin: s });
        }
    }

    fn apply_sites(factors: &[SiteFactor], psi: &mut SpinorField) {
        let (up, dn) = psi.components_mut();
        for ((f, u), d) in factors.iter().zip(up.iter_mut()).zip(dn.iter_mut()) {
            f.apply(u, d);
        }
    }

    fn apply_kinetic(
        fourier: &Fourier,
        kinetic: &[[Complex64; 4]],
        psi: &mut SpinorField,
        scratch: &mut [Complex64],
    ) {
        let (up, dn) = psi.components_mut();
        fourier.forward_raw(up, scratch);
        fourier.forward_raw(dn, scratch);
        for ((k, u), d) in kinetic.iter().zip(up.iter_mut()).zip(dn.iter_mut()) {
            let (a, b) = (*u, *d);
            *u = k[0] * a + k[1] * b;
            *d = k[2] * a + k[3] * b;
        }
        fourier.inverse_raw(up, scratch);
        fourier.inverse_raw(dn, scratch);
    }

    /// One unfused Strang step from `t` to `t + dt`. Negative `dt` steps backward.
    pub fn step(&self, psi: &mut SpinorField, t: f64, dt: f64) {
        let n = self.grid.len();
        let kinetic = if dt == self.dt { self.kinetic.clone() } else { kinetic_factors(&self.grid, dt, 1.0 / n as f64) };
        let mut sites = Vec::with_capacity(n);
        self.site_factors(&[t + 0.5 * dt], 0.5 * dt, &mut sites);
        let mut scratch = vec![Complex64::default(); self.fourier.scratch_len()];
        Self::apply_sites(&sites, psi);
        Self::apply_kinetic(&self.fourier, &kinetic, psi, &mut scratch);
        Self::apply_sites(&sites, psi);
    }

    /// Site factors for steps `first..first+count`: entry half step, fused
    /// interior factors and exit half step.
    fn block_factors(&self, schedule: &Schedule, first: usize, count: usize) -> Vec<Vec<SiteFactor>> {
        let h = 0.5 * self.dt;
        let mid = |s: usize| schedule.time_at(s) + h;
        let mut out = Vec::with_capacity(count + 1);
        for i in 0..=count {
            let mut f = Vec::with_capacity(self.grid.len());
            if i == 0 {
                self.site_factors(&[mid(first)], h, &mut f);
            } else if i == count {
                self.site_factors(&[mid(first + count - 1)], h, &mut f);
            } else {
                self.site_factors(&[mid(first + i - 1), mid(first + i)], h, &mut f);
            }
            out.push(f);
        }
        out
    }

    fn run_block(&self, factors: &[Vec<SiteFactor>], psi: &mut SpinorField, scratch: &mut [Complex64]) {
        Self::apply_sites(&factors[0], psi);
        for f in &factors[1..] {
            Self::apply_kinetic(&self.fourier, &self.kinetic, psi, scratch);
            Self::apply_sites(f, psi);
        }
    }

    /// Evolves `states` along `schedule`, calling `visit` at every snapshot.
    ///
    /// States evolve independently; the result does not depend on the pool size.
    pub fn evolve<F>(
        &self,
        states: &mut [SpinorField],
        schedule: &Schedule,
        pool: Option<&ThreadPool>,
        mut visit: F,
    ) -> Result<()>
    where
        F: FnMut(&Snapshot<'_>) -> Result<()>,
    {
        if (schedule.dt() - self.dt).abs() > 1e-12 * self.dt.abs() {
            return Err(Error::BadSchedule(format!(
                "schedule step {} differs from propagator step {}",
                schedule.dt(),
                self.dt
            )));
        }
        let n = self.grid.len();
        if let Some(s) = states.iter().find(|s| s.points() != n) {
            return Err(Error::BadSchedule(format!("state with {} points on a {n}-point grid", s.points())));
        }
        let mut snaps = schedule.snapshot_steps().iter().copied().peekable();
        let mut snap_index = 0;
        let mut current = 0;
        let mut checked_first = false;
        let scratch_len = self.fourier.scratch_len();
        loop {
            while let Some(&s) = snaps.peek() {
                if s != current {
                    break;
                }
                snaps.next();
                self.check_norms(states, schedule.time_at(current), NORM_TOL)?;
                visit(&Snapshot { index: snap_index, step: current, time: schedule.time_at(current), states })?;
                snap_index += 1;
            }
            if current == schedule.steps() {
                break;
            }
            let next_stop = snaps.peek().copied().unwrap_or(schedule.steps());
            let count = (next_stop - current).min(BLOCK_STEPS);
            let count = if checked_first { count } else { 1 };
            let factors = self.block_factors(schedule, current, count);
            let work = |psi: &mut SpinorField| {
                let mut scratch = vec![Complex64::default(); scratch_len];
                self.run_block(&factors, psi, &mut scratch);
            };
            match pool {
                Some(p) => p.install(|| states.par_iter_mut().for_each(work)),
                None => states.iter_mut().for_each(work),
            }
            current += count;
            if !checked_first {
                self.check_norms(states, schedule.time_at(current), NORM_TOL)?;
                checked_first = true;
            }
        }
        Ok(())
    }

    fn check_norms(&self, states: &[SpinorField], time: f64, limit: f64) -> Result<()> {
        for s in states {
            let err = (s.norm() - 1.0).abs();
            if err > limit {
                return Err(Error::StepRejected { time, error: err, limit });
            }
        }
        Ok(())
    }
}

/// Ratio of successive differences when the step is halved twice.
///
/// Second-order convergence gives a value near 4.
pub fn richardson_ratio(
    grid: &Grid,
    fields: &FieldConfig,
    initial: &[SpinorField],
    schedule: &Schedule,
    pool: Option<&ThreadPool>,
) -> Result<f64> {
    let run = |sched: &Schedule| -> Result<Vec<SpinorField>> {
        let prop = Propagator::new(grid, fields, sched.dt())?;
        let mut states = initial.to_vec();
        let end = Schedule::with_steps(sched.t_start(), sched.dt(), sched.steps(), &[])?;
        prop.evolve(&mut states, &end, pool, |_| Ok(()))?;
        Ok(states)
    };
    let coarse = run(schedule)?;
    let mid = run(&schedule.refined(2))?;
    let fine = run(&schedule.refined(4))?;
    let dist = |a: &[SpinorField], b: &[SpinorField]| -> f64 {
        a.iter()
            .zip(b)
            .flat_map(|(x, y)| x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| (p - q).norm_sqr()))
            .sum::<f64>()
            .sqrt()
    };
    let d1 = dist(&coarse, &mid);
    let d2 = dist(&mid, &fine);
    if d2 == 0.0 {
        return Err(Error::NonConvergence("step refinement left the states unchanged".into()));
    }
    Ok(d1 / d2)
}
