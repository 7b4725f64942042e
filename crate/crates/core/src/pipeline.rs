//! Complete runs: static spectrum, evolution of the free states, observables
//! at snapshots, gap-state filling, fits and invariant checks.

use std::time::Instant;

use num_complex::Complex64;
use rayon::ThreadPool;
use serde::Serialize;

use crate::analysis::{
    decay_probability, fit_decay_rate, fit_width_law, fwhm, late_slope, DecayFit, FitWindow, LinearFit, SweepRow,
    TimeSeries, WidthLaw,
};
use crate::config::{RunConfig, Scenario};
use crate::error::{Error, Result};
use crate::fields::FieldConfig;
use crate::filling::{embed, gap_filling, FillingSeries};
use crate::grid::{free_energy, Grid};
use crate::observables::{
    bound_and_continuum_numbers, bound_free_overlap, evolved_modes, instantaneous_occupation, integrate_density,
    positron_energy_spectrum, spatial_density, AmplitudeSet, EnergySpectrum, FreeBasis, FreeOverlap, Mode,
    MomentumSpectrum, Occupation,
};
use crate::propagator::{Propagator, Schedule, SpinorField};
use crate::spectrum::{
    bound_states, locate_quasibound, state_width, tune_well_depth, BoundState, Quasibound, StateClass,
    StaticSpectrum, TuneTarget,
};

/// Largest grid on which the in-field occupations are computed.
pub const MAX_OCCUPATION_POINTS: usize = 1024;

/// Tolerances of the invariant checks.
pub const UNITARITY_TOL: f64 = 1e-6;
pub const IDENTITY_TOL: f64 = 1e-6;
pub const CHARGE_TOL: f64 = 1e-4;
pub const DENSITY_TOL: f64 = 1e-8;
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Check {
        Check { name: name.into(), value, limit, passed: value <= limit }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

fn timed<T>(timings: &mut Vec<Timing>, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    timings.push(Timing { stage: stage.into(), seconds: start.elapsed().as_secs_f64() });
    Ok(out)
}

pub fn worker_pool(workers: usize) -> Result<Option<ThreadPool>> {
    if workers <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Static spectrum of the plateau well.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub grid: Grid,
    pub energies: Vec<f64>,
    pub classes: Vec<StateClass>,
    /// Probability inside `|x| < D/2 + 2W`.
    pub localization: Vec<f64>,
    pub bound: Vec<BoundState>,
    pub quasibound: Option<Quasibound>,
    /// Ground state against the free modes.
    pub ground_overlap: Option<FreeOverlap>,
}

impl SpectrumReport {
    pub fn ground(&self) -> Option<&BoundState> {
        self.bound.first()
    }

    /// Width of each state, for gap states only.
    pub fn width_of(&self, n: usize) -> Option<f64> {
        self.bound.iter().find(|b| b.index == n).map(|b| b.width)
    }
}

fn static_well(cfg: &RunConfig) -> FieldConfig {
    FieldConfig::well(cfg.well.v0, cfg.well.d, cfg.well.w, cfg.plateau())
}

pub fn spectrum_report(cfg: &RunConfig) -> Result<(SpectrumReport, StaticSpectrum)> {
    let grid = cfg.spectrum_grid.build()?;
    let well = static_well(cfg);
    let spec = StaticSpectrum::compute(&grid, &well)?;
    let radius = 0.5 * well.d + 2.0 * well.w;
    let bound = bound_states(&spec)?;
    let quasibound = if well.v0 > 2.0 { Some(locate_quasibound(&spec, &well)?) } else { None };
    let ground_overlap = match bound.first() {
        Some(g) => Some(bound_free_overlap(&g.wavefunction, &FreeBasis::new(&grid))?),
        None => None,
    };
    let report = SpectrumReport {
        grid,
        energies: spec.energies().to_vec(),
        classes: (0..spec.len()).map(|n| spec.class(n)).collect(),
        localization: (0..spec.len()).map(|n| spec.localization(n, radius)).collect(),
        bound,
        quasibound,
        ground_overlap,
    };
    Ok((report, spec))
}

/// Ground and continuum populations while the fields are on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InFieldRow {
    pub t: f64,
    pub n_b: f64,
    pub n_c: f64,
    pub n_gap: f64,
}

/// Observables after the fields are switched off, for plateau length `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RampedRow {
    pub t: f64,
    pub n: f64,
    pub s_trace: f64,
    pub rho_integral: f64,
    pub chi_minus: f64,
    pub chi_plus: Option<f64>,
    pub unitarity_error: f64,
}

impl RampedRow {
    /// Largest relative deviation among the four routes to the particle number.
    pub fn identity_error(&self) -> f64 {
        let scale = self.n.abs().max(f64::MIN_POSITIVE);
        [self.s_trace, self.rho_integral, self.chi_minus]
            .iter()
            .map(|v| (v - self.n).abs() / scale)
            .fold(0.0, f64::max)
    }

    pub fn charge_error(&self) -> Option<f64> {
        self.chi_plus.map(|p| (p - self.chi_minus).abs())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Fits {
    /// Rate from the primary decay probability of the scenario.
    pub gamma: Option<DecayFit>,
    /// Rate from `|1 - N_b|` in the two-state scenario.
    pub gamma_ground: Option<DecayFit>,
    pub slope_n: Option<LinearFit>,
    pub slope_nc: Option<LinearFit>,
    /// `(|p|, χ⁺)` at the highest positron momentum peak.
    pub positron_peak: Option<(f64, f64)>,
    pub positron_asymmetry: Option<f64>,
    pub energy_peak: Option<(f64, f64)>,
    pub fwhm: Option<f64>,
    /// `(E, 1 - O)` of the most depleted negative-continuum state.
    pub depletion_peak: Option<(f64, f64)>,
    /// Fits that could not be made, with the reason.
    pub notes: Vec<String>,
}

/// States and labels at the end of a run.
#[derive(Debug, Clone)]
pub struct FinalStates {
    pub time: f64,
    pub modes: Vec<Mode>,
    pub states: Vec<SpinorField>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub spectrum: SpectrumReport,
    pub in_field: Vec<InFieldRow>,
    pub ramped: Vec<RampedRow>,
    pub occupation: Option<Occupation>,
    pub chi_minus: Option<MomentumSpectrum>,
    pub chi_plus: Option<MomentumSpectrum>,
    pub energy_spectrum: Option<EnergySpectrum>,
    /// Electron density after the pulse, built from the S matrix.
    pub density: Option<Vec<f64>>,
    pub filling: Option<FillingSeries>,
    pub fits: Fits,
    pub checks: Vec<Check>,
    pub timings: Vec<Timing>,
    #[serde(skip)]
    pub final_states: Option<FinalStates>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn final_number(&self) -> Option<f64> {
        self.ramped.last().map(|r| r.n)
    }
}

/// Times of the in-field snapshots: multiples of the interval up to the
/// plateau end, which is always included.
fn in_field_times(cfg: &RunConfig, plateau: f64) -> Vec<f64> {
    let interval = match cfg.half_period() {
        Some(h) => (cfg.schedule.snapshot_interval / h).round().max(1.0) * h,
        None => cfg.schedule.snapshot_interval,
    };
    let count = (plateau / interval + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (0..=count).map(|k| k as f64 * interval).collect();
    if plateau - times.last().copied().unwrap_or(0.0) > 1e-9 * plateau.max(1.0) {
        times.push(plateau);
    }
    times
}

fn main_schedule(cfg: &RunConfig, fields: &FieldConfig, snaps: &[f64]) -> Result<Schedule> {
    match fields.half_period() {
        Some(h) => Schedule::locked(fields.t_start(), fields.t_end(), cfg.schedule.dt, h, snaps),
        None => Schedule::new(fields.t_start(), fields.t_end(), cfg.schedule.dt, snaps),
    }
}

/// Ramps `states` off, starting at plateau time `t`.
fn ramp_off(
    grid: &Grid,
    fields: &FieldConfig,
    t: f64,
    dt: f64,
    states: &mut [SpinorField],
    pool: Option<&ThreadPool>,
) -> Result<()> {
    let branch = fields.with_plateau(t);
    let sched = if fields.laser_on {
        let steps = (branch.ramp / dt).round() as usize;
        Schedule::with_steps(t, dt, steps, &[])?
    } else {
        Schedule::new(t, branch.t_end(), dt, &[])?
    };
    let prop = Propagator::new(grid, &branch, sched.dt())?;
    prop.evolve(states, &sched, pool, |_| Ok(()))
}

struct Measured {
    row: RampedRow,
    amps: AmplitudeSet,
}

fn measure_ramped(t: f64, modes: &[Mode], states: &[SpinorField], basis: &FreeBasis) -> Result<Measured> {
    let amps = AmplitudeSet::new(t, modes, states, basis)?;
    let grid = basis.grid();
    let rho = amps.spatial_density_direct(basis);
    let chi_plus = if amps.has_positive_set() { Some(amps.positron_momentum_spectrum(grid)?.total()) } else { None };
    let row = RampedRow {
        t,
        n: amps.particle_number(),
        s_trace: amps.s_trace(),
        rho_integral: integrate_density(&rho, grid),
        chi_minus: amps.electron_momentum_spectrum(grid).total(),
        chi_plus,
        unitarity_error: amps.column_unitarity_error(),
    };
    Ok(Measured { row, amps })
}

struct Evolution {
    in_field: Vec<InFieldRow>,
    ramped: Vec<RampedRow>,
    occupation: Option<Occupation>,
    last: Option<AmplitudeSet>,
    final_states: FinalStates,
}

fn evolve_free_states(cfg: &RunConfig, pool: Option<&ThreadPool>, timings: &mut Vec<Timing>) -> Result<Evolution> {
    let grid = cfg.grid.build()?;
    let fields = cfg.fields();
    let in_field_spec = if grid.len() <= MAX_OCCUPATION_POINTS {
        Some(timed(timings, "in-field spectrum", || StaticSpectrum::compute(&grid, &static_well(cfg)))?)
    } else {
        None
    };
    let basis = FreeBasis::new(&grid);
    let modes = evolved_modes(&grid, cfg.evolution.cutoff, cfg.evolution.positive_set);
    let mut states = basis.states(&modes);

    let times = in_field_times(cfg, fields.plateau);
    let mut snaps = times.clone();
    snaps.push(fields.t_end());
    let sched = main_schedule(cfg, &fields, &snaps)?;
    let prop = Propagator::new(&grid, &fields, sched.dt())?;
    let last_in_field = times.len() - 1;
    let branch_every = cfg.schedule.branch_every;

    let mut in_field = Vec::new();
    let mut ramped = Vec::new();
    let mut occupation = None;
    let mut last = None;
    let start = Instant::now();
    prop.evolve(&mut states, &sched, pool, |snap| {
        if snap.index > last_in_field {
            let m = measure_ramped(fields.plateau, &modes, snap.states, &basis)?;
            ramped.push(m.row);
            last = Some(m.amps);
            return Ok(());
        }
        let t = times[snap.index];
        if let Some(spec) = &in_field_spec {
            let bc = bound_and_continuum_numbers(snap.states, spec)?;
            in_field.push(InFieldRow { t, n_b: bc.n_b, n_c: bc.n_c, n_gap: bc.n_gap });
            if snap.index == last_in_field {
                occupation = Some(instantaneous_occupation(snap.states, spec)?);
            }
        }
        if branch_every > 0 && snap.index % branch_every == 0 && snap.index < last_in_field {
            let mut branch = snap.states.to_vec();
            ramp_off(&grid, &fields, t, sched.dt(), &mut branch, pool)?;
            ramped.push(measure_ramped(t, &modes, &branch, &basis)?.row);
        }
        Ok(())
    })?;
    timings.push(Timing { stage: "evolution".into(), seconds: start.elapsed().as_secs_f64() });
    Ok(Evolution {
        in_field,
        ramped,
        occupation,
        last,
        final_states: FinalStates { time: sched.t_end(), modes, states },
    })
}

/// Filling series of the configured well on the decay grid. The ground state
/// is tracked alone, except in the two-state scenario, which tracks every gap state.
pub fn filling_series(cfg: &RunConfig, pool: Option<&ThreadPool>) -> Result<FillingSeries> {
    let small = cfg.embedding_grid()?.build()?;
    let big = cfg.decay.grid.build()?;
    let spec = StaticSpectrum::compute(&small, &static_well(cfg))?;
    let mut gap = spec.gap_indices();
    if gap.is_empty() {
        return Err(Error::NoBoundState);
    }
    if cfg.scenario != Scenario::TwoState {
        gap.truncate(1);
    }
    let energies: Vec<f64> = gap.iter().map(|&i| spec.energies()[i]).collect();
    let states = gap.iter().map(|&i| embed(&spec.state(i), &small, &big)).collect::<Result<Vec<_>>>()?;
    gap_filling(&big, &cfg.fields(), &energies, states, cfg.decay.periods, cfg.decay.sample_every, cfg.schedule.dt, pool)
}

/// Fit window from the analysis settings.
pub fn fit_window(cfg: &RunConfig) -> FitWindow {
    FitWindow { d_min: cfg.analysis.d_min, d_max: cfg.analysis.d_max, t_min: 0.0, min_samples: cfg.analysis.min_samples }
}

fn note<T>(notes: &mut Vec<String>, what: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("{what}: {e}"));
            None
        }
    }
}

/// Decay-rate fits from a filling series.
pub fn filling_fits(filling: &FillingSeries, scenario: Scenario, saturation: f64, w: FitWindow, fits: &mut Fits) {
    let n = if scenario == Scenario::TwoState { filling.total() } else { filling.state(0) };
    if let Some(series) = note(&mut fits.notes, "filling series", TimeSeries::new(filling.times.clone(), n)) {
        fits.gamma = note(&mut fits.notes, "decay rate", fit_decay_rate(&decay_probability(&series, saturation), w));
    }
    if scenario == Scenario::TwoState {
        if let Some(series) = note(&mut fits.notes, "ground series", TimeSeries::new(filling.times.clone(), filling.state(0))) {
            fits.gamma_ground =
                note(&mut fits.notes, "ground decay rate", fit_decay_rate(&decay_probability(&series, 1.0), w));
        }
    }
}

fn spectral_fits(cfg: &RunConfig, report: &mut RunReport) {
    let fits = &mut report.fits;
    if let Some(chi) = &report.chi_plus {
        let p_max = cfg.evolution.cutoff;
        let peak = [chi.peak(true, p_max), chi.peak(false, p_max)]
            .into_iter()
            .flatten()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(p, c)| (p.abs(), c));
        fits.positron_peak = peak;
        fits.positron_asymmetry = Some(chi.asymmetry());
        let es = positron_energy_spectrum(chi, cfg.analysis.energy_bins, cfg.analysis.energy_max);
        if let Some(es) = note(&mut fits.notes, "energy spectrum", es) {
            fits.energy_peak = es.peak();
            fits.fwhm = note(&mut fits.notes, "FWHM", fwhm(&es.energy, &es.density));
            report.energy_spectrum = Some(es);
        }
    }
    if let Some(occ) = &report.occupation {
        let e_max = free_energy(cfg.evolution.cutoff).min(3.0);
        fits.depletion_peak = occ.depletion_peak(-e_max, -1.0);
    }
}

fn series_fits(cfg: &RunConfig, report: &mut RunReport) {
    let fits = &mut report.fits;
    let ramped = TimeSeries::new(report.ramped.iter().map(|r| r.t).collect(), report.ramped.iter().map(|r| r.n).collect());
    if let Some(n) = note(&mut fits.notes, "particle number series", ramped) {
        if report.ramped.len() > 1 {
            fits.slope_n = note(&mut fits.notes, "late slope of N", late_slope(&n));
        }
        if cfg.scenario == Scenario::Supercritical {
            let d = decay_probability(&n, cfg.analysis.saturation);
            fits.gamma = note(&mut fits.notes, "decay rate", fit_decay_rate(&d, fit_window(cfg)));
        }
    }
    if !report.in_field.is_empty() {
        let nc = TimeSeries::new(
            report.in_field.iter().map(|r| r.t).collect(),
            report.in_field.iter().map(|r| r.n_c).collect(),
        );
        if let Some(nc) = note(&mut fits.notes, "continuum series", nc) {
            fits.slope_nc = note(&mut fits.notes, "late slope of N_c", late_slope(&nc));
        }
    }
}

fn invariant_checks(report: &RunReport, amps: Option<&AmplitudeSet>, basis: &FreeBasis) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    if !report.ramped.is_empty() {
        let worst = |f: &dyn Fn(&RampedRow) -> f64| report.ramped.iter().map(f).fold(0.0, f64::max);
        checks.push(Check::at_most("column unitarity", worst(&|r| r.unitarity_error), UNITARITY_TOL));
        checks.push(Check::at_most("four-way identity", worst(&|r| r.identity_error()), IDENTITY_TOL));
        if report.ramped.iter().all(|r| r.chi_plus.is_some()) {
            checks.push(Check::at_most("charge conservation", worst(&|r| r.charge_error().unwrap()), CHARGE_TOL));
        }
    }
    if let (Some(amps), Some(rho_s)) = (amps, &report.density) {
        let s = amps.s_matrix();
        checks.push(Check::at_most("S hermiticity", s.hermiticity_error(), 1e-12));
        checks.push(Check::at_most("S positivity", (-s.min_eigenvalue()?).max(0.0), PSD_TOL));
        let direct = amps.spatial_density_direct(basis);
        let scale = direct.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
        let diff = rho_s.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        checks.push(Check::at_most("density routes", diff, DENSITY_TOL));
    }
    Ok(checks)
}

/// Runs one scenario end to end. Sweeps go through [`sweep`].
pub fn run(cfg: &RunConfig, pool: Option<&ThreadPool>) -> Result<RunReport> {
    if cfg.scenario == Scenario::Sweep {
        return Err(Error::Config("sweep configurations run through the sweep command".into()));
    }
    cfg.validate()?;
    let mut timings = Vec::new();
    let (spectrum, _) = timed(&mut timings, "spectrum", || spectrum_report(cfg))?;
    if cfg.laser.enabled && spectrum.bound.is_empty() {
        return Err(Error::NoBoundState);
    }
    let evo = evolve_free_states(cfg, pool, &mut timings)?;
    let grid = cfg.grid.build()?;
    let basis = FreeBasis::new(&grid);

    let mut report = RunReport {
        config: cfg.clone(),
        spectrum,
        in_field: evo.in_field,
        ramped: evo.ramped,
        occupation: evo.occupation,
        chi_minus: None,
        chi_plus: None,
        energy_spectrum: None,
        density: None,
        filling: None,
        fits: Fits::default(),
        checks: vec![],
        timings,
        final_states: Some(evo.final_states),
    };
    report.ramped.sort_by(|a, b| a.t.total_cmp(&b.t));
    if let Some(amps) = &evo.last {
        report.chi_minus = Some(amps.electron_momentum_spectrum(&grid));
        report.chi_plus = amps.positron_momentum_spectrum(&grid).ok();
        let start = Instant::now();
        report.density = Some(spatial_density(&amps.s_matrix(), &basis));
        report.timings.push(Timing { stage: "S matrix".into(), seconds: start.elapsed().as_secs_f64() });
    }
    if cfg.decay.enabled {
        let filling = timed(&mut report.timings, "gap filling", || filling_series(cfg, pool))?;
        filling_fits(&filling, cfg.scenario, cfg.analysis.saturation, fit_window(cfg), &mut report.fits);
        report.filling = Some(filling);
    }
    series_fits(cfg, &mut report);
    spectral_fits(cfg, &mut report);
    report.checks = invariant_checks(&report, evo.last.as_ref(), &basis)?;
    Ok(report)
}

/// Decay rate of one tuned well in a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub config: RunConfig,
    pub rows: Vec<SweepRow>,
    pub series: Vec<FillingSeries>,
    pub law: Option<WidthLaw>,
    pub notes: Vec<String>,
    pub timings: Vec<Timing>,
}

/// Tunes a well of each width to the target ground energy and measures its filling rate.
pub fn sweep(cfg: &RunConfig, pool: Option<&ThreadPool>) -> Result<SweepReport> {
    if cfg.scenario != Scenario::Sweep {
        return Err(Error::Config(format!("scenario {} is not a sweep", cfg.scenario)));
    }
    cfg.validate()?;
    let small = cfg.embedding_grid()?.build()?;
    let big = cfg.decay.grid.build()?;
    let mut rows = Vec::new();
    let mut series = Vec::new();
    let mut notes = Vec::new();
    let mut timings = Vec::new();
    for &d in &cfg.sweep.d_values {
        let start = Instant::now();
        let tuned = tune_well_depth(d, cfg.well.w, TuneTarget::GroundEnergy(cfg.sweep.target_energy), &small)?;
        let well = FieldConfig::well(tuned.v0, d, cfg.well.w, cfg.plateau());
        let spec = StaticSpectrum::compute(&small, &well)?;
        let g = spec.ground_index().ok_or(Error::NoBoundState)?;
        let psi: Vec<Complex64> = spec.state(g);
        let w_b = state_width(&psi, &small)?;
        if tuned.v0 >= 2.0 {
            let flag = format!("tuned depth V0 = {:.4} is not subcritical; no filling computed", tuned.v0);
            notes.push(format!("D = {d}: {flag}"));
            let e_g = spec.energies()[g];
            rows.push(SweepRow { d, v0: tuned.v0, w: cfg.well.w, e_g, w_b, gamma: None, fit: None, flag: Some(flag) });
            series.push(FillingSeries { energies: vec![e_g], times: vec![], filling: vec![] });
            timings.push(Timing { stage: format!("D = {d}"), seconds: start.elapsed().as_secs_f64() });
            continue;
        }
        let mut run_cfg = cfg.clone();
        run_cfg.well.v0 = tuned.v0;
        run_cfg.well.d = d;
        let filling = gap_filling(
            &big,
            &run_cfg.fields(),
            &[spec.energies()[g]],
            vec![embed(&psi, &small, &big)?],
            cfg.decay.periods,
            cfg.decay.sample_every,
            cfg.schedule.dt,
            pool,
        )?;
        let mut fits = Fits::default();
        filling_fits(&filling, Scenario::Perturbative, 1.0, fit_window(cfg), &mut fits);
        let flag = fits.notes.first().cloned();
        if let Some(f) = &flag {
            notes.push(format!("D = {d}: {f}"));
        }
        rows.push(SweepRow {
            d,
            v0: tuned.v0,
            w: cfg.well.w,
            e_g: spec.energies()[g],
            w_b,
            gamma: fits.gamma.map(|f| f.gamma),
            fit: fits.gamma,
            flag,
        });
        series.push(filling);
        timings.push(Timing { stage: format!("D = {d}"), seconds: start.elapsed().as_secs_f64() });
    }
    let law = note(&mut notes, "width law", fit_width_law(&rows, (cfg.sweep.exclude[0], cfg.sweep.exclude[1])));
    Ok(SweepReport { config: cfg.clone(), rows, series, law, notes, timings })
}
