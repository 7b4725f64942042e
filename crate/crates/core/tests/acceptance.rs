//! Acceptance criteria. Each test prints one `PASS` or `FAIL` line and then
//! asserts it. Expensive runs are shared between tests through `OnceLock`s.

use std::sync::OnceLock;

use paircreate::analysis::{decay_probability, fit_decay_rate, TimeSeries};
use paircreate::config::{parse_config, preset, RunConfig, Scenario};
use paircreate::filling::FillingSeries;
use paircreate::observables::{evolved_modes, AmplitudeSet, FreeBasis};
use paircreate::output::write_run;
use paircreate::pipeline::{filling_series, fit_window, run, spectrum_report, sweep, worker_pool, RunReport};
use paircreate::propagator::richardson_ratio;
use paircreate::spectrum::{tune_well_depth, StaticSpectrum, TuneTarget};
use paircreate::{FieldConfig, Grid, Propagator, Schedule};

fn verdict(id: &str, pass: bool, detail: String) {
    println!("{} {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{id}: {detail}");
}

fn sci(x: Option<f64>) -> String {
    x.map_or("none".into(), |v| format!("{v:.4e}"))
}

fn desk() -> Grid {
    Grid::new(80.0, 512).unwrap()
}

static PERT_B: OnceLock<RunReport> = OnceLock::new();
static FILL_A: OnceLock<FillingSeries> = OnceLock::new();
static SUPER_A: OnceLock<RunReport> = OnceLock::new();
static SUPER_B: OnceLock<RunReport> = OnceLock::new();

fn pert_b() -> &'static RunReport {
    PERT_B.get_or_init(|| run(&preset("perturbative-b").unwrap(), None).unwrap())
}

fn fill_a() -> &'static FillingSeries {
    FILL_A.get_or_init(|| filling_series(&preset("perturbative-a").unwrap(), None).unwrap())
}

fn super_a() -> &'static RunReport {
    SUPER_A.get_or_init(|| run(&preset("supercritical-a").unwrap(), None).unwrap())
}

fn super_b() -> &'static RunReport {
    SUPER_B.get_or_init(|| run(&preset("supercritical-b").unwrap(), None).unwrap())
}

fn ground_energy(v0: f64, d: f64) -> f64 {
    let spec = StaticSpectrum::compute(&desk(), &FieldConfig::well(v0, d, 0.3, 0.0)).unwrap();
    spec.energies()[spec.ground_index().unwrap()]
}

#[test]
fn c01_static_spectrum() {
    let a = ground_energy(1.726, 3.2);
    let b = ground_energy(1.9, 2.443);
    let pass = (a + 0.4).abs() <= 0.01 && (b + 0.4).abs() <= 0.01;
    verdict("C1 static spectrum", pass, format!("E_g(1.726, 3.2) = {a:.5}, E_g(1.9, 2.443) = {b:.5}, want -0.40 +- 0.01"));
}

#[test]
fn c02_tuner() {
    let g = desk();
    let a = tune_well_depth(3.2, 0.3, TuneTarget::GroundEnergy(-0.4), &g).unwrap().v0;
    let b = tune_well_depth(2.443, 0.3, TuneTarget::GroundEnergy(-0.4), &g).unwrap().v0;
    let c = tune_well_depth(4.5, 0.3, TuneTarget::LevelSpacing(0.45), &g);
    let c_text = match &c {
        Ok(t) => format!("{:.4}", t.v0),
        Err(e) => format!("error ({e})"),
    };
    let pass = (a - 1.726).abs() <= 0.02
        && (b - 1.9).abs() <= 0.02
        && c.as_ref().is_ok_and(|t| (t.v0 - 1.584).abs() <= 0.02);
    verdict(
        "C2 tuner",
        pass,
        format!("V0(3.2) = {a:.4} (1.726), V0(2.443) = {b:.4} (1.900), V0(4.5, spacing 0.45) = {c_text} (1.584); tolerance 0.02"),
    );
}

/// Field-free particle number after a run without laser.
fn null_run(v0: f64, ramp: f64) -> f64 {
    let text = format!(
        "scenario = \"supercritical\"\n[well]\nv0 = 2.1\nd = 2.443\n[schedule]\nplateau = 50.0\nramp = {ramp}\nbranch_every = 0\n"
    );
    let mut cfg = parse_config(&text).unwrap();
    cfg.well.v0 = v0;
    cfg.evolution.positive_set = false;
    let g = cfg.grid.build().unwrap();
    let fields = cfg.fields();
    let basis = FreeBasis::new(&g);
    let modes = evolved_modes(&g, cfg.evolution.cutoff, false);
    let mut states = basis.states(&modes);
    let sched = Schedule::new(fields.t_start(), fields.t_end(), cfg.schedule.dt, &[]).unwrap();
    Propagator::new(&g, &fields, sched.dt()).unwrap().evolve(&mut states, &sched, None, |_| Ok(())).unwrap();
    AmplitudeSet::new(sched.t_end(), &modes, &states, &basis).unwrap().particle_number()
}

#[test]
fn c03_vacuum_null() {
    let well = null_run(1.9, 30.0);
    let free = null_run(0.0, 30.0);
    let pass = well < 1e-3 && free < 1e-6;
    verdict("C3 vacuum null", pass, format!("N(subcritical well, no laser) = {well:.3e} (< 1e-3), N(V0 = 0) = {free:.3e} (< 1e-6)"));
}

fn worst_identity(r: &RunReport) -> (f64, f64, usize) {
    let id = r.ramped.iter().map(|x| x.identity_error()).fold(0.0, f64::max);
    let charge = r.ramped.iter().map(|x| x.charge_error().unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    (id, charge, r.ramped.len())
}

#[test]
fn c04_four_way_identity() {
    let (ia, ca, na) = worst_identity(pert_b());
    let (ib, cb, nb) = worst_identity(super_b());
    let pass = ia <= 1e-6 && ib <= 1e-6 && ca <= 1e-4 && cb <= 1e-4;
    verdict(
        "C4 four-way identity",
        pass,
        format!(
            "perturbative ({na} snapshots): identity {ia:.2e}, charge {ca:.2e}; supercritical ({nb} snapshots): identity {ib:.2e}, charge {cb:.2e}; limits 1e-6 relative, 1e-4"
        ),
    );
}

fn ground_rate(f: &FillingSeries, cfg: &RunConfig) -> (Option<f64>, f64) {
    let n = TimeSeries::new(f.times.clone(), f.state(0)).unwrap();
    let d = decay_probability(&n, 1.0);
    let d_min = d.values().iter().cloned().fold(f64::INFINITY, f64::min);
    (fit_decay_rate(&d, fit_window(cfg)).ok().map(|x| x.gamma), d_min)
}

#[test]
fn c05_enhancement_ordering() {
    let cfg = preset("perturbative-a").unwrap();
    let (black, d_black) = ground_rate(pert_b().filling.as_ref().unwrap(), &cfg);
    let (blue, d_blue) = ground_rate(fill_a(), &cfg);
    let ratio = match (black, blue) {
        (Some(a), Some(b)) => a / b,
        _ => f64::NAN,
    };
    let pass = (ratio - 1.72).abs() <= 0.35 && d_black <= 0.3 && d_blue <= 0.3;
    verdict(
        "C5 enhancement ordering",
        pass,
        format!(
            "Gamma(2.443) = {}, Gamma(3.2) = {}, ratio = {ratio:.3} (1.72 +- 0.35); min d = {d_black:.3}, {d_blue:.3} (must reach 0.3)",
            sci(black),
            sci(blue)
        ),
    );
}

#[test]
fn c06_positron_spectrum_and_depletion() {
    let r = pert_b();
    let (p, _) = r.fits.positron_peak.unwrap();
    let asym = r.fits.positron_asymmetry.unwrap();
    let (e_dep, _) = r.fits.depletion_peak.unwrap();
    let pass = (p - 0.71).abs() <= 0.05 && asym >= 0.05 && (e_dep + 1.23).abs() <= 0.05;
    verdict(
        "C6 positron spectrum",
        pass,
        format!("peak |p| = {p:.4} (0.71 +- 0.05), asymmetry = {asym:.3} (>= 0.05), depletion peak E = {e_dep:.4} (-1.23 +- 0.05)"),
    );
}

#[test]
fn c07_saturation_and_linear_growth() {
    let r = pert_b();
    let f = r.filling.as_ref().unwrap();
    let n_b = *f.state(0).last().unwrap();
    let n_b_desk = r.in_field.last().unwrap().n_b;
    let sn = r.fits.slope_n.map(|s| s.slope);
    let sc = r.fits.slope_nc.map(|s| s.slope);
    let rel = match (sn, sc) {
        (Some(a), Some(b)) => ((a - b) / b).abs(),
        _ => f64::INFINITY,
    };
    let pass = (n_b - 1.0).abs() <= 0.05 && rel <= 0.03;
    verdict(
        "C7 saturation and growth",
        pass,
        format!(
            "N_b(T = {:.0}) = {n_b:.4} on the large box, {n_b_desk:.4} on the desk box (1 +- 0.05); slope(N) = {}, slope(N_c) = {}, relative difference {rel:.3} (<= 0.03)",
            f.times.last().unwrap(),
            sci(sn),
            sci(sc)
        ),
    );
}

#[test]
fn c08_two_state() {
    let cfg = preset("two-state").unwrap();
    let f = filling_series(&cfg, None).unwrap();
    let total = TimeSeries::new(f.times.clone(), f.total()).unwrap();
    let ground = TimeSeries::new(f.times.clone(), f.state(0)).unwrap();
    let n_end = total.last().unwrap().1;
    let r2 = |s: &TimeSeries, sat: f64| fit_decay_rate(&decay_probability(s, sat), fit_window(&cfg)).map(|x| x.r_squared);
    let two = r2(&total, 2.0);
    let one = r2(&ground, 1.0);
    let pass = (2.0 - n_end).abs() <= 0.1 && two.as_ref().is_ok_and(|v| *v > 0.98) && one.as_ref().map_or(true, |v| *v < 0.9);
    verdict(
        "C8 two-state",
        pass,
        format!(
            "gap levels {:?}; N(T = {:.0}) = {n_end:.4} (approaching 2); R^2 of |2 - N| = {two:?} (> 0.98); R^2 of |1 - N_b| = {one:?} (< 0.9)",
            f.energies.iter().map(|e| (e * 1e4).round() / 1e4).collect::<Vec<_>>(),
            f.times.last().unwrap()
        ),
    );
}

#[test]
fn c09_supercritical() {
    let (a, b) = (super_a(), super_b());
    let qa = a.spectrum.quasibound.as_ref().unwrap().energy;
    let qb = b.spectrum.quasibound.as_ref().unwrap().energy;
    let (na, nb) = (a.final_number().unwrap(), b.final_number().unwrap());
    let (pa, _) = a.fits.energy_peak.unwrap();
    let (pb, _) = b.fits.energy_peak.unwrap();
    let (wa, wb) = (a.fits.fwhm.unwrap(), b.fits.fwhm.unwrap());
    let ga = a.fits.gamma.map(|g| g.gamma);
    let gb = b.fits.gamma.map(|g| g.gamma);
    let width_ratio = wb / wa;
    let rate_ratio = match (ga, gb) {
        (Some(x), Some(y)) => y / x,
        _ => f64::NAN,
    };
    let agreement = (width_ratio / rate_ratio - 1.0).abs();
    let pass = (qa + 1.1).abs() <= 0.03
        && (qb + 1.1).abs() <= 0.03
        && (na - 1.0).abs() <= 0.03
        && (nb - 1.0).abs() <= 0.03
        && (pa - 1.1).abs() <= 0.05
        && (pb - 1.1).abs() <= 0.05
        && wb > wa
        && agreement <= 0.25;
    verdict(
        "C9 supercritical",
        pass,
        format!(
            "E_qb = {qa:.4}, {qb:.4} (-1.10 +- 0.03); N(T) = {na:.4}, {nb:.4} (1 +- 0.03); S+ peak = {pa:.4}, {pb:.4} (1.10 +- 0.05); FWHM(4.0) = {wa:.4}, FWHM(3.2) = {wb:.4}; width ratio {width_ratio:.3} vs rate ratio {rate_ratio:.3} (Gamma = {}, {}), mismatch {agreement:.3} (<= 0.25)",
            sci(ga),
            sci(gb)
        ),
    );
}

#[test]
fn c10_width_sweep() {
    let cfg = preset("sweep").unwrap();
    let s = sweep(&cfg, None).unwrap();
    let rows: Vec<String> = s
        .rows
        .iter()
        .map(|r| format!("D={} W_b={:.3} G={}", r.d, r.w_b, r.gamma.map_or("-".into(), |g| format!("{g:.3e}"))))
        .collect();
    let (used, decreasing, r2, c) = match &s.law {
        Some(l) => (l.used, l.strictly_decreasing, l.r_squared, l.c),
        None => (0, false, f64::NAN, f64::NAN),
    };
    let pass = used >= 5 && decreasing && r2 > 0.9;
    verdict(
        "C10 width sweep",
        pass,
        format!("{}; {used} wells used, strictly decreasing = {decreasing}, R^2 = {r2:.4} (> 0.9), C = {c:.3}", rows.join(", ")),
    );
}

fn short_run(length: f64, points: usize, cutoff: f64) -> f64 {
    let text = format!(
        "scenario = \"perturbative\"\n[well]\nv0 = 1.9\nd = 2.443\n[grid]\nlength = {length}\npoints = {points}\n\
         [spectrum]\ngrid = {{ length = 80.0, points = 512 }}\n\
         [evolution]\ncutoff = {cutoff}\npositive_set = false\n[schedule]\nplateau = 279.25\nbranch_every = 0\n[decay]\nenabled = false\n"
    );
    let cfg = parse_config(&text).unwrap();
    run(&cfg, None).unwrap().final_number().unwrap()
}

#[test]
fn c11_numerics() {
    // step convergence on a wave packet crossing the laser-dressed well
    let g = Grid::new(40.0, 256).unwrap();
    let fields = FieldConfig::well(1.9, 2.443, 0.3, 20.0).with_laser(0.3, 0.45).with_ramp(10.0);
    let basis = FreeBasis::new(&g);
    let modes = evolved_modes(&g, 1.0, false);
    let initial = basis.states(&modes);
    let sched = Schedule::new(-10.0, 10.0, 0.1, &[]).unwrap();
    let ratio = richardson_ratio(&g, &fields, &initial, &sched, None).unwrap();

    let base = short_run(80.0, 512, 4.0);
    let fine = short_run(80.0, 1024, 4.0);
    let wide = short_run(80.0, 512, 8.0);
    let dn = ((fine - base) / base).abs();
    let dp = ((wide - base) / base).abs();

    let tiny = "scenario = \"perturbative\"\n[well]\nv0 = 1.9\nd = 2.443\n[grid]\nlength = 20.0\npoints = 64\n\
        [evolution]\ncutoff = 3.0\n[schedule]\nplateau = 41.9\nramp = 14.0\nsnapshot_interval = 13.96\nbranch_every = 1\n\
        [decay]\ngrid = { length = 80.0, points = 256 }\nsample_every = 1\nperiods = 3\n";
    let cfg = parse_config(tiny).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (dir, workers) in dirs.iter().zip([1usize, 4]) {
        let pool = worker_pool(workers).unwrap();
        let mut c = cfg.clone();
        c.workers = workers;
        write_run(dir.path(), &run(&c, pool.as_ref()).unwrap(), None).unwrap();
    }
    let mut identical = true;
    for entry in std::fs::read_dir(dirs[0].path()).unwrap() {
        let name = entry.unwrap().file_name();
        if name == "manifest.json" {
            continue;
        }
        identical &= std::fs::read(dirs[0].path().join(&name)).unwrap() == std::fs::read(dirs[1].path().join(&name)).unwrap();
    }
    let pass = (3.0..=5.0).contains(&ratio) && dn < 0.01 && dp < 0.01 && identical;
    verdict(
        "C11 numerics",
        pass,
        format!(
            "Richardson ratio {ratio:.3} ([3, 5]); N(T_end) = {base:.5e}, doubled N: {dn:.2e}, doubled p_max: {dp:.2e} (< 1e-2); byte-identical across workers: {identical}"
        ),
    );
}

#[test]
fn spectrum_reports_match_the_presets() {
    for (name, want) in [("perturbative-a", -0.4), ("perturbative-b", -0.4)] {
        let (s, _) = spectrum_report(&preset(name).unwrap()).unwrap();
        assert!((s.ground().unwrap().energy - want).abs() < 0.01);
        assert!(s.quasibound.is_none());
    }
    let cfg = preset("supercritical-a").unwrap();
    assert_eq!(cfg.scenario, Scenario::Supercritical);
}
