use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use paircreate::analysis::FitWindow;
use paircreate::config::{parse_config, preset, RunConfig, PRESETS};
use paircreate::output::{reanalyze, write_checkpoint, write_run, write_spectrum, write_sweep};
use paircreate::pipeline::{run, spectrum_report, sweep, worker_pool};
use paircreate::spectrum::{tune_well_depth, TuneTarget};
use paircreate::{Error, Grid};

/// Vacuum pair creation in a binding well, with and without a laser.
#[derive(Parser)]
#[command(name = "paircreate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Static spectrum of the configured well.
    Spectrum(Common),
    /// Well depth giving a target ground energy or level spacing.
    Tune(TuneArgs),
    /// Full evolution run of one scenario.
    Run(RunArgs),
    /// Rate-versus-width sweep over well widths.
    Sweep(Common),
    /// Recompute the fits on series stored in an output directory.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, env = "PAIRCREATE_CONFIG", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in parameter set.
    #[arg(long, env = "PAIRCREATE_PRESET")]
    preset: Option<String>,
    #[arg(long, env = "PAIRCREATE_WORKERS")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, env = "PAIRCREATE_OUT")]
    out: Option<PathBuf>,
    /// Momentum cutoff of the evolved free modes.
    #[arg(long, env = "PAIRCREATE_CUTOFF")]
    cutoff: Option<f64>,
    /// Largest time step.
    #[arg(long, env = "PAIRCREATE_DT")]
    dt: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Also write the final evolved states as a binary checkpoint.
    #[arg(long)]
    checkpoint: bool,
}

#[derive(Args)]
struct TuneArgs {
    /// Well width parameter D.
    #[arg(long)]
    d: f64,
    #[arg(long, default_value_t = 0.3)]
    w: f64,
    /// Target ground-state energy.
    #[arg(long, conflicts_with = "spacing", allow_hyphen_values = true)]
    energy: Option<f64>,
    /// Target spacing of the two lowest gap states.
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long, default_value_t = 80.0)]
    length: f64,
    #[arg(long, default_value_t = 512)]
    points: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Directory written by `run`.
    #[arg(long, env = "PAIRCREATE_OUT")]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    saturation: f64,
    #[arg(long, default_value_t = 0.05)]
    d_min: f64,
    #[arg(long, default_value_t = 0.8)]
    d_max: f64,
    #[arg(long, default_value_t = 0.0)]
    t_min: f64,
    #[arg(long, default_value_t = 10)]
    min_samples: usize,
}

struct Loaded {
    cfg: RunConfig,
    source: Option<String>,
    label: String,
}

fn load(c: &Common) -> Result<Loaded, Error> {
    let (mut cfg, source, label) = match (&c.config, &c.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let label = path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
            (parse_config(&text)?, Some(text), label)
        }
        (None, Some(name)) => (preset(name)?, None, name.clone()),
        (None, None) => {
            return Err(Error::Config(format!(
                "give --config <file> or --preset <name> (presets: {})",
                PRESETS.join(", ")
            )))
        }
    };
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    if let Some(p) = c.cutoff {
        cfg.evolution.cutoff = p;
    }
    if let Some(dt) = c.dt {
        cfg.schedule.dt = dt;
    }
    cfg.validate()?;
    Ok(Loaded { cfg, source, label })
}

fn out_dir(c: &Common, label: &str) -> PathBuf {
    c.out.clone().unwrap_or_else(|| Path::new("out").join(label))
}

fn cmd_spectrum(c: &Common) -> Result<i32, Error> {
    let l = load(c)?;
    let (s, _) = spectrum_report(&l.cfg)?;
    for b in &s.bound {
        println!("gap state {:>4}  E = {:+.6}  W = {:.4}", b.index, b.energy, b.width);
    }
    if let Some(q) = &s.quasibound {
        println!("quasibound {:>4}  E = {:+.6}  P_in = {:.4}", q.index, q.energy, q.localization);
    }
    let dir = out_dir(c, &l.label);
    write_spectrum(&dir, &l.cfg, &s, l.source.as_deref())?;
    println!("wrote {}", dir.display());
    Ok(0)
}

fn cmd_tune(t: &TuneArgs) -> Result<i32, Error> {
    let grid = Grid::new(t.length, t.points)?;
    let target = match (t.energy, t.spacing) {
        (_, Some(s)) => TuneTarget::LevelSpacing(s),
        (Some(e), None) => TuneTarget::GroundEnergy(e),
        (None, None) => TuneTarget::GroundEnergy(-0.4),
    };
    let r = tune_well_depth(t.d, t.w, target, &grid)?;
    println!("D = {}  V0 = {:.6}  achieved = {:.6}  evaluations = {}", t.d, r.v0, r.achieved, r.evaluations);
    Ok(0)
}

fn cmd_run(a: &RunArgs) -> Result<i32, Error> {
    let l = load(&a.common)?;
    let pool = worker_pool(l.cfg.workers)?;
    let report = run(&l.cfg, pool.as_ref())?;
    let dir = out_dir(&a.common, &l.label);
    write_run(&dir, &report, l.source.as_deref())?;
    if a.checkpoint {
        if let Some(f) = &report.final_states {
            write_checkpoint(&dir.join("states.bin"), &l.cfg.grid.build()?, f.time, &f.modes, &f.states)?;
        }
    }
    if let Some(n) = report.final_number() {
        println!("N(T) = {n:.6e}");
    }
    if let Some(g) = &report.fits.gamma {
        println!("Gamma = {:.6e}  (R^2 = {:.4}, {} samples)", g.gamma, g.r_squared, g.samples);
    }
    for note in &report.fits.notes {
        println!("note: {note}");
    }
    for c in &report.checks {
        println!("{} {}: {:.3e} (limit {:.1e})", if c.passed { "ok  " } else { "FAIL" }, c.name, c.value, c.limit);
    }
    println!("wrote {}", dir.display());
    Ok(if report.passed() { 0 } else { 3 })
}

fn cmd_sweep(c: &Common) -> Result<i32, Error> {
    let l = load(c)?;
    let pool = worker_pool(l.cfg.workers)?;
    let report = sweep(&l.cfg, pool.as_ref())?;
    for r in &report.rows {
        let g = r.gamma.map_or("-".to_string(), |g| format!("{g:.4e}"));
        println!("D = {:.3}  V0 = {:.4}  W_b = {:.4}  Gamma = {g}", r.d, r.v0, r.w_b);
    }
    if let Some(law) = &report.law {
        println!("C = {:.4}  R^2 = {:.4}  decreasing = {}", law.c, law.r_squared, law.strictly_decreasing);
    }
    let dir = out_dir(c, &l.label);
    write_sweep(&dir, &report, l.source.as_deref())?;
    println!("wrote {}", dir.display());
    Ok(0)
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<i32, Error> {
    let window = FitWindow { d_min: a.d_min, d_max: a.d_max, t_min: a.t_min, min_samples: a.min_samples };
    if !(a.d_min > 0.0 && a.d_min < a.d_max) {
        return Err(Error::Config(format!("fit window needs 0 < d_min < d_max, got [{}, {}]", a.d_min, a.d_max)));
    }
    let r = reanalyze(&a.out, window, a.saturation)?;
    match &r.gamma {
        Some(g) => println!("Gamma = {:.6e}  (R^2 = {:.4}, {} samples)", g.gamma, g.r_squared, g.samples),
        None => println!("Gamma: no fit"),
    }
    for note in &r.notes {
        println!("note: {note}");
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Spectrum(c) => cmd_spectrum(c),
        Command::Tune(t) => cmd_tune(t),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(c) => cmd_sweep(c),
        Command::Analyze(a) => cmd_analyze(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
