//! Run configuration: TOML schema, defaults, validation and named presets.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{default_ramp, FieldConfig};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Perturbative,
    TwoState,
    Supercritical,
    Sweep,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Perturbative => "perturbative",
            Scenario::TwoState => "two-state",
            Scenario::Supercritical => "supercritical",
            Scenario::Sweep => "sweep",
        }
    }

    fn default_laser(self) -> bool {
        !matches!(self, Scenario::Supercritical)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "perturbative" => Ok(Scenario::Perturbative),
            "two-state" | "twostate" => Ok(Scenario::TwoState),
            "supercritical" => Ok(Scenario::Supercritical),
            "sweep" => Ok(Scenario::Sweep),
            other => Err(Error::Config(format!(
                "unknown scenario `{other}` (expected perturbative, two-state, supercritical or sweep)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub length: f64,
    pub points: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.length, self.points)
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { length: 80.0, points: 512 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellConfig {
    pub v0: f64,
    pub d: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaserConfig {
    pub enabled: bool,
    pub omega: f64,
    /// Peak field in units of the critical field.
    pub field: f64,
}

impl Default for LaserConfig {
    fn default() -> Self {
        LaserConfig { enabled: true, omega: 0.45, field: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// Plateau duration T.
    pub plateau: f64,
    /// Ramp duration ΔT.
    pub ramp: f64,
    pub dt: f64,
    /// Spacing of in-field snapshots on the plateau.
    pub snapshot_interval: f64,
    /// Every this many snapshots the states are also ramped off and measured
    /// field-free; 0 keeps only the final one.
    pub branch_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    /// Evolved free modes satisfy |p| <= cutoff.
    pub cutoff: f64,
    /// Also evolve the positive-energy set, needed for positron spectra.
    pub positive_set: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig { cutoff: 4.0, positive_set: true }
    }
}

/// Gap-state filling measured by evolving the static gap states backward in
/// time on a large box, one laser period at a time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConfig {
    pub enabled: bool,
    pub grid: GridConfig,
    /// Sample every this many laser periods.
    pub sample_every: usize,
    /// Plateau length covered, in laser periods.
    pub periods: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Saturation value in `d = |saturation - N|`.
    pub saturation: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub min_samples: usize,
    pub energy_bins: usize,
    pub energy_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub d_values: Vec<f64>,
    pub target_energy: f64,
    /// Width window excluded from the rate law fit.
    pub exclude: [f64; 2],
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { d_values: vec![], target_energy: -0.4, exclude: [2.062, 2.197] }
    }
}

/// Fully validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub grid: GridConfig,
    /// Grid of the static spectrum.
    pub spectrum_grid: GridConfig,
    pub well: WellConfig,
    pub laser: LaserConfig,
    pub schedule: ScheduleConfig,
    pub evolution: EvolutionConfig,
    pub decay: DecayConfig,
    pub analysis: AnalysisConfig,
    pub sweep: SweepConfig,
    /// Reserved; the physics is deterministic.
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<String>,
    seed: Option<u64>,
    workers: Option<usize>,
    grid: Option<GridConfig>,
    spectrum: Option<RawSpectrum>,
    well: Option<RawWell>,
    laser: Option<LaserConfig>,
    schedule: Option<RawSchedule>,
    evolution: Option<EvolutionConfig>,
    decay: Option<RawDecay>,
    analysis: Option<RawAnalysis>,
    sweep: Option<SweepConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpectrum {
    grid: Option<GridConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWell {
    v0: Option<f64>,
    d: Option<f64>,
    w: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    plateau: Option<f64>,
    ramp: Option<f64>,
    dt: Option<f64>,
    snapshot_interval: Option<f64>,
    branch_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDecay {
    enabled: Option<bool>,
    grid: Option<GridConfig>,
    sample_every: Option<usize>,
    periods: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    saturation: Option<f64>,
    d_min: Option<f64>,
    d_max: Option<f64>,
    min_samples: Option<usize>,
    energy_bins: Option<usize>,
    energy_max: Option<f64>,
}

const REQUIRED: [&str; 3] = ["scenario", "well.v0", "well.d"];

/// Parses and validates a TOML configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    let well = raw.well.unwrap_or_default();
    let scenario_known = raw.scenario.as_deref().map(Scenario::from_str).transpose()?;
    let needs_well = scenario_known != Some(Scenario::Sweep);
    let mut missing = Vec::new();
    if raw.scenario.is_none() {
        missing.push(REQUIRED[0]);
    }
    if needs_well && well.v0.is_none() {
        missing.push(REQUIRED[1]);
    }
    if needs_well && well.d.is_none() {
        missing.push(REQUIRED[2]);
    }
    if !missing.is_empty() {
        return Err(Error::Config(format!("missing required keys: {}", missing.join(", "))));
    }
    let scenario = scenario_known.unwrap();

    let laser = raw.laser.unwrap_or(LaserConfig { enabled: scenario.default_laser(), ..LaserConfig::default() });
    let grid = raw.grid.unwrap_or_default();
    let spectrum_grid = raw.spectrum.and_then(|s| s.grid).unwrap_or(if grid.points <= 1024 {
        grid
    } else {
        GridConfig::default()
    });
    let sweep = raw.sweep.unwrap_or_default();
    let well = WellConfig {
        v0: well.v0.unwrap_or(0.0),
        d: well.d.unwrap_or(sweep.d_values.first().copied().unwrap_or(3.2)),
        w: well.w.unwrap_or(0.3),
    };

    let s = raw.schedule.unwrap_or_default();
    let half = PI / laser.omega;
    let plateau = s.plateau.unwrap_or(if laser.enabled { 480.0 * half } else { 282.0 });
    let ramp = s.ramp.unwrap_or(default_ramp(laser.enabled, laser.omega));
    let schedule = ScheduleConfig {
        plateau,
        ramp,
        dt: s.dt.unwrap_or(0.05),
        snapshot_interval: s.snapshot_interval.unwrap_or(if laser.enabled { 8.0 * half } else { 6.0 }),
        branch_every: s.branch_every.unwrap_or(if laser.enabled { 4 } else { 1 }),
    };

    let d = raw.decay.unwrap_or_default();
    let decay_enabled = d.enabled.unwrap_or(laser.enabled && scenario != Scenario::Supercritical);
    let period = 2.0 * half;
    let decay = DecayConfig {
        enabled: decay_enabled,
        grid: d.grid.unwrap_or(GridConfig { length: 2560.0, points: 8192 }),
        sample_every: d.sample_every.unwrap_or(8),
        periods: d.periods.unwrap_or(if laser.enabled { (plateau / period).round() as usize } else { 0 }),
    };

    let a = raw.analysis.unwrap_or_default();
    let analysis = AnalysisConfig {
        saturation: a.saturation.unwrap_or(if scenario == Scenario::TwoState { 2.0 } else { 1.0 }),
        d_min: a.d_min.unwrap_or(0.05),
        d_max: a.d_max.unwrap_or(0.8),
        min_samples: a.min_samples.unwrap_or(10),
        energy_bins: a.energy_bins.unwrap_or(200),
        energy_max: a.energy_max.unwrap_or(3.0),
    };

    let cfg = RunConfig {
        scenario,
        grid,
        spectrum_grid,
        well,
        laser,
        schedule,
        evolution: raw.evolution.unwrap_or_default(),
        decay,
        analysis,
        sweep,
        seed: raw.seed.unwrap_or(0),
        workers: raw.workers.unwrap_or(1),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.well;
        check(w.v0.is_finite() && w.v0 >= 0.0, || format!("well.v0 must be >= 0, got {}", w.v0))?;
        check(w.d.is_finite() && w.d > 0.0, || format!("well.d must be > 0, got {}", w.d))?;
        check(w.w.is_finite() && w.w > 0.0, || format!("well.w must be > 0, got {}", w.w))?;
        match self.scenario {
            Scenario::Perturbative | Scenario::TwoState => {
                check(w.v0 < 2.0, || {
                    format!("scenario {} needs a subcritical well (V0 < 2), got V0 = {}", self.scenario, w.v0)
                })?;
                check(self.laser.enabled, || format!("scenario {} needs the laser enabled", self.scenario))?;
            }
            Scenario::Supercritical => {
                check(w.v0 > 2.0, || format!("scenario supercritical needs V0 > 2, got V0 = {}", w.v0))?;
            }
            Scenario::Sweep => {
                check(!self.sweep.d_values.is_empty(), || "scenario sweep needs sweep.d_values".into())?;
                check(self.laser.enabled, || "scenario sweep needs the laser enabled".into())?;
                check(self.sweep.d_values.iter().all(|d| *d > 0.0), || "sweep.d_values must be positive".into())?;
                check(self.sweep.target_energy > -1.0 && self.sweep.target_energy < 1.0, || {
                    "sweep.target_energy must lie in (-1, 1)".into()
                })?;
                check(self.sweep.exclude[0] <= self.sweep.exclude[1], || "sweep.exclude must be ordered".into())?;
            }
        }
        let l = &self.laser;
        if l.enabled {
            check(l.omega > 0.0 && l.omega.is_finite(), || format!("laser.omega must be > 0, got {}", l.omega))?;
            check(l.field >= 0.0 && l.field.is_finite(), || format!("laser.field must be >= 0, got {}", l.field))?;
        }
        let s = &self.schedule;
        check(s.plateau >= 0.0 && s.plateau.is_finite(), || format!("schedule.plateau must be >= 0, got {}", s.plateau))?;
        check(s.ramp >= 0.0 && s.ramp.is_finite(), || format!("schedule.ramp must be >= 0, got {}", s.ramp))?;
        check(s.dt > 0.0 && s.dt <= 0.5, || format!("schedule.dt must be in (0, 0.5], got {}", s.dt))?;
        check(s.snapshot_interval > 0.0, || "schedule.snapshot_interval must be > 0".into())?;
        check(self.evolution.cutoff > 0.0, || format!("evolution.cutoff must be > 0, got {}", self.evolution.cutoff))?;
        let a = &self.analysis;
        check(a.saturation > 0.0, || "analysis.saturation must be > 0".into())?;
        check(a.d_min > 0.0 && a.d_min < a.d_max, || {
            format!("analysis window needs 0 < d_min < d_max, got [{}, {}]", a.d_min, a.d_max)
        })?;
        check(a.energy_bins > 0 && a.energy_max > 1.0, || "analysis energy binning needs bins > 0 and energy_max > 1".into())?;
        check(self.workers >= 1, || "workers must be >= 1".into())?;
        self.grid.build()?;
        self.spectrum_grid.build()?;
        check(self.spectrum_grid.points <= 2048, || "spectrum grid is limited to 2048 points".into())?;
        if self.decay.enabled {
            self.decay.grid.build()?;
            check(self.decay.sample_every > 0, || "decay.sample_every must be > 0".into())?;
            check(self.laser.enabled, || "decay measurement needs the laser enabled".into())?;
            self.embedding_grid()?;
        }
        self.fields().validate()
    }

    /// Field configuration of a single run. With the laser on, plateau and ramp
    /// are rounded to whole numbers of half periods.
    pub fn fields(&self) -> FieldConfig {
        let base = FieldConfig::well(self.well.v0, self.well.d, self.well.w, self.plateau());
        let f = if self.laser.enabled { base.with_laser(self.laser.field, self.laser.omega) } else { base };
        f.with_ramp(self.ramp())
    }

    pub fn ramp(&self) -> f64 {
        match self.half_period() {
            Some(h) => (self.schedule.ramp / h).round() * h,
            None => self.schedule.ramp,
        }
    }

    pub fn plateau(&self) -> f64 {
        match self.half_period() {
            Some(h) => (self.schedule.plateau / h).round() * h,
            None => self.schedule.plateau,
        }
    }

    pub fn half_period(&self) -> Option<f64> {
        self.laser.enabled.then(|| PI / self.laser.omega)
    }

    /// Small grid with the decay grid's spacing, on which the gap states are computed.
    pub fn embedding_grid(&self) -> Result<GridConfig> {
        let g = self.decay.grid;
        let dx = g.length / g.points as f64;
        let mut points = g.points;
        while points > 8 && (points / 2) as f64 * dx >= 64.0 {
            points /= 2;
        }
        check(points as f64 * dx >= 32.0 && points <= 2048, || {
            format!("decay grid spacing {dx} leaves no usable embedding box")
        })?;
        Ok(GridConfig { length: points as f64 * dx, points })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 6] =
    ["perturbative-a", "perturbative-b", "two-state", "supercritical-a", "supercritical-b", "sweep"];

/// Built-in parameter sets.
pub fn preset(name: &str) -> Result<RunConfig> {
    let key = name.to_ascii_lowercase().replace('_', "-");
    let text = match key.as_str() {
        "perturbative-a" => {
            "scenario = \"perturbative\"\n[well]\nv0 = 1.726\nd = 3.2\nw = 0.3\n".to_string()
        }
        "perturbative-b" => {
            "scenario = \"perturbative\"\n[well]\nv0 = 1.9\nd = 2.443\nw = 0.3\n".to_string()
        }
        "two-state" => "scenario = \"two-state\"\n[well]\nv0 = 1.584\nd = 4.5\nw = 0.3\n\
             [schedule]\nplateau = 6702.0\n[decay]\nsample_every = 16\n"
            .to_string(),
        "supercritical-a" => "scenario = \"supercritical\"\n[well]\nv0 = 2.383\nd = 4.0\nw = 0.3\n\
             [grid]\nlength = 256.0\npoints = 1024\n[spectrum]\ngrid = { length = 80.0, points = 512 }\n[schedule]\nplateau = 282.0\nsnapshot_interval = 3.0\n"
            .to_string(),
        "supercritical-b" => "scenario = \"supercritical\"\n[well]\nv0 = 2.522\nd = 3.2\nw = 0.3\n\
             [grid]\nlength = 256.0\npoints = 1024\n[spectrum]\ngrid = { length = 80.0, points = 512 }\n[schedule]\nplateau = 282.0\nsnapshot_interval = 3.0\n"
            .to_string(),
        "sweep" => "scenario = \"sweep\"\n[sweep]\nd_values = [2.3, 2.443, 2.8, 3.2, 3.6, 3.8]\n\
             target_energy = -0.4\n"
            .to_string(),
        _ => {
            return Err(Error::Config(format!("unknown preset `{name}` (known: {})", PRESETS.join(", "))));
        }
    };
    parse_config(&text)
}
