//! Experiment drivers behind the `twoweight` command line.
//!
//! Every experiment is a pure function of its [`ExperimentConfig`]: instance
//! `i` draws its fields from seeds derived from `(seed, i)`, instances run in
//! parallel, and rows are emitted in instance order, so identical configs give
//! byte-identical reports.

mod checks;
mod sweeps;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constants::{ParentMode, SearchBudget};
use crate::dyadic::Lattice;
use crate::error::{Error, Result};
use crate::field::{power_weight, random_field, FieldModel, HalfSpaceField, Root, WeightField};
use crate::operators::OperatorKind;
use crate::proof::doubling_threshold;
use crate::scalar::{Exponent, Threshold};

pub use checks::{
    constants, decompose, domination_checks, fractional, poisson, ConstantsRun, DecomposeRun, Decomposition,
    DominationCheck, FractionalInstance, FractionalRun, InstanceConstants, InstanceDecompositions, PoissonInstance,
    PoissonRun,
};
pub use sweeps::{
    dthreshold, equivalence, equivalence_row, least_squares_slope, origin_growth, power_weight_sweep, CensusEntry,
    DThresholdRow, DThresholdRun, DThresholdSummary, EquivalenceRun, EquivalenceSettings, Jump, PowerWeightRow,
    PowerWeightRun, PowerWeightSummary, RatioSummary, SweepRow,
};

/// Version stamped into every report; bumped when columns or keys change.
pub const SCHEMA_VERSION: u32 = 1;

/// Largest lattice, in cells, any experiment will allocate.
pub const CELL_GUARD: usize = 1 << 22;

/// Largest lattice, in cells, decomposed in exact rational arithmetic.
pub const EXACT_CELL_GUARD: usize = 1 << 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Constants,
    Decompose,
    Equivalence,
    PowerWeight,
    Dthreshold,
    Poisson,
    Fractional,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Constants => "constants",
            Experiment::Decompose => "decompose",
            Experiment::Equivalence => "equivalence",
            Experiment::PowerWeight => "power-weight",
            Experiment::Dthreshold => "dthreshold",
            Experiment::Poisson => "poisson",
            Experiment::Fractional => "fractional",
        }
    }
}

/// How one weight of a pair is produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Uniform {
        #[serde(default = "one")]
        density: f64,
    },
    Lognormal {
        #[serde(default)]
        mu: f64,
        #[serde(default = "one")]
        s: f64,
    },
    Atoms {
        count: usize,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `|x - center|^exponent` on the centred root `[-1, 1)^d`.
    Power {
        exponent: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// A field saved with [`WeightField::save`] (or a half-space field for the Poisson experiment).
    File { path: PathBuf },
    Zero,
}

fn one() -> f64 {
    1.0
}

impl FieldSpec {
    fn is_power(&self) -> bool {
        matches!(self, FieldSpec::Power { .. })
    }

    fn build(&self, lattice: Lattice, root: Root, seed: u64) -> Result<WeightField> {
        match self {
            FieldSpec::Uniform { density } => WeightField::uniform(lattice, root, *density),
            FieldSpec::Lognormal { mu, s } => random_field(lattice, root, &FieldModel::LogNormal { mu: *mu, s: *s }, seed),
            FieldSpec::Atoms { count, amplitude } => {
                random_field(lattice, root, &FieldModel::SparseAtoms { count: *count, amplitude: *amplitude }, seed)
            }
            FieldSpec::Power { exponent, center } => {
                let center = center.clone().unwrap_or_else(|| vec![0.0; lattice.dim()]);
                power_weight(lattice, root, *exponent, &center)
            }
            FieldSpec::File { path } => {
                let field = WeightField::load(path).map_err(|e| input_error(path, e))?;
                if field.lattice() != &lattice {
                    return Err(Error::Input(format!(
                        "{}: lattice d={} L={} does not match the configured d={} L={}",
                        path.display(),
                        field.lattice().dim(),
                        field.lattice().level(),
                        lattice.dim(),
                        lattice.level()
                    )));
                }
                Ok(field)
            }
            FieldSpec::Zero => WeightField::zero(lattice, root),
        }
    }

    fn build_half_space(&self, lattice: Lattice, root: Root, seed: u64) -> Result<HalfSpaceField> {
        match self {
            FieldSpec::Uniform { density } => HalfSpaceField::uniform(lattice, root, *density),
            FieldSpec::Lognormal { mu, s } => {
                HalfSpaceField::random(lattice, root, &FieldModel::LogNormal { mu: *mu, s: *s }, seed)
            }
            FieldSpec::Atoms { count, amplitude } => HalfSpaceField::random(
                lattice,
                root,
                &FieldModel::SparseAtoms { count: *count, amplitude: *amplitude },
                seed,
            ),
            FieldSpec::Zero => HalfSpaceField::uniform(lattice, root, 0.0),
            FieldSpec::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| input_error(path, e.into()))?;
                let field = HalfSpaceField::from_json(&text).map_err(|e| input_error(path, e))?;
                if field.lattice() != &lattice {
                    return Err(Error::Input(format!("{}: half-space lattice does not match the config", path.display())));
                }
                Ok(field)
            }
            FieldSpec::Power { .. } => Err(Error::param("power weights are not available on the half-space")),
        }
    }
}

fn input_error(path: &Path, e: Error) -> Error {
    match e {
        Error::Io(_) | Error::Json(_) | Error::Input(_) | Error::Mismatch(_) | Error::InvalidParameter(_) => {
            Error::Input(format!("{}: {e}", path.display()))
        }
        other => other,
    }
}

/// The lattice stored in a field file, read without building the field twice.
fn file_lattice(path: &Path) -> Result<(Lattice, Root)> {
    let field = WeightField::load(path).map_err(|e| input_error(path, e))?;
    Ok((*field.lattice(), *field.root()))
}

/// One experiment run. Unset fields take per-experiment defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: Option<Experiment>,
    pub dimension: usize,
    pub level: Option<u32>,
    pub p: f64,
    pub q: Option<f64>,
    pub rho: f64,
    #[serde(rename = "D")]
    pub d: Option<f64>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
    pub d_grid: Option<Vec<f64>>,
    pub instances: usize,
    pub seed: u64,
    pub exact: bool,
    pub output: Option<PathBuf>,
    pub sigma: Option<FieldSpec>,
    pub w: Option<FieldSpec>,
    pub parent_mode: Option<ParentMode>,
    pub q0_levels: Option<Vec<u32>>,
    pub budget: Option<SearchBudget>,
    pub operator: Option<OperatorKind>,
    /// Adds a wall-clock column to sweeps; off by default since it breaks byte-identical output.
    pub record_runtime: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            experiment: None,
            dimension: 1,
            level: None,
            p: 2.0,
            q: None,
            rho: 2.0,
            d: None,
            alpha: None,
            epsilon: None,
            epsilons: None,
            d_grid: None,
            instances: 1,
            seed: 0,
            exact: false,
            output: None,
            sigma: None,
            w: None,
            parent_mode: None,
            q0_levels: None,
            budget: None,
            operator: None,
            record_runtime: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Range checks shared by all experiments.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Input(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        Exponent::new(self.p)?;
        if let Some(q) = self.q {
            if !(q >= self.p) {
                return Err(Error::param(format!("q = {q} must be at least p = {}", self.p)));
            }
        }
        if !(self.rho > 1.0 && self.rho <= 2.0) {
            return Err(Error::param(format!("ρ = {} must lie in (1, 2]", self.rho)));
        }
        if let Some(d) = self.d {
            if !(d > 1.0 && d.is_finite()) {
                return Err(Error::param(format!("D = {d} must be a finite number above 1")));
            }
        }
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::param(format!("α = {alpha} must lie in (0, 1)")));
            }
        }
        if self.instances == 0 {
            return Err(Error::param("instance count must be at least 1"));
        }
        if let Some(op) = &self.operator {
            op.validate()?;
        }
        Ok(())
    }

    fn default_level(&self, experiment: Experiment) -> u32 {
        match (experiment, self.dimension) {
            (Experiment::PowerWeight, 1) => 14,
            (Experiment::PowerWeight, 2) => 7,
            (Experiment::Poisson, 1) | (Experiment::Fractional, 1) => 6,
            (Experiment::Poisson, _) | (Experiment::Fractional, _) => 3,
            (_, 1) => 8,
            (_, 2) => 5,
            _ => 3,
        }
    }

    /// The lattice of the run, checked against the size guard.
    fn lattice(&self, experiment: Experiment) -> Result<Lattice> {
        let level = self.level.unwrap_or_else(|| self.default_level(experiment));
        let lattice = Lattice::new(self.dimension, level)?;
        if lattice.cell_count() > CELL_GUARD {
            return Err(Error::SizeGuard {
                what: "experiment lattice",
                detail: format!("{} cells exceed {CELL_GUARD}", lattice.cell_count()),
            });
        }
        Ok(lattice)
    }

    /// The configured `D`, or `2^{d(p+1)/(p-1)}`.
    fn threshold(&self) -> Result<Threshold> {
        match self.d {
            Some(d) => Ok(Threshold::Value(d)),
            None => doubling_threshold(self.dimension, self.p),
        }
    }

    fn q0_levels(&self) -> Vec<u32> {
        self.q0_levels.clone().unwrap_or_else(|| vec![0, 1, 2])
    }
}

/// `splitmix64` finalizer; decorrelates derived seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of stream `stream` (0 for σ, 1 for w, 2 for searches) of instance `id`.
pub fn instance_seed(seed: u64, id: usize, stream: u64) -> u64 {
    mix(mix(seed ^ mix(id as u64)) ^ stream)
}

/// Weight models of the random-instance suite, cycled by instance id.
pub const SUITE_MODELS: [&str; 5] = ["lognormal", "heavy-lognormal", "atoms-lognormal", "lognormal-atoms", "atoms-atoms"];

/// Instance `id` of the random suite on the unit root: log-normal and sparse-atom pairs in rotation.
pub fn suite_pair(lattice: Lattice, id: usize, seed: u64) -> Result<(WeightField, WeightField, &'static str)> {
    let n = lattice.cell_count();
    let ln = |s: f64| FieldModel::LogNormal { mu: 0.0, s };
    let atoms = |share: usize| FieldModel::SparseAtoms { count: (n / share).max(2), amplitude: 1.0 };
    let model = id % SUITE_MODELS.len();
    let (sm, wm) = match model {
        0 => (ln(1.0), ln(1.0)),
        1 => (ln(2.5), ln(1.5)),
        2 => (atoms(16), ln(1.0)),
        3 => (ln(1.0), atoms(16)),
        _ => (atoms(8), atoms(8)),
    };
    let root = Root::unit();
    let sigma = random_field(lattice, root, &sm, instance_seed(seed, id, 0))?;
    let w = random_field(lattice, root, &wm, instance_seed(seed, id, 1))?;
    Ok((sigma, w, SUITE_MODELS[model]))
}

/// The `(σ, w)` pair of instance `id`: the configured specs, or the suite when none is given.
fn instance_pair(
    config: &ExperimentConfig,
    lattice: Lattice,
    root: Root,
    id: usize,
    default: Option<(&FieldSpec, &FieldSpec)>,
) -> Result<(WeightField, WeightField, String)> {
    let specs = match (&config.sigma, &config.w, default) {
        (None, None, None) => {
            let (s, w, model) = suite_pair(lattice, id, config.seed)?;
            return Ok((s, w, model.to_string()));
        }
        (s, w, default) => {
            let fallback = FieldSpec::Lognormal { mu: 0.0, s: 1.0 };
            let ds = default.map(|d| d.0.clone()).unwrap_or_else(|| fallback.clone());
            let dw = default.map(|d| d.1.clone()).unwrap_or(fallback);
            (s.clone().unwrap_or(ds), w.clone().unwrap_or(dw))
        }
    };
    let sigma = specs.0.build(lattice, root, instance_seed(config.seed, id, 0))?;
    let w = specs.1.build(lattice, root, instance_seed(config.seed, id, 1))?;
    Ok((sigma, w, "configured".to_string()))
}

/// Lattice-field specs of a run; the Poisson `w` lives on the half-space.
fn lattice_specs(config: &ExperimentConfig, experiment: Experiment) -> Vec<&FieldSpec> {
    let w = if experiment == Experiment::Poisson { None } else { config.w.as_ref() };
    config.sigma.iter().chain(w).collect()
}

/// The lattice and root of a run, taken from a field file when one is configured.
fn run_geometry(config: &ExperimentConfig, experiment: Experiment) -> Result<(Lattice, Root)> {
    let specs = lattice_specs(config, experiment);
    for spec in &specs {
        if let FieldSpec::File { path } = spec {
            let (lattice, root) = file_lattice(path)?;
            if lattice.dim() != config.dimension {
                return Err(Error::Input(format!(
                    "{}: field of dimension {} but the config asks for {}",
                    path.display(),
                    lattice.dim(),
                    config.dimension
                )));
            }
            if let Some(level) = config.level {
                if level != lattice.level() {
                    return Err(Error::Input(format!(
                        "{}: field of level {} but the config asks for {level}",
                        path.display(),
                        lattice.level()
                    )));
                }
            }
            return Ok((lattice, root));
        }
    }
    let root = if specs.iter().any(|s| s.is_power()) { Root::centered() } else { Root::unit() };
    Ok((config.lattice(experiment)?, root))
}

/// Budget for norm searches, seeded per instance.
fn budget_for(config: &ExperimentConfig, id: usize, default: SearchBudget) -> SearchBudget {
    let base = config.budget.unwrap_or(default);
    SearchBudget { seed: instance_seed(base.seed ^ config.seed, id, 2), ..base }
}

/// `num / den`, zero when both vanish.
fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// What a run writes: the report, an optional summary, and whether a theorem check failed.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub report: String,
    pub format: Format,
    /// Summary statistics of a CSV sweep, as JSON.
    pub summary: Option<String>,
    pub theorem_violation: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn csv_text<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Input(e.to_string()))
}

/// Run `experiment` and render its report.
pub fn run(experiment: Experiment, config: &ExperimentConfig) -> Result<Outcome> {
    if let Some(named) = config.experiment {
        if named != experiment {
            return Err(Error::Input(format!(
                "config is for experiment `{}` but `{}` was requested",
                named.name(),
                experiment.name()
            )));
        }
    }
    config.validate()?;
    let json_outcome = |report: String, violation: bool| Outcome {
        report,
        format: Format::Json,
        summary: None,
        theorem_violation: violation,
    };
    match experiment {
        Experiment::Constants => Ok(json_outcome(json(&constants(config)?)?, false)),
        Experiment::Decompose => {
            let run = decompose(config)?;
            Ok(json_outcome(json(&run)?, run.theorem_violation))
        }
        Experiment::Poisson => Ok(json_outcome(json(&poisson(config)?)?, false)),
        Experiment::Fractional => Ok(json_outcome(json(&fractional(config)?)?, false)),
        Experiment::Equivalence => {
            let run = equivalence(config)?;
            Ok(Outcome {
                report: csv_text(&run.rows)?,
                format: Format::Csv,
                summary: Some(json(&run.summary)?),
                theorem_violation: false,
            })
        }
        Experiment::PowerWeight => {
            let run = power_weight_sweep(config)?;
            Ok(Outcome {
                report: csv_text(&run.rows)?,
                format: Format::Csv,
                summary: Some(json(&run.summary)?),
                theorem_violation: false,
            })
        }
        Experiment::Dthreshold => {
            let run = dthreshold(config)?;
            Ok(Outcome {
                report: csv_text(&run.rows)?,
                format: Format::Csv,
                summary: Some(json(&run.summary)?),
                theorem_violation: false,
            })
        }
    }
}
