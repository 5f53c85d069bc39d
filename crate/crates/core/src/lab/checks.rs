//! Single-pair experiments: constants, decompositions, Poisson and fractional checks.

use rayon::prelude::*;
use serde::Serialize;

use super::{
    budget_for, instance_pair, instance_seed, ratio, run_geometry, Experiment, ExperimentConfig, FieldSpec,
    EXACT_CELL_GUARD, SCHEMA_VERSION,
};
use crate::constants::{
    ap_constant, apq_constant, fractional_dual_testing_constant, fractional_testing_constant, full_testing_constant,
    norm_lower_bound, norm_lower_bound_pq, poisson_ap_constant, poisson_dual_testing_constant,
    poisson_testing_constant, restricted_testing_constant, ConstantReport, Family, ParentMode, Restriction,
    SearchBudget, Target,
};
use crate::dyadic::{DyadicCube, Lattice};
use crate::error::{Error, Result};
use crate::field::{power_weight, slab_bounds, CellFunction, Root, WeightField};
use crate::operators::{continuous_poisson, dyadic_poisson, HalfSpacePoint, OperatorKind};
use crate::proof::{assemble_ept_bound, paper_d, Decomposer, DecompositionReport, EptBound, Settings};

#[derive(Clone, Debug, Serialize)]
pub struct ConstantsRun {
    pub schema_version: u32,
    pub experiment: &'static str,
    pub dimension: usize,
    pub level: u32,
    pub p: f64,
    pub rho: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub operator: OperatorKind,
    pub instances: Vec<InstanceConstants>,
}

#[derive(Clone, Debug, Serialize)]
pub struct InstanceConstants {
    pub instance: usize,
    pub model: String,
    pub reports: Vec<ConstantReport>,
    /// Constants not computed, with the reason.
    pub skipped: Vec<String>,
}

/// Every lattice constant of the configured pair (uniform weights by default).
pub fn constants(config: &ExperimentConfig) -> Result<ConstantsRun> {
    let (lattice, root) = run_geometry(config, Experiment::Constants)?;
    let op = config.operator.clone().unwrap_or_else(OperatorKind::standard_maximal);
    if op.is_poisson() {
        return Err(Error::param("the Poisson operator has its own experiment, `poisson`"));
    }
    let threshold = config.threshold()?;
    let uniform = FieldSpec::Uniform { density: 1.0 };
    let instances = (0..config.instances)
        .into_par_iter()
        .map(|id| -> Result<InstanceConstants> {
            let (sigma, w, model) = instance_pair(config, lattice, root, id, Some((&uniform, &uniform)))?;
            let p = config.p;
            let mut reports = vec![ap_constant(&w, &sigma, p, Family::Dyadic)?];
            let mut skipped = Vec::new();
            match ap_constant(&w, &sigma, p, Family::AllAligned) {
                Ok(r) => reports.push(r),
                Err(e @ Error::SizeGuard { .. }) => skipped.push(format!("ap over all aligned cubes: {e}")),
                Err(e) => return Err(e),
            }
            reports.push(full_testing_constant(&w, &sigma, p, &op)?);
            for mode in [ParentMode::Sliding, ParentMode::Dyadic] {
                let restriction = Restriction::with_threshold(config.rho, threshold, mode)?;
                reports.push(restricted_testing_constant(&w, &sigma, p, &op, &restriction)?);
            }
            let budget = budget_for(config, id, SearchBudget::default());
            match norm_lower_bound(Target::Lattice(&w), &sigma, p, &op, &budget) {
                Ok(est) => reports.push(est.report),
                Err(e @ Error::SizeGuard { .. }) => skipped.push(format!("norm lower bound: {e}")),
                Err(e) => return Err(e),
            }
            Ok(InstanceConstants { instance: id, model, reports, skipped })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConstantsRun {
        schema_version: SCHEMA_VERSION,
        experiment: Experiment::Constants.name(),
        dimension: lattice.dim(),
        level: lattice.level(),
        p: config.p,
        rho: config.rho,
        d: threshold.value(),
        operator: op,
        instances,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DecomposeRun {
    pub schema_version: u32,
    pub experiment: &'static str,
    pub dimension: usize,
    pub level: u32,
    pub p: f64,
    pub rho: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "paper_D")]
    pub paper_d: f64,
    pub parent_mode: ParentMode,
    pub exact: bool,
    pub k: u32,
    pub instances: Vec<InstanceDecompositions>,
    /// `R = ∅` for every decomposition of the run.
    pub remainder_empty: bool,
    /// A nonempty `R` at `D ≥ paper_D`.
    pub theorem_violation: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct InstanceDecompositions {
    pub instance: usize,
    pub model: String,
    pub ap: f64,
    /// `𝔓_{ρ,D}` with the decomposition's parent rule.
    pub testing_constant: f64,
    pub decompositions: Vec<Decomposition>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Decomposition {
    pub report: DecompositionReport,
    pub partition_ok: bool,
    /// The assembled bound; absent when `R ≠ ∅`.
    pub bound: Option<EptBound>,
}

/// Decompose every `Q0` at the configured levels (0–2 by default) of each instance.
pub fn decompose(config: &ExperimentConfig) -> Result<DecomposeRun> {
    let (lattice, root) = run_geometry(config, Experiment::Decompose)?;
    if config.exact && lattice.cell_count() > EXACT_CELL_GUARD {
        return Err(Error::SizeGuard {
            what: "exact decomposition",
            detail: format!("{} cells exceed {EXACT_CELL_GUARD}", lattice.cell_count()),
        });
    }
    let settings = Settings {
        p: config.p,
        rho: config.rho,
        threshold: config.threshold()?,
        parent_mode: config.parent_mode.unwrap_or(ParentMode::Dyadic),
    };
    let paper = paper_d(lattice.dim(), config.p)?;
    let levels: Vec<u32> = config.q0_levels().into_iter().filter(|&l| l <= lattice.level()).collect();
    let instances = (0..config.instances)
        .into_par_iter()
        .map(|id| -> Result<(InstanceDecompositions, u32)> {
            let (sigma, w, model) = instance_pair(config, lattice, root, id, None)?;
            decompose_pair(&w, &sigma, settings, config.exact, &levels, id, model)
        })
        .collect::<Result<Vec<_>>>()?;
    let k = instances.first().map(|(_, k)| *k).unwrap_or(0);
    let instances: Vec<InstanceDecompositions> = instances.into_iter().map(|(i, _)| i).collect();
    let remainder_empty =
        instances.iter().all(|i| i.decompositions.iter().all(|d| d.report.is_remainder_empty()));
    Ok(DecomposeRun {
        schema_version: SCHEMA_VERSION,
        experiment: Experiment::Decompose.name(),
        dimension: lattice.dim(),
        level: lattice.level(),
        p: config.p,
        rho: config.rho,
        d: settings.threshold.value(),
        paper_d: paper,
        parent_mode: settings.parent_mode,
        exact: config.exact,
        k,
        instances,
        remainder_empty,
        theorem_violation: !remainder_empty && settings.threshold.value() >= paper * (1.0 - 1e-12),
    })
}

fn decompose_pair(
    w: &WeightField,
    sigma: &WeightField,
    settings: Settings,
    exact: bool,
    levels: &[u32],
    id: usize,
    model: String,
) -> Result<(InstanceDecompositions, u32)> {
    let lattice = *w.lattice();
    let q0s: Vec<DyadicCube> = levels.iter().flat_map(|&l| lattice.cubes_at_level(l)).collect();
    let (reports, ap, k) = if exact {
        let dec = Decomposer::from_fields_exact(w, sigma, settings)?;
        let reports = q0s.iter().map(|q| dec.classify(q)).collect::<Result<Vec<_>>>()?;
        (reports, dec.ambient_ap(), dec.k())
    } else {
        let dec = Decomposer::from_fields(w, sigma, settings)?;
        let reports = q0s.iter().map(|q| dec.classify(q)).collect::<Result<Vec<_>>>()?;
        (reports, dec.ambient_ap(), dec.k())
    };
    let restriction = Restriction::with_threshold(settings.rho, settings.threshold, settings.parent_mode)?;
    let testing = restricted_testing_constant(w, sigma, settings.p, &OperatorKind::standard_maximal(), &restriction)?;
    let decompositions = reports
        .into_iter()
        .map(|report| {
            let bound = match assemble_ept_bound(&report, testing.value, ap) {
                Ok(b) => Some(b),
                Err(Error::NonEmptyRemainder { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(Decomposition { partition_ok: report.check_partition(), report, bound })
        })
        .collect::<Result<Vec<_>>>()?;
    let instance = InstanceDecompositions { instance: id, model, ap, testing_constant: testing.value, decompositions };
    Ok((instance, k))
}

#[derive(Clone, Debug, Serialize)]
pub struct PoissonRun {
    pub schema_version: u32,
    pub experiment: &'static str,
    pub dimension: usize,
    pub level: u32,
    pub p: f64,
    pub rho: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub parent_mode: ParentMode,
    pub instances: Vec<PoissonInstance>,
    /// `max P_D f / P f` over (cell centre, slab centre) points, for reference functions.
    pub domination: Vec<DominationCheck>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PoissonInstance {
    pub instance: usize,
    pub ap: ConstantReport,
    pub testing: ConstantReport,
    pub restricted_testing: ConstantReport,
    pub dual_testing: ConstantReport,
    pub dual_restricted_testing: ConstantReport,
    pub norm: ConstantReport,
    /// `norm / (ap + restricted + dual restricted)`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominationCheck {
    pub function: String,
    pub samples: usize,
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub at_x: Vec<f64>,
    pub at_t: f64,
}

/// Largest lattice, in cells, on which the continuous Poisson integral is sampled.
const DOMINATION_CELLS: usize = 1 << 10;

/// Poisson-model constants for a lattice `σ` and a half-space `w` (uniform by default).
pub fn poisson(config: &ExperimentConfig) -> Result<PoissonRun> {
    let (lattice, root) = run_geometry(config, Experiment::Poisson)?;
    let threshold = config.threshold()?;
    let mode = config.parent_mode.unwrap_or(ParentMode::Sliding);
    let restriction = Restriction::with_threshold(config.rho, threshold, mode)?;
    let uniform = FieldSpec::Uniform { density: 1.0 };
    let p = config.p;
    let instances = (0..config.instances)
        .into_par_iter()
        .map(|id| -> Result<PoissonInstance> {
            let sigma_spec = config.sigma.as_ref().unwrap_or(&uniform);
            let w_spec = config.w.as_ref().unwrap_or(&uniform);
            let sigma = sigma_spec.build(lattice, root, instance_seed(config.seed, id, 0))?;
            let w = w_spec.build_half_space(lattice, root, instance_seed(config.seed, id, 1))?;
            let ap = poisson_ap_constant(&w, &sigma, p)?;
            let testing = poisson_testing_constant(&w, &sigma, p, None)?;
            let restricted_testing = poisson_testing_constant(&w, &sigma, p, Some(&restriction))?;
            let dual_testing = poisson_dual_testing_constant(&w, &sigma, p, None)?;
            let dual_restricted_testing = poisson_dual_testing_constant(&w, &sigma, p, Some(&restriction))?;
            let budget = budget_for(config, id, SearchBudget::default());
            let norm = norm_lower_bound(Target::HalfSpace(&w), &sigma, p, &OperatorKind::DyadicPoisson, &budget)?.report;
            let ratio = ratio(norm.value, ap.value + restricted_testing.value + dual_restricted_testing.value);
            Ok(PoissonInstance { instance: id, ap, testing, restricted_testing, dual_testing, dual_restricted_testing, norm, ratio })
        })
        .collect::<Result<Vec<_>>>()?;
    let domination = if lattice.cell_count() <= DOMINATION_CELLS {
        domination_checks(lattice, root)?
    } else {
        Vec::new()
    };
    Ok(PoissonRun {
        schema_version: SCHEMA_VERSION,
        experiment: Experiment::Poisson.name(),
        dimension: lattice.dim(),
        level: lattice.level(),
        p,
        rho: config.rho,
        d: threshold.value(),
        parent_mode: mode,
        instances,
        domination,
    })
}

/// `P_D f / P f` for `f = 1` and `f = |x - c|^{-1/2}` (`c` the root centre), with Lebesgue `σ`.
pub fn domination_checks(lattice: Lattice, root: Root) -> Result<Vec<DominationCheck>> {
    let d = lattice.dim();
    let lebesgue = WeightField::uniform(lattice, root, 1.0)?;
    let center = vec![root.lower + root.side / 2.0; d];
    let power = power_weight(lattice, root, -0.5, &center)?;
    let cell = lebesgue.cell_volume();
    let functions = [
        ("uniform", CellFunction::constant(lattice, 1.0)?),
        ("power", CellFunction::new(lattice, power.masses().iter().map(|m| m / cell).collect())?),
    ];
    let samples = sample_points(lattice, root);
    functions
        .iter()
        .map(|(name, f)| {
            let dyadic = dyadic_poisson(&lebesgue, f)?;
            let points: Vec<HalfSpacePoint> = samples.iter().map(|s| s.point.clone()).collect();
            let continuous = continuous_poisson(f, &root, &points)?;
            let mut check = DominationCheck {
                function: name.to_string(),
                samples: samples.len(),
                max_ratio: 0.0,
                min_ratio: f64::INFINITY,
                at_x: Vec::new(),
                at_t: 0.0,
            };
            for (s, c) in samples.iter().zip(&continuous) {
                let r = dyadic.get(s.cell, s.slab) / c;
                if r > check.max_ratio {
                    check.max_ratio = r;
                    check.at_x = s.point.x.clone();
                    check.at_t = s.point.t;
                }
                check.min_ratio = check.min_ratio.min(r);
            }
            Ok(check)
        })
        .collect()
}

struct Sample {
    point: HalfSpacePoint,
    cell: usize,
    slab: u32,
}

/// Every (cell centre, slab centre) pair.
fn sample_points(lattice: Lattice, root: Root) -> Vec<Sample> {
    let d = lattice.dim();
    let cells = lattice.cells();
    let mut out = Vec::new();
    for cell in 0..lattice.cell_count() {
        let c = cells.coords(cell);
        let x: Vec<f64> = (0..d).map(|a| root.cell_center(&lattice, c[a])).collect();
        for slab in 0..=lattice.level() {
            let (lo, hi) = slab_bounds(&root, &lattice, slab);
            out.push(Sample { point: HalfSpacePoint { x: x.clone(), t: (lo + hi) / 2.0 }, cell, slab });
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct FractionalRun {
    pub schema_version: u32,
    pub experiment: &'static str,
    pub dimension: usize,
    pub level: u32,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub rho: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub parent_mode: ParentMode,
    pub instances: Vec<FractionalInstance>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FractionalInstance {
    pub instance: usize,
    pub model: String,
    pub apq: ConstantReport,
    pub testing: ConstantReport,
    pub restricted_testing: ConstantReport,
    pub dual_testing: ConstantReport,
    pub dual_restricted_testing: ConstantReport,
    pub norm: ConstantReport,
    /// `norm / (apq + restricted + dual restricted)`.
    pub ratio: f64,
}

/// Two-exponent constants of the dyadic fractional integral.
pub fn fractional(config: &ExperimentConfig) -> Result<FractionalRun> {
    let (lattice, root) = run_geometry(config, Experiment::Fractional)?;
    let threshold = config.threshold()?;
    let mode = config.parent_mode.unwrap_or(ParentMode::Sliding);
    let restriction = Restriction::with_threshold(config.rho, threshold, mode)?;
    let (p, q, alpha) = (config.p, config.q.unwrap_or(config.p), config.alpha.unwrap_or(0.5));
    let op = OperatorKind::DyadicFractional { alpha };
    let instances = (0..config.instances)
        .into_par_iter()
        .map(|id| -> Result<FractionalInstance> {
            let (sigma, w, model) = instance_pair(config, lattice, root, id, None)?;
            let apq = apq_constant(&w, &sigma, p, q, alpha, Family::Dyadic)?;
            let testing = fractional_testing_constant(&w, &sigma, p, q, alpha, None)?;
            let restricted_testing = fractional_testing_constant(&w, &sigma, p, q, alpha, Some(&restriction))?;
            let dual_testing = fractional_dual_testing_constant(&w, &sigma, p, q, alpha, None)?;
            let dual_restricted_testing =
                fractional_dual_testing_constant(&w, &sigma, p, q, alpha, Some(&restriction))?;
            let budget = budget_for(config, id, SearchBudget::default());
            let norm = norm_lower_bound_pq(Target::Lattice(&w), &sigma, p, q, &op, &budget)?.report;
            let ratio = ratio(norm.value, apq.value + restricted_testing.value + dual_restricted_testing.value);
            Ok(FractionalInstance {
                instance: id,
                model,
                apq,
                testing,
                restricted_testing,
                dual_testing,
                dual_restricted_testing,
                norm,
                ratio,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FractionalRun {
        schema_version: SCHEMA_VERSION,
        experiment: Experiment::Fractional.name(),
        dimension: lattice.dim(),
        level: lattice.level(),
        p,
        q,
        alpha,
        rho: config.rho,
        d: threshold.value(),
        parent_mode: mode,
        instances,
    })
}
