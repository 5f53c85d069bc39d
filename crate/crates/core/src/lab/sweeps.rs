//! CSV sweeps: equivalence ratios, power weights and the doubling threshold.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{
    budget_for, instance_pair, quantile, ratio, run_geometry, Experiment, ExperimentConfig, SCHEMA_VERSION,
};
use crate::constants::{
    ap_constant, full_testing_constant, norm_lower_bound, parent_ratio, restricted_testing_constant, Family,
    ParentMode, Restriction, SearchBudget, Target, ALIGNED_GUARD,
};
use crate::dyadic::{CellBox, DyadicCube, Lattice};
use crate::error::{Error, Result};
use crate::field::{power_weight, random_field, FieldModel, Root, WeightField};
use crate::operators::OperatorKind;
use crate::proof::{doubling_threshold, paper_d};
use crate::scalar::Threshold;

/// One instance of an equivalence sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub instance: usize,
    pub model: String,
    pub dimension: usize,
    pub level: u32,
    pub p: f64,
    pub ap: f64,
    pub testing: f64,
    pub restricted_testing: f64,
    /// Cubes admitted by the doubling-parent restriction.
    pub qualifying: usize,
    pub cubes: usize,
    pub norm: f64,
    /// `norm / (ap + restricted_testing)`.
    pub ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioSummary {
    pub schema_version: u32,
    pub experiment: &'static str,
    pub instances: usize,
    pub ratio_min: f64,
    pub ratio_median: f64,
    pub ratio_p90: f64,
    pub ratio_max: f64,
    pub argmax: usize,
    /// `norm ≥ restricted_testing` on every row.
    pub norm_dominates_testing: bool,
}

impl RatioSummary {
    pub fn from_rows(rows: &[SweepRow]) -> Self {
        let mut sorted: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
        sorted.sort_by(f64::total_cmp);
        let argmax = rows
            .iter()
            .fold(None::<&SweepRow>, |best, r| match best {
                Some(b) if b.ratio >= r.ratio => Some(b),
                _ => Some(r),
            })
            .map_or(0, |r| r.instance);
        RatioSummary {
            schema_version: SCHEMA_VERSION,
            experiment: Experiment::Equivalence.name(),
            instances: rows.len(),
            ratio_min: sorted.first().copied().unwrap_or(0.0),
            ratio_median: quantile(&sorted, 0.5),
            ratio_p90: quantile(&sorted, 0.9),
            ratio_max: sorted.last().copied().unwrap_or(0.0),
            argmax,
            norm_dominates_testing: rows.iter().all(|r| r.norm >= r.restricted_testing),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceRun {
    pub rows: Vec<SweepRow>,
    pub summary: RatioSummary,
}

/// Parameters shared by the rows of an equivalence sweep.
#[derive(Clone, Debug)]
pub struct EquivalenceSettings {
    pub p: f64,
    pub restriction: Restriction,
    pub operator: OperatorKind,
    pub budget: SearchBudget,
    pub record_runtime: bool,
}

/// `ap`, `𝔓_{ρ,D}`, the full testing constant and the norm lower bound of one pair.
pub fn equivalence_row(
    instance: usize,
    model: &str,
    w: &WeightField,
    sigma: &WeightField,
    settings: &EquivalenceSettings,
) -> Result<SweepRow> {
    let start = Instant::now();
    let p = settings.p;
    let lattice = *w.lattice();
    let ap = ap_constant(w, sigma, p, Family::Dyadic)?.value;
    let testing = full_testing_constant(w, sigma, p, &settings.operator)?.value;
    let restricted = restricted_testing_constant(w, sigma, p, &settings.operator, &settings.restriction)?;
    let norm = norm_lower_bound(Target::Lattice(w), sigma, p, &settings.operator, &settings.budget)?.report.value;
    let cubes = (0..=lattice.level()).map(|l| lattice.cubes_at(l)).sum();
    Ok(SweepRow {
        instance,
        model: model.to_string(),
        dimension: lattice.dim(),
        level: lattice.level(),
        p,
        ap,
        testing,
        restricted_testing: restricted.value,
        qualifying: restricted.qualifying.unwrap_or(0),
        cubes,
        norm,
        ratio: ratio(norm, ap + restricted.value),
        runtime_ms: settings.record_runtime.then(|| start.elapsed().as_secs_f64() * 1e3),
    })
}

/// Norm lower bound against `ap + 𝔓_{ρ,D}` over the random suite (or the configured pair).
pub fn equivalence(config: &ExperimentConfig) -> Result<EquivalenceRun> {
    let (lattice, root) = run_geometry(config, Experiment::Equivalence)?;
    let operator = config.operator.clone().unwrap_or_else(OperatorKind::standard_maximal);
    if operator.is_poisson() {
        return Err(Error::param("the Poisson operator has its own experiment, `poisson`"));
    }
    let restriction =
        Restriction::with_threshold(config.rho, config.threshold()?, config.parent_mode.unwrap_or_default())?;
    let rows = (0..config.instances)
        .into_par_iter()
        .map(|id| -> Result<SweepRow> {
            let (sigma, w, model) = instance_pair(config, lattice, root, id, None)?;
            let settings = EquivalenceSettings {
                p: config.p,
                restriction,
                operator: operator.clone(),
                budget: budget_for(config, id, SearchBudget::default()),
                record_runtime: config.record_runtime,
            };
            equivalence_row(id, &model, &w, &sigma, &settings)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = RatioSummary::from_rows(&rows);
    Ok(EquivalenceRun { rows, summary })
}

/// One `ε` of the power-weight sweep, `w = |x|^{d-ε}` and `σ = w^{1-p'}` on `[-1, 1)^d`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerWeightRow {
    pub epsilon: f64,
    pub dimension: usize,
    pub level: u32,
    /// `ap^p`, the classical characteristic `sup ⟨w⟩⟨σ⟩^{p-1}` (`[w]_{A_2}` at `p = 2`).
    pub ap_classical: f64,
    pub ap: f64,
    pub family: Family,
    pub witness_side_cells: usize,
    /// Mean of `log₂ w(Q_{2r}) - log₂ w(Q_r)` over origin-centred cubes with `r ≥ 8` cells.
    pub mass_exponent: f64,
    /// Mean of `w(Q_{2r}) / w(Q_r)` over the same cubes.
    pub doubling_ratio: f64,
    pub testing: f64,
    pub norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerWeightSummary {
    pub schema_version: u32,
    pub experiment: &'static str,
    /// Least-squares slope of `ln ap_classical` against `ln ε`.
    pub classical_slope: f64,
    /// The same for `ap` itself.
    pub ap_slope: f64,
    /// `max |mass_exponent - (2d - ε)|`.
    pub mass_exponent_error: f64,
    /// `max |doubling_ratio / 2^{2d-ε} - 1|`.
    pub doubling_error: f64,
    pub norm_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerWeightRun {
    pub rows: Vec<PowerWeightRow>,
    pub summary: PowerWeightSummary,
}

const DEFAULT_EPSILONS: [f64; 5] = [0.25, 0.125, 0.0625, 0.03125, 0.015625];

/// Light search: the indicators dominate for power weights and the lattice is long.
const POWER_BUDGET: SearchBudget = SearchBudget { random: 4, passes: 1, coordinates: 64, seed: 0 };

/// Smallest half-side, in cells, of the origin cubes used for the mass exponent.
const MIN_HALF_SIDE: usize = 8;

/// Sweep `ε` over the power-weight pair.
pub fn power_weight_sweep(config: &ExperimentConfig) -> Result<PowerWeightRun> {
    let lattice = config.lattice(Experiment::PowerWeight)?;
    let epsilons = config.epsilons.clone().unwrap_or_else(|| DEFAULT_EPSILONS.to_vec());
    if epsilons.is_empty() {
        return Err(Error::param("empty ε grid"));
    }
    if let Some(e) = epsilons.iter().find(|&&e| !(e > 0.0 && e < 0.5)) {
        return Err(Error::param(format!("ε = {e} must lie in (0, 1/2)")));
    }
    let d = lattice.dim() as f64;
    let p = config.p;
    let rows = epsilons
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| -> Result<PowerWeightRow> {
            let start = Instant::now();
            let root = Root::centered();
            let origin = vec![0.0; lattice.dim()];
            let w = power_weight(lattice, root, d - eps, &origin)?;
            let sigma = power_weight(lattice, root, -(d - eps) / (p - 1.0), &origin)?;
            let n = lattice.side() as f64;
            let aligned = (1..=lattice.side()).map(|s| (n - s as f64 + 1.0).powf(d)).sum::<f64>() <= ALIGNED_GUARD;
            let family = if aligned { Family::AllAligned } else { Family::Dyadic };
            let ap = ap_constant(&w, &sigma, p, family)?;
            let witness_side_cells = ap.witness.as_ref().map_or(0, |wt| {
                let b = wt.cell_box(&lattice);
                (b.hi[0] - b.lo[0]) as usize
            });
            let (mass_exponent, doubling_ratio) = origin_growth(&w);
            let op = OperatorKind::standard_maximal();
            let testing = full_testing_constant(&w, &sigma, p, &op)?.value;
            let budget = budget_for(config, i, POWER_BUDGET);
            let norm = norm_lower_bound(Target::Lattice(&w), &sigma, p, &op, &budget)?.report.value;
            Ok(PowerWeightRow {
                epsilon: eps,
                dimension: lattice.dim(),
                level: lattice.level(),
                ap_classical: ap.value.powf(p),
                ap: ap.value,
                family,
                witness_side_cells,
                mass_exponent,
                doubling_ratio,
                testing,
                norm,
                runtime_ms: config.record_runtime.then(|| start.elapsed().as_secs_f64() * 1e3),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let log_eps: Vec<f64> = rows.iter().map(|r| r.epsilon.ln()).collect();
    let slope_of = |f: &dyn Fn(&PowerWeightRow) -> f64| {
        let ys: Vec<f64> = rows.iter().map(|r| f(r).ln()).collect();
        least_squares_slope(&log_eps, &ys)
    };
    let summary = PowerWeightSummary {
        schema_version: SCHEMA_VERSION,
        experiment: Experiment::PowerWeight.name(),
        classical_slope: slope_of(&|r| r.ap_classical),
        ap_slope: slope_of(&|r| r.ap),
        mass_exponent_error: rows.iter().map(|r| (r.mass_exponent - (2.0 * d - r.epsilon)).abs()).fold(0.0, f64::max),
        doubling_error: rows
            .iter()
            .map(|r| (r.doubling_ratio / (2.0 * d - r.epsilon).exp2() - 1.0).abs())
            .fold(0.0, f64::max),
        norm_slope: slope_of(&|r| r.norm),
    };
    Ok(PowerWeightRun { rows, summary })
}

/// Mean growth exponent and ratio of `w` over the cubes `[-r, r)^d` and `[-2r, 2r)^d`.
pub fn origin_growth(w: &WeightField) -> (f64, f64) {
    let n = w.lattice().side();
    let d = w.lattice().dim();
    let centred = |r: usize| {
        let lo = vec![(n / 2 - r) as i64; d];
        let hi = vec![(n / 2 + r) as i64; d];
        w.measure_box(&CellBox::new(&lo, &hi))
    };
    let min = if n / 4 >= MIN_HALF_SIDE { MIN_HALF_SIDE } else { 1 };
    let radii: Vec<usize> = std::iter::successors(Some(min), |r| Some(r * 2)).take_while(|r| 2 * r <= n / 2).collect();
    if radii.is_empty() {
        return (0.0, 0.0);
    }
    let ratios: Vec<f64> = radii.iter().map(|&r| centred(2 * r) / centred(r)).collect();
    let k = ratios.len() as f64;
    (ratios.iter().map(|x| x.log2()).sum::<f64>() / k, ratios.iter().sum::<f64>() / k)
}

pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// One `(pair, D)` cell of the threshold sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DThresholdRow {
    pub pair: String,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "log2_D")]
    pub log2_d: f64,
    pub is_paper_d: bool,
    pub restricted_testing: f64,
    pub qualifying: usize,
    pub ap: f64,
    pub norm: f64,
    /// `norm / (ap + restricted_testing)`.
    pub ratio: f64,
}

/// Parent ratio of a cube next to the origin singularity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CensusEntry {
    pub level: u32,
    pub coords: Vec<i64>,
    pub parent_ratio: f64,
}

/// A change of the qualifying count between consecutive grid values of `D`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Jump {
    pub pair: String,
    #[serde(rename = "D_from")]
    pub d_from: f64,
    #[serde(rename = "D_to")]
    pub d_to: f64,
    pub qualifying_from: usize,
    pub qualifying_to: usize,
    /// Census ratios of the power pair in `(D_from, D_to]`.
    pub census_between: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DThresholdSummary {
    pub schema_version: u32,
    pub experiment: &'static str,
    #[serde(rename = "paper_D")]
    pub paper_d: f64,
    pub epsilon: f64,
    pub parent_mode: ParentMode,
    /// `𝔓` nondecreasing in `D` for every pair.
    pub monotone: bool,
    pub census: Vec<CensusEntry>,
    pub jumps: Vec<Jump>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DThresholdRun {
    pub rows: Vec<DThresholdRow>,
    pub summary: DThresholdSummary,
}

/// `D = 2^{dj/2}`, `j = 2..8`, spanning `[2^d, 2^{4d}]`, plus `paper_D`.
fn default_d_grid(d: usize, paper: f64) -> Vec<f64> {
    let mut grid: Vec<f64> = (2..=8).map(|j| (d as f64 * j as f64 / 2.0).exp2()).collect();
    if !grid.contains(&paper) {
        grid.push(paper);
    }
    grid.sort_by(f64::total_cmp);
    grid
}

/// Sweep `D` on the power pair and on `instances` sparse-atom pairs.
pub fn dthreshold(config: &ExperimentConfig) -> Result<DThresholdRun> {
    let lattice = config.lattice(Experiment::Dthreshold)?;
    let dim = lattice.dim();
    let p = config.p;
    let paper = paper_d(dim, p)?;
    let mut grid = config.d_grid.clone().unwrap_or_else(|| default_d_grid(dim, paper));
    if let Some(bad) = grid.iter().find(|&&g| !(g > 1.0 && g.is_finite())) {
        return Err(Error::param(format!("D = {bad} must be a finite number above 1")));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let eps = config.epsilon.unwrap_or(0.25);
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::param(format!("ε = {eps} must lie in (0, 1/2)")));
    }
    // the proof's dyadic parent: its ratios at the origin are what the threshold crosses
    let mode = config.parent_mode.unwrap_or(ParentMode::Dyadic);
    let op = OperatorKind::standard_maximal();

    let mut pairs: Vec<(String, WeightField, WeightField)> = Vec::new();
    let origin = vec![0.0; dim];
    let d = dim as f64;
    let power_w = power_weight(lattice, Root::centered(), d - eps, &origin)?;
    let power_sigma = power_weight(lattice, Root::centered(), -(d - eps) / (p - 1.0), &origin)?;
    pairs.push(("power".to_string(), power_w, power_sigma));
    let atoms = FieldModel::SparseAtoms { count: (lattice.cell_count() / 32).max(2), amplitude: 1.0 };
    let background = FieldModel::LogNormal { mu: 0.0, s: 1.0 };
    for id in 0..config.instances {
        let sigma = random_field(lattice, Root::unit(), &atoms, super::instance_seed(config.seed, id, 0))?;
        let w = random_field(lattice, Root::unit(), &background, super::instance_seed(config.seed, id, 1))?;
        pairs.push((format!("atoms-{id}"), w, sigma));
    }

    let per_pair = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (name, w, sigma))| -> Result<Vec<DThresholdRow>> {
            let ap = ap_constant(w, sigma, p, Family::Dyadic)?.value;
            let budget = budget_for(config, i, SearchBudget::default());
            let norm = norm_lower_bound(Target::Lattice(w), sigma, p, &op, &budget)?.report.value;
            grid.iter()
                .map(|&dv| {
                    let threshold = if dv == paper { doubling_threshold(dim, p)? } else { Threshold::Value(dv) };
                    let restriction = Restriction::with_threshold(config.rho, threshold, mode)?;
                    let r = restricted_testing_constant(w, sigma, p, &op, &restriction)?;
                    Ok(DThresholdRow {
                        pair: name.clone(),
                        d: dv,
                        log2_d: dv.log2(),
                        is_paper_d: dv == paper,
                        restricted_testing: r.value,
                        qualifying: r.qualifying.unwrap_or(0),
                        ap,
                        norm,
                        ratio: ratio(norm, ap + r.value),
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let census = origin_census(&pairs[0].2, config.rho, mode)?;
    let mut jumps = Vec::new();
    let mut monotone = true;
    for rows in &per_pair {
        for pair in rows.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            monotone &= b.restricted_testing >= a.restricted_testing && b.qualifying >= a.qualifying;
            if a.qualifying != b.qualifying {
                let census_between = if a.pair == "power" {
                    census.iter().map(|c| c.parent_ratio).filter(|&r| r > a.d && r <= b.d).collect()
                } else {
                    Vec::new()
                };
                jumps.push(Jump {
                    pair: a.pair.clone(),
                    d_from: a.d,
                    d_to: b.d,
                    qualifying_from: a.qualifying,
                    qualifying_to: b.qualifying,
                    census_between,
                });
            }
        }
    }
    let summary = DThresholdSummary {
        schema_version: SCHEMA_VERSION,
        experiment: Experiment::Dthreshold.name(),
        paper_d: paper,
        epsilon: eps,
        parent_mode: mode,
        monotone,
        census,
        jumps,
    };
    Ok(DThresholdRun { rows: per_pair.into_iter().flatten().collect(), summary })
}

/// Parent ratios `σ(P)/σ(Q)` of the cubes whose dyadic parent has the origin as a corner.
fn origin_census(sigma: &WeightField, rho: f64, mode: ParentMode) -> Result<Vec<CensusEntry>> {
    let lattice: &Lattice = sigma.lattice();
    let d = lattice.dim();
    let mut out = Vec::new();
    for level in 2..=lattice.level() {
        let half = 1i64 << (level - 1);
        // children of the 2^d parents at level - 1 touching the origin
        let axis: Vec<i64> = (half - 2..half + 2).collect();
        let count = axis.len().pow(d as u32);
        for k in 0..count {
            let mut rest = k;
            let coords: Vec<i64> = (0..d)
                .map(|_| {
                    let c = axis[rest % axis.len()];
                    rest /= axis.len();
                    c
                })
                .collect();
            let q = DyadicCube::new(d, level, &coords);
            let ratio = parent_ratio(sigma, &q, rho, mode)?;
            out.push(CensusEntry { level, coords, parent_ratio: ratio });
        }
    }
    Ok(out)
}
