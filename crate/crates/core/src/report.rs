//! Machine-readable reports. Every report is a JSON object with a top-level
//! `"schema": 1`, numbers rounded to 12 significant digits and sets written
//! as ascending node lists.

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::graph::{enumerate_maximal_independent_sets, DegeneracyClass, MinimaCatalog, SubsetState};
use crate::model::{build_problem_hamiltonian, AnnealInstance, DriverField, IsingProblem};
use crate::oracle::{finite_difference_e2, OracleTarget, DENSE_ORACLE_MAX_NODES};
use crate::perturb::{predict_crossing, second_order_nondegenerate, DegenerateManifold, PredictedCrossing};
use crate::spectrum::{detect_anticrossing, CrossingObservation, LambdaGrid, SolverOptions, SpectrumTrace, Sweeper};
use crate::strategy::{certify, AvoidOutcome};

pub const SCHEMA_VERSION: u32 = 1;

const SIGNIFICANT_DIGITS: usize = 12;

/// Pretty JSON with every float rounded to 12 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Io(e.to_string()))?;
    round_numbers(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn round_numbers(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap();
            let rounded: f64 = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap();
            if let Some(r) = serde_json::Number::from_f64(rounded) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_numbers),
        Value::Object(map) => map.values_mut().for_each(round_numbers),
        _ => {}
    }
}

/// Where the instance came from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstanceInfo {
    pub name: String,
    pub source: String,
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub c: f64,
    pub delta: DriverField,
}

impl InstanceInfo {
    pub fn new(name: &str, source: &str, inst: &AnnealInstance) -> Self {
        Self {
            name: name.into(),
            source: source.into(),
            n: inst.graph().n(),
            edges: inst.graph().edges(),
            c: inst.c(),
            delta: inst.driver().clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CatalogReport {
    pub schema: u32,
    pub kind: &'static str,
    pub n: usize,
    pub sets: Vec<SubsetState>,
    pub sizes: Vec<usize>,
    pub mis_size: usize,
    pub degeneracy_classes: Vec<DegeneracyClass>,
    pub close_pairs: Vec<(usize, usize)>,
}

impl CatalogReport {
    pub fn new(n: usize, catalog: &MinimaCatalog) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            kind: "catalog",
            n,
            sets: catalog.sets.clone(),
            sizes: catalog.sizes.clone(),
            mis_size: catalog.mis_size,
            degeneracy_classes: catalog.degeneracy_classes.clone(),
            close_pairs: catalog.close_pairs.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinimumEntry {
    pub set: SubsetState,
    pub size: usize,
    pub energy: f64,
    /// Non-degenerate second-order coefficient.
    pub e2: f64,
    /// A flip partner shares this energy, so `e2` needs the degenerate
    /// treatment.
    pub degenerate_partner: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassPrediction {
    pub size: usize,
    pub states: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction: Option<PredictedCrossing>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleCheck {
    pub target: Vec<SubsetState>,
    pub perturbative: f64,
    pub finite_difference: f64,
    pub abs_diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSettings {
    pub grid: Vec<f64>,
    pub k: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub schema: u32,
    pub kind: &'static str,
    pub instance: InstanceInfo,
    pub ising: IsingProblem,
    pub catalog: CatalogReport,
    pub minima: Vec<MinimumEntry>,
    pub predictions: Vec<ClassPrediction>,
    /// Worst-case `F` of the driver; `None` without local minima.
    pub f_value: Option<f64>,
    pub observation: CrossingObservation,
    pub g_min: f64,
    pub lambda_min: f64,
    pub sweep: SweepSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<Vec<OracleCheck>>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct AnalysisOptions {
    pub grid: LambdaGrid,
    pub k: usize,
    pub seed: u64,
    pub solver: SolverOptions,
    /// Cross-check the global-minimum `E2` by finite differences (n ≤ 10).
    pub oracle: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            grid: LambdaGrid::default(),
            k: 4,
            seed: 0,
            solver: SolverOptions::default(),
            oracle: false,
        }
    }
}

/// Perturbative predictions for every local-minimum class, an exact sweep
/// tracking the maximum and local sets, and the crossing observation.
pub fn analyze(
    name: &str,
    source: &str,
    inst: &AnnealInstance,
    options: &AnalysisOptions,
) -> Result<(AnalysisReport, SpectrumTrace)> {
    let g = inst.graph();
    let c = inst.c();
    let catalog = enumerate_maximal_independent_sets(g);
    let mut warnings = Vec::new();

    let minima = catalog
        .sets
        .iter()
        .zip(&catalog.sizes)
        .map(|(&s, &size)| {
            let so = second_order_nondegenerate(inst, s)?;
            Ok(MinimumEntry {
                set: s,
                size,
                energy: inst.energy(s),
                e2: so.e2,
                degenerate_partner: so.degenerate_partner,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let maximum = catalog.maximum_sets();
    let global = DegenerateManifold::restricted(g, c, maximum.clone())?;
    let predictions = catalog
        .local_classes()
        .map(|cls| {
            let states = catalog.class_states(cls);
            let result = DegenerateManifold::restricted(g, c, states)
                .and_then(|locals| predict_crossing(inst, &global, &locals));
            let (prediction, error) = match result {
                Ok(p) => (Some(p), None),
                Err(e) => (None, Some(e.to_string())),
            };
            ClassPrediction {
                size: cls.size,
                states: cls.members.len(),
                prediction,
                error,
            }
        })
        .collect::<Vec<_>>();
    // the swept range is compared with the earliest predicted crossing
    let earliest = predictions
        .iter()
        .filter_map(|p| p.prediction.as_ref())
        .min_by(|a, b| {
            let key = |p: &PredictedCrossing| p.lambda_star.unwrap_or(f64::INFINITY);
            key(a).total_cmp(&key(b))
        });

    let k = options.k.min(inst.dim());
    if k < options.k {
        warnings.push(format!("k reduced to {k}, the dimension of the state space"));
    }
    if k < 2 {
        return Err(Error::InvalidArgument("analysis needs k >= 2".into()));
    }
    let solver = options.solver.with_seed(options.seed);
    let sweeper = Sweeper::new(inst, k, &maximum, &catalog.local_sets(), solver)?;
    let mut trace = sweeper.sweep(&options.grid)?;
    let observation = detect_anticrossing(&mut trace, &sweeper, earliest)?;

    let oracle = if options.oracle {
        if g.n() > DENSE_ORACLE_MAX_NODES {
            warnings.push(format!("oracle skipped: n > {DENSE_ORACLE_MAX_NODES}"));
            None
        } else {
            let target = if maximum.len() == 1 {
                OracleTarget::State(maximum[0])
            } else {
                OracleTarget::Manifold(maximum.clone())
            };
            let perturbative = predictions
                .iter()
                .find_map(|p| p.prediction.as_ref().map(|q| q.e2_global))
                .map_or_else(|| crate::perturb::degenerate_effective_matrix(inst, &global).map(|a| a.e2), Ok)?;
            let fd = finite_difference_e2(inst, &target, 1e-3)?;
            Some(vec![OracleCheck {
                target: maximum.clone(),
                perturbative,
                finite_difference: fd,
                abs_diff: (fd - perturbative).abs(),
            }])
        }
    } else {
        None
    };

    let report = AnalysisReport {
        schema: SCHEMA_VERSION,
        kind: "analysis",
        instance: InstanceInfo::new(name, source, inst),
        ising: build_problem_hamiltonian(g, c)?,
        catalog: CatalogReport::new(g.n(), &catalog),
        minima,
        predictions,
        f_value: certify(g, inst.driver(), &catalog)?,
        g_min: observation.g_min,
        lambda_min: observation.lambda_min,
        observation,
        sweep: SweepSettings {
            grid: options.grid.as_slice().to_vec(),
            k,
            seed: options.seed,
        },
        oracle,
        warnings,
    };
    Ok((report, trace))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AvoidReport {
    pub schema: u32,
    pub kind: &'static str,
    pub instance: InstanceInfo,
    pub budget: usize,
    #[serde(flatten)]
    pub result: AvoidOutcome,
}

impl AvoidReport {
    pub fn new(instance: InstanceInfo, budget: usize, result: AvoidOutcome) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            kind: "avoid",
            instance,
            budget,
            result,
        }
    }
}
