//! Crossing-elimination strategies: penalty scaling, the α- and
//! β-assignments of the driver field, and an iterative loop that finds the
//! trapping local minima from the exact ground state and suppresses them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{degenerate_neighbors, enumerate_maximal_independent_sets, Graph, MinimaCatalog, SubsetState};
use crate::model::{AnnealInstance, DriverField};
use crate::perturb::sufficient_condition_f;
use crate::spectrum::{detect_anticrossing, LambdaGrid, SolverOptions, Sweeper};

/// Slack kept below the β threshold.
pub const BETA_EPSILON: f64 = 0.05;

/// Smallest coefficient `scale_c` will return.
pub const MIN_COEFFICIENT: f64 = 1.0 + 1e-6;

/// Ground-state weight marking a local minimum as visited.
pub const VISIT_THRESHOLD: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaledCoefficient {
    pub c: f64,
    pub warning: Option<String>,
}

/// `c = n`. With every minimum having `d_i ≥ 2` this gives
/// `δE(λ) > 1 + λ²/2` for all minima pairs.
pub fn scale_c(g: &Graph) -> ScaledCoefficient {
    let n = g.n() as f64;
    if n > 1.0 {
        ScaledCoefficient { c: n, warning: None }
    } else {
        ScaledCoefficient {
            c: MIN_COEFFICIENT,
            warning: Some(format!("c = {n} is not > 1; clamped to {MIN_COEFFICIENT}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrategyOutcome {
    pub driver: DriverField,
    pub c: f64,
    /// α or β, when a rule assigned one.
    pub parameter: Option<f64>,
    /// Worst-case `F` over all maximum sets; `None` without local minima.
    pub f_value: Option<f64>,
    /// `f_value` when positive.
    pub certificate: Option<f64>,
    pub rationale: String,
    pub warnings: Vec<String>,
}

/// Smallest `F` over the maximum sets of `catalog`, each against every
/// local minimum. `None` when there are no local minima.
pub fn certify(g: &Graph, driver: &DriverField, catalog: &MinimaCatalog) -> Result<Option<f64>> {
    let locals = catalog.local_sets();
    if locals.is_empty() {
        return Ok(None);
    }
    let mut worst = f64::INFINITY;
    for m in catalog.maximum_sets() {
        worst = worst.min(sufficient_condition_f(g, driver, m, &locals)?);
    }
    Ok(Some(worst))
}

fn outcome(
    g: &Graph,
    c: f64,
    driver: DriverField,
    catalog: &MinimaCatalog,
    parameter: Option<f64>,
    rationale: String,
    warnings: Vec<String>,
) -> Result<StrategyOutcome> {
    let f_value = certify(g, &driver, catalog)?;
    Ok(StrategyOutcome {
        certificate: f_value.filter(|&f| f > 0.0),
        driver,
        c,
        parameter,
        f_value,
        rationale,
        warnings,
    })
}

/// `[(n−m') + √((n−m')² + 8(m'−1))] / 4`: the α above which the maximum set
/// beats a class of local minima of size `m'`.
pub fn alpha_threshold(n: usize, m_prime: usize) -> f64 {
    let a = (n - m_prime) as f64;
    (a + (a * a + 8.0 * (m_prime as f64 - 1.0)).sqrt()) / 4.0
}

/// `Δ_i = α` on the known maximum set `global`, 1 elsewhere. Uses the largest
/// threshold over all local-minimum sizes. Diagnostic only: it needs the
/// answer.
pub fn alpha_assignment(g: &Graph, c: f64, global: SubsetState, margin: f64) -> Result<StrategyOutcome> {
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::InvalidArgument(format!("margin must be positive, got {margin}")));
    }
    let catalog = enumerate_maximal_independent_sets(g);
    if catalog.index_of(global).is_none() || global.size() != catalog.mis_size {
        return Err(Error::InvalidArgument(format!("{global} is not a maximum independent set")));
    }
    let n = g.n();
    let uniform = DriverField::uniform(n, 1.0)?;
    let Some(threshold) = catalog
        .local_classes()
        .map(|cls| alpha_threshold(n, cls.size))
        .reduce(f64::max)
    else {
        return outcome(g, c, uniform, &catalog, None, "no local minima".into(), vec![]);
    };
    let alpha = (1.0 + margin) * threshold;
    let amplitudes = (0..n).map(|i| if global.contains(i) { alpha } else { 1.0 }).collect();
    outcome(
        g,
        c,
        DriverField::new(amplitudes)?,
        &catalog,
        Some(alpha),
        format!("alpha assignment on {global}: alpha = {alpha:.6}"),
        vec!["alpha assignment assumes the solution is known".into()],
    )
}

/// How β is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaRule {
    /// `(1−ε)/√n`; valid whenever `m > p`.
    Conservative,
    /// `(1−ε)·√((m−p)/(n−p))` with `m` the maximum size and `p` the number
    /// of its nodes inside the suppressed union.
    Hint { m: usize, p: usize },
    Fixed(f64),
}

/// `Δ_i = β` on `union` (the nodes of all known local minima), 1 elsewhere.
pub fn beta_assignment(g: &Graph, c: f64, union: &[usize], rule: BetaRule) -> Result<StrategyOutcome> {
    let n = g.n();
    if union.is_empty() {
        return Err(Error::InvalidArgument("empty local-minima union".into()));
    }
    if let Some(&bad) = union.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidArgument(format!("node {bad} outside 0..{n}")));
    }
    let catalog = enumerate_maximal_independent_sets(g);
    let mut warnings = Vec::new();
    let (beta, rationale) = match rule {
        BetaRule::Conservative => {
            let b = (1.0 - BETA_EPSILON) / (n as f64).sqrt();
            (b, format!("beta assignment, conservative rule: beta = 0.95/sqrt({n}) = {b:.6}"))
        }
        BetaRule::Hint { m, p } => {
            if p > m || m > n {
                return Err(Error::InvalidArgument(format!("invalid size hint m = {m}, p = {p}")));
            }
            if m == p {
                let driver = DriverField::uniform(n, 1.0)?;
                return Ok(StrategyOutcome {
                    driver,
                    c,
                    parameter: None,
                    f_value: None,
                    certificate: None,
                    rationale: "m = p; assignment may not eliminate all such crossings".into(),
                    warnings: vec!["m = p: no certificate".into()],
                });
            }
            let b = (1.0 - BETA_EPSILON) * (((m - p) as f64) / ((n - p) as f64)).sqrt();
            (b, format!("beta assignment, hint m = {m}, p = {p}: beta = {b:.6}"))
        }
        BetaRule::Fixed(b) => {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidArgument(format!("beta must be positive, got {b}")));
            }
            (b, format!("beta assignment, fixed beta = {b:.6}"))
        }
    };
    let mut mask = 0u32;
    for &i in union {
        mask |= 1 << i;
    }
    if catalog.maximum_sets().iter().any(|s| s.mask() & !mask == 0) {
        warnings.push("m = p: a maximum set lies inside the union; assignment may not eliminate all such crossings".into());
    }
    let amplitudes = (0..n).map(|i| if mask >> i & 1 == 1 { beta } else { 1.0 }).collect();
    let mut out = outcome(g, c, DriverField::new(amplitudes)?, &catalog, Some(beta), rationale, warnings)?;
    if !out.warnings.is_empty() {
        out.certificate = None;
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct AvoidOptions {
    pub grid: LambdaGrid,
    pub k: usize,
    pub solver: SolverOptions,
}

impl Default for AvoidOptions {
    fn default() -> Self {
        Self {
            grid: LambdaGrid::default(),
            k: 2,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AvoidStatus {
    Converged,
    BudgetExhausted,
}

/// One detection pass of [`iterative_avoid`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub driver: DriverField,
    pub f_value: Option<f64>,
    pub swap: bool,
    pub swap_lambda: Option<f64>,
    pub g_min: f64,
    pub lambda_min: f64,
    /// λ at which the ground state was inspected, when it swapped.
    pub probe_lambda: Option<f64>,
    /// Local minima found to dominate the ground state after the swap.
    pub visited: Vec<SubsetState>,
    /// Suppressed nodes after this round.
    pub union: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AvoidOutcome {
    pub status: AvoidStatus,
    /// Driver adjustments made.
    pub rounds: usize,
    pub outcome: StrategyOutcome,
    pub log: Vec<RoundRecord>,
}

/// Sweep, and while the ground state swaps: read off which local minima it
/// swapped into (weight ≥ 0.1 among local-minimum states just past the
/// swap), add them and their degenerate neighbours to the suppressed union,
/// and reassign β conservatively. Stops after `budget` adjustments.
pub fn iterative_avoid(inst: &AnnealInstance, budget: usize, options: &AvoidOptions) -> Result<AvoidOutcome> {
    let g = inst.graph();
    let catalog = enumerate_maximal_independent_sets(g);
    let global = catalog.maximum_sets();
    let locals = catalog.local_sets();
    let mut current = StrategyOutcome {
        driver: inst.driver().clone(),
        c: inst.c(),
        parameter: None,
        f_value: certify(g, inst.driver(), &catalog)?,
        certificate: None,
        rationale: "initial driver".into(),
        warnings: vec![],
    };
    current.certificate = current.f_value.filter(|&f| f > 0.0);
    let mut union = 0u32;
    let mut log = Vec::new();
    let mut rounds = 0;
    loop {
        let run = inst.with_driver(current.driver.clone())?;
        let sweeper = Sweeper::new(&run, options.k.max(2), &global, &locals, options.solver)?;
        let mut trace = sweeper.sweep(&options.grid)?;
        let obs = detect_anticrossing(&mut trace, &sweeper, None)?;
        let mut record = RoundRecord {
            round: rounds,
            driver: current.driver.clone(),
            f_value: current.f_value,
            swap: obs.swap,
            swap_lambda: obs.swap_lambda,
            g_min: obs.g_min,
            lambda_min: obs.lambda_min,
            probe_lambda: None,
            visited: vec![],
            union: nodes_of(union),
        };
        let Some(swap_lambda) = obs.swap_lambda else {
            log.push(record);
            return Ok(AvoidOutcome {
                status: AvoidStatus::Converged,
                rounds,
                outcome: current,
                log,
            });
        };
        if rounds == budget {
            log.push(record);
            return Ok(AvoidOutcome {
                status: AvoidStatus::BudgetExhausted,
                rounds,
                outcome: current,
                log,
            });
        }
        // the post-swap point where the locals are most visible
        let probe = trace
            .points
            .iter()
            .filter(|p| p.lambda > swap_lambda)
            .max_by(|a, b| a.overlap_locals.total_cmp(&b.overlap_locals))
            .map(|p| p.lambda)
            .unwrap_or(swap_lambda);
        let ground = sweeper.eigenpairs(probe)?.vectors.swap_remove(0);
        let weights: Vec<f64> = locals.iter().map(|s| ground.as_slice()[s.mask() as usize].powi(2)).collect();
        let total: f64 = weights.iter().sum();
        let mut visited: Vec<SubsetState> = locals
            .iter()
            .zip(&weights)
            .filter(|&(_, &w)| total > 0.0 && w / total >= VISIT_THRESHOLD)
            .map(|(&s, _)| s)
            .collect();
        if visited.is_empty() {
            let best = (0..locals.len())
                .max_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(b.cmp(&a)))
                .ok_or_else(|| Error::InvalidArgument("swap without local minima".into()))?;
            visited.push(locals[best]);
        }
        for &s in &visited {
            union |= s.mask();
            for t in degenerate_neighbors(g, s)? {
                union |= t.mask();
            }
        }
        record.probe_lambda = Some(probe);
        record.visited = visited;
        record.union = nodes_of(union);
        log.push(record);
        current = beta_assignment(g, inst.c(), &nodes_of(union), BetaRule::Conservative)?;
        rounds += 1;
    }
}

fn nodes_of(mask: u32) -> Vec<usize> {
    (0..32).filter(|i| mask >> i & 1 == 1).collect()
}
