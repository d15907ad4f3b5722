//! Exact low-lying spectra of `H(λ)` over a λ grid, minimum-gap location and
//! anticrossing detection by tracking the character of the ground state.

mod eigen;

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::SubsetState;
use crate::model::{AnnealInstance, StateVector};
use crate::perturb::PredictedCrossing;

pub use eigen::{
    dense_hamiltonian, eigensolve_lowest, residual, Eigenpairs, SolverKind, SolverOptions,
    AUTO_DENSE_DIM, DENSE_MAX_DIM,
};

/// λ-resolution of every refinement (gap minimum, swap location, overlap jumps).
pub const LAMBDA_RESOLUTION: f64 = 1e-4;

/// Character threshold for the ground state.
pub const SWAP_THRESHOLD: f64 = 0.5;

/// Cap on extra samples spent restoring overlap continuity.
const MAX_CONTINUITY_SAMPLES: usize = 256;

/// Ascending, positive λ values.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaGrid(Vec<f64>);

impl LambdaGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty lambda grid".into()));
        }
        if points.iter().any(|&x| !x.is_finite() || x <= 0.0) {
            return Err(Error::InvalidArgument("lambda grid must be positive and finite".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("lambda grid must be strictly ascending".into()));
        }
        Ok(Self(points))
    }

    /// `points` values spaced geometrically over `[lo, hi]`.
    pub fn geometric(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo > 0.0 && hi.is_finite()) || points == 0 || (points > 1 && hi <= lo) {
            return Err(Error::InvalidArgument(format!(
                "invalid geometric grid {lo}:{hi}:{points}"
            )));
        }
        if points == 1 {
            return Self::new(vec![lo]);
        }
        let ratio = (hi / lo).ln() / (points - 1) as f64;
        let mut v: Vec<f64> = (0..points).map(|i| lo * (ratio * i as f64).exp()).collect();
        v[points - 1] = hi;
        Self::new(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self::geometric(0.01, 1.0, 64).expect("default grid is valid")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub lambda: f64,
    /// The `k` lowest eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Ground-state weight on the tracked global-minimum basis states.
    pub overlap_global: f64,
    /// Ground-state weight on the tracked local-minimum basis states.
    pub overlap_locals: f64,
    /// Adiabatic level labels from overlap matching; `None` for points added
    /// by refinement.
    pub labels: Option<Vec<usize>>,
}

impl TracePoint {
    pub fn gap(&self) -> Option<f64> {
        (self.eigenvalues.len() >= 2).then(|| self.eigenvalues[1] - self.eigenvalues[0])
    }
}

/// Sweep output, sorted by λ. Refinement inserts points in place.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumTrace {
    pub k: usize,
    pub points: Vec<TracePoint>,
}

impl SpectrumTrace {
    pub fn lambdas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lambda).collect()
    }

    fn insert(&mut self, point: TracePoint) {
        match self
            .points
            .binary_search_by(|p| p.lambda.total_cmp(&point.lambda))
        {
            Ok(_) => {}
            Err(pos) => self.points.insert(pos, point),
        }
    }

    /// CSV with header `lambda,e0,…,e{k−1},overlap_M,overlap_locals`, values
    /// in scientific notation with 12 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = String::from("lambda");
        for i in 0..self.k {
            header.push_str(&format!(",e{i}"));
        }
        header.push_str(",overlap_M,overlap_locals");
        writeln!(w, "{header}")?;
        for p in &self.points {
            let mut row = format!("{:.11e}", p.lambda);
            for e in &p.eigenvalues {
                row.push_str(&format!(",{e:.11e}"));
            }
            row.push_str(&format!(",{:.11e},{:.11e}", p.overlap_global, p.overlap_locals));
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Samples the `k` lowest levels of one instance and measures the ground
/// state's weight on the tracked minima.
#[derive(Clone, Debug)]
pub struct Sweeper<'a> {
    inst: &'a AnnealInstance,
    k: usize,
    global: Vec<SubsetState>,
    locals: Vec<SubsetState>,
    opts: SolverOptions,
}

impl<'a> Sweeper<'a> {
    /// States listed in both `global` and `locals` count as global only.
    pub fn new(
        inst: &'a AnnealInstance,
        k: usize,
        global: &[SubsetState],
        locals: &[SubsetState],
        opts: SolverOptions,
    ) -> Result<Self> {
        if k == 0 || k > inst.dim() {
            return Err(Error::InvalidArgument(format!(
                "k = {k} outside 1..={}",
                inst.dim()
            )));
        }
        let limit = inst.dim() as u32;
        if global.iter().chain(locals).any(|s| s.mask() >= limit) {
            return Err(Error::InvalidArgument("tracked state outside the instance".into()));
        }
        let mut global = global.to_vec();
        global.sort_unstable();
        global.dedup();
        let mut locals: Vec<SubsetState> = locals
            .iter()
            .copied()
            .filter(|s| global.binary_search(s).is_err())
            .collect();
        locals.sort_unstable();
        locals.dedup();
        Ok(Self {
            inst,
            k,
            global,
            locals,
            opts,
        })
    }

    pub fn instance(&self) -> &AnnealInstance {
        self.inst
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// The `k` lowest eigenpairs at `lambda`.
    pub fn eigenpairs(&self, lambda: f64) -> Result<Eigenpairs> {
        // per-λ seed keeps results independent of evaluation order
        let opts = self.opts.with_seed(self.opts.seed ^ lambda.to_bits());
        eigensolve_lowest(self.inst, lambda, self.k, &opts)
    }

    fn point(&self, lambda: f64, eig: &Eigenpairs, labels: Option<Vec<usize>>) -> TracePoint {
        let ground = &eig.vectors[0];
        TracePoint {
            lambda,
            eigenvalues: eig.values.clone(),
            overlap_global: ground.weight_on(&self.global).clamp(0.0, 1.0),
            overlap_locals: ground.weight_on(&self.locals).clamp(0.0, 1.0),
            labels,
        }
    }

    /// One fresh eigensolve.
    pub fn sample(&self, lambda: f64) -> Result<TracePoint> {
        let eig = self.eigenpairs(lambda)?;
        Ok(self.point(lambda, &eig, None))
    }

    /// Solves every grid point in parallel and merges in grid order, so the
    /// result does not depend on the worker count.
    pub fn sweep(&self, grid: &LambdaGrid) -> Result<SpectrumTrace> {
        let lambdas = grid.as_slice();
        let batch = rayon::current_num_threads().max(1);
        let mut points = Vec::with_capacity(lambdas.len());
        let mut prev: Option<(Vec<StateVector>, Vec<usize>)> = None;
        for chunk in lambdas.chunks(batch) {
            let solved: Vec<Result<Eigenpairs>> =
                chunk.par_iter().map(|&l| self.eigenpairs(l)).collect();
            for (&lambda, eig) in chunk.iter().zip(solved) {
                let eig = eig?;
                let labels: Vec<usize> = match &prev {
                    None => (0..self.k).collect(),
                    Some((vectors, labels)) => match_levels(vectors, &eig.vectors)
                        .into_iter()
                        .map(|a| labels[a])
                        .collect(),
                };
                points.push(self.point(lambda, &eig, Some(labels.clone())));
                prev = Some((eig.vectors, labels));
            }
        }
        Ok(SpectrumTrace { k: self.k, points })
    }
}

/// For each current level, the index of the previous level it continues,
/// chosen by greedy maximal squared overlap; ties go to lower energy.
pub fn match_levels(prev: &[StateVector], cur: &[StateVector]) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(prev.len() * cur.len());
    for (b, v) in cur.iter().enumerate() {
        for (a, u) in prev.iter().enumerate() {
            pairs.push((u.dot(v).powi(2), b, a));
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut out = vec![usize::MAX; cur.len()];
    let mut taken = vec![false; prev.len()];
    for (_, b, a) in pairs {
        if out[b] == usize::MAX && !taken[a] {
            out[b] = a;
            taken[a] = true;
        }
    }
    // more current than previous levels cannot happen within one sweep, but
    // keep the mapping total
    for (b, slot) in out.iter_mut().enumerate() {
        if *slot == usize::MAX {
            *slot = b.min(prev.len().saturating_sub(1));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapMinimum {
    pub g_min: f64,
    pub lambda_min: f64,
    /// The coarse minimum sat at a grid endpoint, so no refinement was done.
    pub at_endpoint: bool,
}

/// Coarse minimum of `E1 − E0` over the trace, refined by golden-section
/// search between the neighbouring grid points when it is interior.
pub fn min_gap(trace: &mut SpectrumTrace, sweeper: &Sweeper) -> Result<GapMinimum> {
    if trace.k < 2 || sweeper.k() < 2 {
        return Err(Error::InvalidArgument("gap needs k >= 2".into()));
    }
    if trace.points.is_empty() {
        return Err(Error::InvalidArgument("empty trace".into()));
    }
    let gaps: Vec<f64> = trace.points.iter().map(|p| p.gap().unwrap()).collect();
    let mut best = 0;
    for (i, g) in gaps.iter().enumerate() {
        if *g < gaps[best] {
            best = i;
        }
    }
    let last = gaps.len() - 1;
    if best == 0 || best == last {
        return Ok(GapMinimum {
            g_min: gaps[best],
            lambda_min: trace.points[best].lambda,
            at_endpoint: true,
        });
    }
    let lo = trace.points[best - 1].lambda;
    let hi = trace.points[best + 1].lambda;
    let mut samples = Vec::new();
    let (lambda, gap) = golden_section_minimize(
        |l| {
            let p = sweeper.sample(l)?;
            let g = p.gap().unwrap();
            samples.push(p);
            Ok(g)
        },
        lo,
        hi,
        LAMBDA_RESOLUTION,
    )?;
    for p in samples {
        trace.insert(p);
    }
    let (g_min, lambda_min) = if gap < gaps[best] {
        (gap, lambda)
    } else {
        (gaps[best], trace.points.iter().find(|p| p.gap() == Some(gaps[best])).unwrap().lambda)
    };
    Ok(GapMinimum {
        g_min,
        lambda_min,
        at_endpoint: false,
    })
}

/// Golden-section minimisation of `f` on `[a, b]` until the bracket is
/// narrower than `tol`. Returns the best abscissa evaluated and its value.
pub fn golden_section_minimize<F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1)?;
            if f1 < best.1 {
                best = (x1, f1);
            }
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2)?;
            if f2 < best.1 {
                best = (x2, f2);
            }
        }
    }
    Ok(best)
}

/// Inserts midpoints wherever `overlap_global` jumps by half or more between
/// neighbours, down to the λ-resolution.
pub fn refine_overlap_jumps(trace: &mut SpectrumTrace, sweeper: &Sweeper) -> Result<()> {
    let mut budget = MAX_CONTINUITY_SAMPLES;
    loop {
        let jump = trace.points.windows(2).position(|w| {
            (w[1].overlap_global - w[0].overlap_global).abs() >= 0.5
                && w[1].lambda - w[0].lambda > LAMBDA_RESOLUTION
        });
        let Some(i) = jump else { return Ok(()) };
        if budget == 0 {
            return Ok(());
        }
        budget -= 1;
        let mid = 0.5 * (trace.points[i].lambda + trace.points[i + 1].lambda);
        let p = sweeper.sample(mid)?;
        trace.insert(p);
    }
}

/// Where the ground-state character is first taken over by the locals: the
/// first downward crossing of `overlap_global` through ½ that is followed by
/// a point where the locals outweigh the global minimum. A drop through ½
/// that is pure dressing (weight leaking into non-minimum states) is not a
/// swap.
pub fn find_swap(trace: &mut SpectrumTrace, sweeper: &Sweeper) -> Result<Option<f64>> {
    let pts = &trace.points;
    let mut bracket = None;
    for i in 0..pts.len().saturating_sub(1) {
        if pts[i].overlap_global >= SWAP_THRESHOLD && pts[i + 1].overlap_global < SWAP_THRESHOLD {
            let dominated = pts[i + 1..]
                .iter()
                .any(|p| p.overlap_locals > p.overlap_global);
            if dominated {
                bracket = Some((pts[i].clone(), pts[i + 1].clone()));
                break;
            }
        }
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Ok(None);
    };
    let mut samples = Vec::new();
    while hi.lambda - lo.lambda > LAMBDA_RESOLUTION {
        let mid = sweeper.sample(0.5 * (lo.lambda + hi.lambda))?;
        if mid.overlap_global >= SWAP_THRESHOLD {
            lo = mid.clone();
        } else {
            hi = mid.clone();
        }
        samples.push(mid);
    }
    for p in samples {
        trace.insert(p);
    }
    let (a, b) = (lo.overlap_global, hi.overlap_global);
    let t = if a > b { (a - SWAP_THRESHOLD) / (a - b) } else { 0.5 };
    Ok(Some(lo.lambda + t.clamp(0.0, 1.0) * (hi.lambda - lo.lambda)))
}

/// How the perturbative prediction and the exact sweep compare.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Agreement {
    /// Crossing predicted within the swept range and observed.
    BothCross,
    /// Neither predicted within the swept range nor observed.
    NeitherCrosses,
    PredictedOnly,
    ObservedOnly,
    /// No prediction supplied.
    NoPrediction,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossingObservation {
    pub g_min: f64,
    pub lambda_min: f64,
    pub gap_at_endpoint: bool,
    pub swap: bool,
    pub swap_lambda: Option<f64>,
    pub predicted_lambda_star: Option<f64>,
    pub agreement: Agreement,
}

/// Refines overlap jumps, locates any character swap and the minimum gap,
/// and compares with `predicted`.
pub fn detect_anticrossing(
    trace: &mut SpectrumTrace,
    sweeper: &Sweeper,
    predicted: Option<&PredictedCrossing>,
) -> Result<CrossingObservation> {
    refine_overlap_jumps(trace, sweeper)?;
    let swap_lambda = find_swap(trace, sweeper)?;
    let gap = min_gap(trace, sweeper)?;
    let hi = trace.points.last().map_or(0.0, |p| p.lambda);
    let swap = swap_lambda.is_some();
    let predicted_lambda_star = predicted.and_then(|p| p.lambda_star);
    let agreement = match predicted {
        None => Agreement::NoPrediction,
        Some(_) => match (predicted_lambda_star.is_some_and(|l| l <= hi), swap) {
            (true, true) => Agreement::BothCross,
            (false, false) => Agreement::NeitherCrosses,
            (true, false) => Agreement::PredictedOnly,
            (false, true) => Agreement::ObservedOnly,
        },
    };
    Ok(CrossingObservation {
        g_min: gap.g_min,
        lambda_min: gap.lambda_min,
        gap_at_endpoint: gap.at_endpoint,
        swap,
        swap_lambda,
        predicted_lambda_star,
        agreement,
    })
}
