//! Lowest eigenpairs of the real symmetric `H(λ)`.
//!
//! Small spaces are diagonalised densely. Larger ones use a matrix-free
//! Lanczos iteration with full reorthogonalisation that locks one converged
//! eigenvector at a time; later runs stay orthogonal to everything locked,
//! so repeated eigenvalues are found with their multiplicity.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{AnnealInstance, StateVector};

/// Largest dimension the dense path accepts.
pub const DENSE_MAX_DIM: usize = 4096;

/// `Auto` switches from dense to Lanczos above this dimension.
pub const AUTO_DENSE_DIM: usize = 64;

/// Memory budget for one Krylov basis, in bytes.
const BASIS_BYTES: usize = 512 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SolverKind {
    #[default]
    Auto,
    Dense,
    Lanczos,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub kind: SolverKind,
    /// Residual norm `‖Hx − θx‖` accepted as converged.
    pub tol: f64,
    /// Krylov basis size before a restart; clamped by dimension and memory.
    pub max_basis: usize,
    pub max_restarts: usize,
    /// Seeds the random Lanczos start vectors.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kind: SolverKind::Auto,
            tol: 1e-10,
            max_basis: 250,
            max_restarts: 60,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn with_kind(self, kind: SolverKind) -> Self {
        Self { kind, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Eigenpairs in ascending eigenvalue order.
#[derive(Clone, Debug)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<StateVector>,
    pub residuals: Vec<f64>,
}

pub fn eigensolve_lowest(
    inst: &AnnealInstance,
    lambda: f64,
    k: usize,
    opts: &SolverOptions,
) -> Result<Eigenpairs> {
    let dim = inst.dim();
    if k == 0 || k > dim {
        return Err(Error::InvalidArgument(format!(
            "requested {k} eigenpairs of a {dim}-dimensional space"
        )));
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite, got {lambda}")));
    }
    let dense = match opts.kind {
        SolverKind::Dense => true,
        SolverKind::Lanczos => false,
        SolverKind::Auto => dim <= AUTO_DENSE_DIM || k == dim,
    };
    if dense {
        if dim > DENSE_MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "dense solver limited to dimension {DENSE_MAX_DIM}, got {dim}"
            )));
        }
        Ok(dense_lowest(inst, lambda, k))
    } else {
        lanczos_lowest(inst, lambda, k, opts)
    }
}

/// Materialises `H(λ)` as a dense matrix.
pub fn dense_hamiltonian(inst: &AnnealInstance, lambda: f64) -> DMatrix<f64> {
    let dim = inst.dim();
    let n = inst.graph().n();
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for z in 0..dim {
        h[(z, z)] = inst.diagonal()[z];
        for i in 0..n {
            h[(z, z ^ (1 << i))] -= lambda * inst.driver().get(i);
        }
    }
    h
}

fn dense_lowest(inst: &AnnealInstance, lambda: f64, k: usize) -> Eigenpairs {
    let eig = SymmetricEigen::new(dense_hamiltonian(inst, lambda));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        values.push(eig.eigenvalues[idx]);
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        fix_sign(&mut v);
        vectors.push(StateVector::new(v));
    }
    let residuals = vectors
        .iter()
        .zip(&values)
        .map(|(v, &theta)| residual(inst, lambda, v.as_slice(), theta))
        .collect();
    Eigenpairs {
        values,
        vectors,
        residuals,
    }
}

fn lanczos_lowest(
    inst: &AnnealInstance,
    lambda: f64,
    k: usize,
    opts: &SolverOptions,
) -> Result<Eigenpairs> {
    let dim = inst.dim();
    let memory_cap = (BASIS_BYTES / (8 * dim)).max(8);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut random = |dim: usize| -> Vec<f64> { (0..dim).map(|_| rng.random::<f64>() - 0.5).collect() };
    let mut locked: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    let mut values: Vec<f64> = Vec::with_capacity(k + 1);
    let mut residuals: Vec<f64> = Vec::with_capacity(k + 1);
    let mut start = random(dim);
    let mut best = f64::INFINITY;
    let mut runs = 0;
    let max_runs = (opts.max_restarts + 1) * (k + 1);

    // with every Δ_i > 0 the ground state is non-degenerate, so a lone
    // ground pair needs no check for skipped copies
    let unique_ground = k == 1 && inst.driver().as_slice().iter().all(|&d| d > 0.0) && lambda != 0.0;
    loop {
        // once k pairs are locked, one more run checks that nothing lower
        // was skipped (a Krylov space holds one copy of a repeated level)
        let verifying = locked.len() == k;
        if verifying && (locked.len() == dim || unique_ground) {
            break;
        }
        if runs == max_runs {
            return Err(Error::NonConvergence { lambda, residual: best });
        }
        runs += 1;
        let want = if verifying { 1 } else { k - locked.len() };
        for _ in 0..2 {
            orthogonalize(&mut start, &locked);
        }
        if normalize(&mut start) == 0.0 {
            start = random(dim);
            continue;
        }
        let room = dim - locked.len();
        let basis = opts.max_basis.min(memory_cap).min(room).max(want.min(room));
        let pairs = lanczos_run(inst, lambda, &start, &locked, basis, want, opts.tol);
        let mut pending: Vec<Vec<f64>> = Vec::new();
        let mut progress = false;
        for pair in pairs {
            best = best.min(pair.residual);
            if pair.residual >= opts.tol {
                pending.push(pair.vector);
                continue;
            }
            if verifying {
                let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if pair.value < top - opts.tol {
                    let drop = values.iter().position(|&v| v == top).unwrap();
                    values.swap_remove(drop);
                    locked.swap_remove(drop);
                    residuals.swap_remove(drop);
                } else {
                    return Ok(sorted(values, locked, residuals));
                }
            }
            // keep locked vectors orthonormal even across near-equal Ritz values
            let mut v = pair.vector;
            for _ in 0..2 {
                orthogonalize(&mut v, &locked);
            }
            normalize(&mut v);
            let r = residual(inst, lambda, &v, pair.value);
            if r < opts.tol && locked.len() < k {
                fix_sign(&mut v);
                locked.push(v);
                values.push(pair.value);
                residuals.push(r);
                progress = true;
            } else {
                pending.push(v);
            }
        }
        start = if pending.is_empty() || (progress && pending.len() > 1) {
            random(dim)
        } else {
            let mut acc = vec![0.0; dim];
            for v in &pending {
                axpy(1.0, v, &mut acc);
            }
            acc
        };
    }
    Ok(sorted(values, locked, residuals))
}

fn sorted(values: Vec<f64>, mut vectors: Vec<Vec<f64>>, residuals: Vec<f64>) -> Eigenpairs {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    Eigenpairs {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors: order
            .iter()
            .map(|&i| StateVector::new(std::mem::take(&mut vectors[i])))
            .collect(),
        residuals: order.iter().map(|&i| residuals[i]).collect(),
    }
}

struct RitzPair {
    value: f64,
    vector: Vec<f64>,
    residual: f64,
}

/// One Lanczos pass from `start` (unit norm, orthogonal to `locked`) that
/// stops once the lowest `want` Ritz pairs look converged or the basis is
/// full. Returns those pairs, ascending, with true residuals.
fn lanczos_run(
    inst: &AnnealInstance,
    lambda: f64,
    start: &[f64],
    locked: &[Vec<f64>],
    max_basis: usize,
    want: usize,
    tol: f64,
) -> Vec<RitzPair> {
    let dim = start.len();
    let mut basis: Vec<Vec<f64>> = vec![start.to_vec()];
    let mut alphas: Vec<f64> = Vec::with_capacity(max_basis);
    let mut betas: Vec<f64> = Vec::with_capacity(max_basis);
    let mut w = vec![0.0; dim];

    for j in 0..max_basis {
        inst.apply_into(lambda, &basis[j], &mut w);
        let alpha = dot(&basis[j], &w);
        alphas.push(alpha);
        // classical Gram-Schmidt, repeated when the first pass cancelled
        // most of the vector
        let before = norm(&w);
        orthogonalize(&mut w, locked);
        orthogonalize(&mut w, &basis);
        let mut beta = norm(&w);
        if beta < std::f64::consts::FRAC_1_SQRT_2 * before {
            orthogonalize(&mut w, locked);
            orthogonalize(&mut w, &basis);
            beta = norm(&w);
        }
        let steps = j + 1;
        let breakdown = beta <= 1e-12 * alpha.abs().max(1.0);
        let count = want.min(steps);
        let ritz = lowest_ritz(&alphas, &betas, count);
        // a small margin keeps the estimate honest against rounding
        let settled = count == want && ritz.iter().all(|(_, s)| beta * s[steps - 1].abs() < 0.5 * tol);
        if settled || breakdown || steps == max_basis {
            return ritz
                .into_iter()
                .map(|(theta, coeffs)| {
                    let mut x = vec![0.0; dim];
                    for (q, &s) in basis.iter().zip(&coeffs) {
                        axpy(s, q, &mut x);
                    }
                    normalize(&mut x);
                    let r = residual_with(inst, lambda, &x, theta, &mut w);
                    RitzPair {
                        value: theta,
                        vector: x,
                        residual: r,
                    }
                })
                .collect();
        }
        betas.push(beta);
        let inv = 1.0 / beta;
        basis.push(w.iter().map(|x| x * inv).collect());
    }
    unreachable!("the loop returns once the basis is full")
}

/// The `count` lowest eigenpairs of the symmetric tridiagonal matrix
/// (alphas, betas): Sturm-sequence bisection for the values, inverse
/// iteration for the vectors.
fn lowest_ritz(alphas: &[f64], betas: &[f64], count: usize) -> Vec<(f64, Vec<f64>)> {
    let m = alphas.len();
    if m == 1 {
        return vec![(alphas[0], vec![1.0])];
    }
    let radius = |i: usize| {
        let left = if i > 0 { betas[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < m { betas[i].abs() } else { 0.0 };
        left + right
    };
    let lower = (0..m).map(|i| alphas[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let upper = (0..m).map(|i| alphas[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    let scale = lower.abs().max(upper.abs()).max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * scale;
    // number of eigenvalues below x
    let below = |x: f64| {
        let mut n = 0;
        let mut q = alphas[0] - x;
        for i in 0..m {
            if i > 0 {
                let prev = if q.abs() < tiny { -tiny } else { q };
                q = alphas[i] - x - betas[i - 1] * betas[i - 1] / prev;
            }
            if q < 0.0 {
                n += 1;
            }
        }
        n
    };
    (0..count)
        .map(|idx| {
            let (mut lo, mut hi) = (lower, upper);
            while hi - lo > 2.0 * f64::EPSILON * scale {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if below(mid) > idx {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let theta = 0.5 * (lo + hi);
            let mut v: Vec<f64> = (0..m).map(|i| 1.0 + (i as f64 * 0.618).fract()).collect();
            for _ in 0..3 {
                shifted_solve(alphas, betas, theta, tiny, &mut v);
                let nrm = norm(&v);
                v.iter_mut().for_each(|x| *x /= nrm);
            }
            (theta, v)
        })
        .collect()
}

/// Solves `(T − σ) x = rhs` in place by Gaussian elimination with partial
/// pivoting; zero pivots are replaced by `tiny`.
fn shifted_solve(alphas: &[f64], betas: &[f64], sigma: f64, tiny: f64, rhs: &mut [f64]) {
    let m = alphas.len();
    let mut d: Vec<f64> = alphas.iter().map(|a| a - sigma).collect();
    let mut du: Vec<f64> = betas[..m - 1].to_vec();
    let mut du2 = vec![0.0; m.saturating_sub(2)];
    let dl = &betas[..m - 1];
    for i in 0..m - 1 {
        if d[i].abs() >= dl[i].abs() {
            let pivot = if d[i] == 0.0 { tiny } else { d[i] };
            d[i] = pivot;
            let fact = dl[i] / pivot;
            d[i + 1] -= fact * du[i];
            rhs[i + 1] -= fact * rhs[i];
        } else {
            let fact = d[i] / dl[i];
            let (b, q) = (du[i], d[i + 1]);
            d[i] = dl[i];
            du[i] = q;
            d[i + 1] = b - fact * q;
            if i + 2 < m {
                du2[i] = du[i + 1];
                du[i + 1] *= -fact;
            }
            rhs.swap(i, i + 1);
            rhs[i + 1] -= fact * rhs[i];
        }
    }
    for i in (0..m).rev() {
        let mut acc = rhs[i];
        if i + 1 < m {
            acc -= du[i] * rhs[i + 1];
        }
        if i + 2 < m {
            acc -= du2[i] * rhs[i + 2];
        }
        let pivot = if d[i].abs() < tiny { tiny.copysign(d[i]) } else { d[i] };
        rhs[i] = acc / pivot;
    }
}

/// `‖H x − θ x‖`.
pub fn residual(inst: &AnnealInstance, lambda: f64, x: &[f64], theta: f64) -> f64 {
    let mut scratch = vec![0.0; x.len()];
    residual_with(inst, lambda, x, theta, &mut scratch)
}

fn residual_with(inst: &AnnealInstance, lambda: f64, x: &[f64], theta: f64, scratch: &mut [f64]) -> f64 {
    inst.apply_into(lambda, x, scratch);
    scratch
        .iter()
        .zip(x)
        .map(|(hx, xi)| (hx - theta * xi).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Makes the largest-magnitude component positive.
fn fix_sign(v: &mut [f64]) {
    let mut pivot = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[pivot].abs() + 1e-14 {
            pivot = i;
        }
    }
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Four interleaved partial sums, so the loop vectorises.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let nrm = norm(v);
    if nrm > 1e-300 {
        let inv = 1.0 / nrm;
        v.iter_mut().for_each(|x| *x *= inv);
        nrm
    } else {
        0.0
    }
}

fn orthogonalize(w: &mut [f64], against: &[Vec<f64>]) {
    for q in against {
        let c = dot(q, w);
        axpy(-c, q, w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_graph, Graph, GraphKind};

    fn k1() -> AnnealInstance {
        AnnealInstance::uniform(Graph::empty(1).unwrap(), 2.0).unwrap()
    }

    #[test]
    fn single_spin_closed_form() {
        let e = eigensolve_lowest(&k1(), 0.5, 2, &SolverOptions::default()).unwrap();
        let r = 0.5f64.sqrt();
        assert!((e.values[0] - (-0.5 - r)).abs() < 1e-12);
        assert!((e.values[1] - (-0.5 + r)).abs() < 1e-12);
    }

    #[test]
    fn zero_lambda_gives_sorted_classical_energies() {
        let g = generate_graph(&GraphKind::Cycle { n: 5 }, 0).unwrap();
        let inst = AnnealInstance::uniform(g, 2.5).unwrap();
        let e = eigensolve_lowest(&inst, 0.0, 32, &SolverOptions::default()).unwrap();
        let mut want = inst.diagonal().to_vec();
        want.sort_by(f64::total_cmp);
        for (a, b) in e.values.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_free_spins() {
        let inst = AnnealInstance::uniform(Graph::empty(2).unwrap(), 2.0).unwrap();
        let want = -2.0 * (0.5 + (0.25f64 + 0.09).sqrt());
        for kind in [SolverKind::Dense, SolverKind::Lanczos] {
            let e = eigensolve_lowest(&inst, 0.3, 1, &SolverOptions::default().with_kind(kind)).unwrap();
            assert!((e.values[0] - want).abs() < 1e-10, "{kind:?}");
        }
    }

    #[test]
    fn lanczos_resolves_degenerate_levels() {
        // K4 at c = 3 has a threefold-degenerate first excited level by symmetry
        let g = generate_graph(&GraphKind::Complete { n: 4 }, 0).unwrap();
        let inst = AnnealInstance::uniform(g, 3.0).unwrap();
        let dense = eigensolve_lowest(&inst, 0.3, 6, &SolverOptions::default().with_kind(SolverKind::Dense)).unwrap();
        let lanczos = eigensolve_lowest(&inst, 0.3, 6, &SolverOptions::default().with_kind(SolverKind::Lanczos)).unwrap();
        for (a, b) in dense.values.iter().zip(&lanczos.values) {
            assert!((a - b).abs() < 1e-9, "{:?} vs {:?}", dense.values, lanczos.values);
        }
        assert!(lanczos.residuals.iter().all(|&r| r < 1e-10));
    }

    #[test]
    fn rejects_bad_requests() {
        let opts = SolverOptions::default();
        assert!(eigensolve_lowest(&k1(), 0.5, 0, &opts).is_err());
        assert!(eigensolve_lowest(&k1(), 0.5, 3, &opts).is_err());
        assert!(eigensolve_lowest(&k1(), f64::NAN, 1, &opts).is_err());
    }

    #[test]
    fn ground_vector_is_positive() {
        let g = generate_graph(&GraphKind::Split { clique: 4, independent: 2 }, 0).unwrap();
        let inst = AnnealInstance::uniform(g, 6.0).unwrap();
        let e = eigensolve_lowest(&inst, 0.4, 1, &SolverOptions::default().with_kind(SolverKind::Lanczos)).unwrap();
        assert!(e.vectors[0].as_slice().iter().all(|&x| x > 0.0));
    }
}
