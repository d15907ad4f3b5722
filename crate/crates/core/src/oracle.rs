//! Brute-force and closed-form references for the tests. Everything here
//! builds its own dense matrices from the graph; nothing goes through the
//! matrix-free operator or the perturbative code it is meant to check.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, SubsetState};
use crate::model::AnnealInstance;

/// Largest `n` for [`brute_force_landscape`].
pub const LANDSCAPE_MAX_NODES: usize = 16;

/// Largest `n` for the dense oracles.
pub const DENSE_ORACLE_MAX_NODES: usize = 10;

/// Largest order [`rs_series`] computes.
pub const MAX_SERIES_ORDER: usize = 10;

const ENERGY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LandscapePoint {
    pub state: SubsetState,
    pub energy: f64,
    pub independent: bool,
    /// Every single flip strictly raises the energy.
    pub local_minimum: bool,
}

/// `−Σx_i + c Σ_{(i,j)∈E} x_i x_j`, summed edge by edge.
fn direct_energy(edges: &[(usize, usize)], c: f64, mask: u32) -> f64 {
    let on = |i: usize| (mask >> i & 1) as f64;
    let size = mask.count_ones() as f64;
    let penalty: f64 = edges.iter().map(|&(u, v)| on(u) * on(v)).sum();
    -size + c * penalty
}

/// All `2^n` states with their energies and local-minimum flags.
pub fn brute_force_landscape(g: &Graph, c: f64) -> Result<Vec<LandscapePoint>> {
    let n = g.n();
    if n > LANDSCAPE_MAX_NODES {
        return Err(Error::InvalidArgument(format!(
            "landscape limited to n <= {LANDSCAPE_MAX_NODES}, got {n}"
        )));
    }
    let edges = g.edges();
    let energies: Vec<f64> = (0..1u32 << n).map(|z| direct_energy(&edges, c, z)).collect();
    Ok((0..1u32 << n)
        .map(|z| {
            let e = energies[z as usize];
            LandscapePoint {
                state: SubsetState::new(z, n).expect("mask within n bits"),
                energy: e,
                independent: edges.iter().all(|&(u, v)| z >> u & z >> v & 1 == 0),
                local_minimum: (0..n).all(|i| energies[(z ^ (1 << i)) as usize] > e),
            }
        })
        .collect())
}

/// What a perturbative oracle follows: one basis state, or the degenerate
/// manifold containing the listed states.
#[derive(Clone, Debug, PartialEq)]
pub enum OracleTarget {
    State(SubsetState),
    Manifold(Vec<SubsetState>),
}

struct Dense {
    n: usize,
    energies: Vec<f64>,
    /// `V = −Σ Δ_i σx_i`.
    v: DMatrix<f64>,
}

impl Dense {
    fn new(inst: &AnnealInstance) -> Result<Self> {
        let g = inst.graph();
        let n = g.n();
        if n > DENSE_ORACLE_MAX_NODES {
            return Err(Error::InvalidArgument(format!(
                "dense oracle limited to n <= {DENSE_ORACLE_MAX_NODES}, got {n}"
            )));
        }
        let edges = g.edges();
        let dim = 1usize << n;
        let energies = (0..dim as u32).map(|z| direct_energy(&edges, inst.c(), z)).collect();
        let mut v = DMatrix::zeros(dim, dim);
        for z in 0..dim {
            for i in 0..n {
                v[(z ^ (1 << i), z)] = -inst.driver().get(i);
            }
        }
        Ok(Self { n, energies, v })
    }

    fn hamiltonian(&self, lambda: f64) -> DMatrix<f64> {
        let mut h = &self.v * lambda;
        for (z, e) in self.energies.iter().enumerate() {
            h[(z, z)] += e;
        }
        h
    }

    fn check(&self, target: &OracleTarget) -> Result<Vec<usize>> {
        let states = match target {
            OracleTarget::State(s) => vec![*s],
            OracleTarget::Manifold(v) if !v.is_empty() => v.clone(),
            OracleTarget::Manifold(_) => return Err(Error::InvalidManifold("empty manifold".into())),
        };
        let limit = 1u32 << self.n;
        if states.iter().any(|s| s.mask() >= limit) {
            return Err(Error::InvalidArgument("target state outside the instance".into()));
        }
        Ok(states.iter().map(|s| s.mask() as usize).collect())
    }
}

/// Numerical second-order coefficient from two exact diagonalisations:
/// `D(h) = (E(h) − E(0))/h²`, then one Richardson step
/// `(4D(h/2) − D(h))/3`, which cancels the `h²` term since `E` is even in λ.
/// A state target follows the level with the largest overlap on it; a
/// manifold target follows the lowest level with weight on the manifold.
pub fn finite_difference_e2(inst: &AnnealInstance, target: &OracleTarget, h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let dense = Dense::new(inst)?;
    let idx = dense.check(target)?;
    let e0 = dense.energies[idx[0]];
    if idx.iter().any(|&z| (dense.energies[z] - e0).abs() > ENERGY_TOL) {
        return Err(Error::InvalidManifold("target states differ in energy".into()));
    }
    let level = |lambda: f64| -> Result<f64> {
        let eig = SymmetricEigen::new(dense.hamiltonian(lambda));
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let weight = |col: usize| idx.iter().map(|&z| eig.eigenvectors[(z, col)].powi(2)).sum::<f64>();
        let chosen = match target {
            OracleTarget::State(_) => order
                .iter()
                .copied()
                .max_by(|&a, &b| weight(a).total_cmp(&weight(b)))
                .unwrap(),
            OracleTarget::Manifold(_) => order
                .iter()
                .copied()
                .find(|&col| weight(col) > 1e-3)
                .ok_or_else(|| Error::TrackingAmbiguity("no level overlaps the manifold".into()))?,
        };
        let value = eig.eigenvalues[chosen];
        let crowded = order
            .iter()
            .any(|&col| col != chosen && (eig.eigenvalues[col] - value).abs() < 1e-10);
        if crowded {
            return Err(Error::TrackingAmbiguity(format!(
                "two levels within 1e-10 of {value} at lambda = {lambda}"
            )));
        }
        Ok(value)
    };
    let d_full = (level(h)? - e0) / (h * h);
    let half = h / 2.0;
    let d_half = (level(half)? - e0) / (half * half);
    Ok((4.0 * d_half - d_full) / 3.0)
}

/// Rayleigh–Schrödinger coefficients `E_0 … E_q` of the energy in powers of
/// λ.
///
/// For a state target: the standard recursion
/// `E_k = ⟨0|V|ψ_{k−1}⟩`, `ψ_k = R (V ψ_{k−1} − Σ_{j=1}^{k} E_j ψ_{k−j})`,
/// with `R = Q/(E_0 − H_0)` and `Q` projecting out every state of energy
/// `E_0`; it fails if the source term ever reaches another such state.
///
/// For a manifold target (orders ≤ 2): `E_2` is the lowest eigenvalue of
/// `P V R V P` on the full space `P` of states at the manifold's energy.
pub fn rs_series(inst: &AnnealInstance, target: &OracleTarget, max_order: usize) -> Result<Vec<f64>> {
    if max_order > MAX_SERIES_ORDER {
        return Err(Error::InvalidArgument(format!(
            "order limited to {MAX_SERIES_ORDER}, got {max_order}"
        )));
    }
    let dense = Dense::new(inst)?;
    let idx = dense.check(target)?;
    let e0 = dense.energies[idx[0]];
    if idx.iter().any(|&z| (dense.energies[z] - e0).abs() > ENERGY_TOL) {
        return Err(Error::InvalidManifold("target states differ in energy".into()));
    }
    let degenerate: Vec<usize> = (0..dense.energies.len())
        .filter(|&z| (dense.energies[z] - e0).abs() <= ENERGY_TOL)
        .collect();
    let resolvent: Vec<f64> = dense
        .energies
        .iter()
        .map(|&e| if (e - e0).abs() <= ENERGY_TOL { 0.0 } else { 1.0 / (e0 - e) })
        .collect();
    match target {
        OracleTarget::State(_) => state_series(&dense, idx[0], &degenerate, &resolvent, e0, max_order),
        OracleTarget::Manifold(_) => manifold_series(&dense, &degenerate, &resolvent, e0, max_order),
    }
}

fn state_series(
    dense: &Dense,
    origin: usize,
    degenerate: &[usize],
    resolvent: &[f64],
    e0: f64,
    max_order: usize,
) -> Result<Vec<f64>> {
    let dim = dense.energies.len();
    let mut psi: Vec<DVector<f64>> = vec![DVector::from_fn(dim, |z, _| if z == origin { 1.0 } else { 0.0 })];
    let mut energies = vec![e0];
    for k in 1..=max_order {
        let v_prev = &dense.v * &psi[k - 1];
        let ek = v_prev[origin];
        energies.push(ek);
        let mut source = v_prev;
        for j in 1..=k {
            source -= &psi[k - j] * energies[j];
        }
        for &z in degenerate {
            if z != origin && source[z].abs() > 1e-12 {
                return Err(Error::Unsupported(format!(
                    "degenerate partner {} coupled at order {k}; use a manifold target",
                    SubsetState::new(z as u32, dense.n).expect("in range")
                )));
            }
        }
        psi.push(source.component_mul(&DVector::from_column_slice(resolvent)));
    }
    Ok(energies)
}

fn manifold_series(
    dense: &Dense,
    degenerate: &[usize],
    resolvent: &[f64],
    e0: f64,
    max_order: usize,
) -> Result<Vec<f64>> {
    if max_order > 2 {
        return Err(Error::Unsupported("manifold series beyond second order".into()));
    }
    let k = degenerate.len();
    let p = DMatrix::from_fn(dense.energies.len(), k, |z, col| if z == degenerate[col] { 1.0 } else { 0.0 });
    let first = p.transpose() * &dense.v * &p;
    if first.iter().any(|x| x.abs() > 0.0) {
        return Err(Error::InvalidManifold("manifold states one flip apart".into()));
    }
    let mut out = vec![e0];
    if max_order >= 1 {
        out.push(0.0);
    }
    if max_order >= 2 {
        let vp = &dense.v * &p;
        let rvp = DMatrix::from_fn(vp.nrows(), k, |z, col| resolvent[z] * vp[(z, col)]);
        let second = vp.transpose() * rvp;
        let eig = SymmetricEigen::new(second);
        out.push(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min));
    }
    Ok(out)
}
