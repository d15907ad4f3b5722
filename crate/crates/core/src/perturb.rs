//! Small-λ perturbation theory around the classical minima.
//!
//! The first-order shift of every basis state vanishes because `H_B` only
//! flips single bits, so the leading correction is second order. For an
//! isolated minimum it is `−Σ_i Δ_i² / B_i` over single flip costs `B_i`.
//! Degenerate minima couple through two-flip paths; the lowest combination
//! follows from the top eigenpair of the non-negative path-weight matrix `A`.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, SubsetState};
use crate::model::{flip_cost, AnnealInstance, FlipNote};

/// Convergence radius of the small-λ series.
pub const LAMBDA_C: f64 = 0.5;

/// Energies closer than this are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Non-degenerate second-order coefficient of one minimum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SecondOrder {
    pub e2: f64,
    /// Some outside node has exactly one neighbour in the set, so an
    /// equal-size minimum sits two flips away and `e2` alone is unreliable.
    pub degenerate_partner: bool,
}

/// `E2 = −Σ_i Δ_i² / B_i` for a maximal independent set.
pub fn second_order_nondegenerate(inst: &AnnealInstance, s: SubsetState) -> Result<SecondOrder> {
    let g = inst.graph();
    let mut e2 = 0.0;
    let mut degenerate_partner = false;
    for i in 0..g.n() {
        let fc = flip_cost(g, inst.c(), s, i)?;
        match fc.note {
            FlipNote::NotMaximal => return Err(Error::NotMaximal { mask: s.mask() }),
            FlipNote::DegeneratePartner => degenerate_partner = true,
            FlipNote::InSet | FlipNote::Isolated => {}
        }
        let d = inst.driver().get(i);
        e2 -= d * d / fc.cost;
    }
    Ok(SecondOrder {
        e2,
        degenerate_partner,
    })
}

/// `E⁽⁰⁾ + λ² E2`.
pub fn energy_to_second_order(inst: &AnnealInstance, s: SubsetState, lambda: f64) -> Result<f64> {
    let so = second_order_nondegenerate(inst, s)?;
    Ok(inst.energy(s) + lambda * lambda * so.e2)
}

/// Leading `Θ(s)` part of the q-th order coefficient for a well isolated
/// minimum of size `s`: `(−1)^{q/2} (q−2)! / ((q/2−1)! (q/2)!) · s`.
pub fn qth_order_coefficient(q: u32, s: usize) -> Result<f64> {
    if q < 2 || q % 2 == 1 {
        return Err(Error::InvalidArgument(format!(
            "order must be even and >= 2 (odd orders vanish), got {q}"
        )));
    }
    if s == 0 {
        return Err(Error::InvalidArgument("set size must be >= 1".into()));
    }
    let half = q / 2;
    // (q−2)! / ((h−1)! h!) = C(2h−2, h−1) / h, the Catalan number C_{h−1}
    let mut binom = 1.0f64;
    for k in 0..(half - 1) {
        binom = binom * (2 * (half - 1) - k) as f64 / (k + 1) as f64;
    }
    let magnitude = binom / half as f64;
    let sign = if half.is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok(sign * magnitude * s as f64)
}

/// A set of equal-energy basis states treated together.
#[derive(Clone, Debug, PartialEq)]
pub struct DegenerateManifold {
    energy: f64,
    states: Vec<SubsetState>,
    restricted: bool,
}

impl DegenerateManifold {
    /// Manifold over the given minima only (`restricted = true`).
    pub fn restricted(g: &Graph, c: f64, states: Vec<SubsetState>) -> Result<Self> {
        Self::build(g, c, states, true)
    }

    /// Every basis state whose energy equals `energy` (`restricted = false`).
    pub fn full(g: &Graph, c: f64, energy: f64) -> Result<Self> {
        let states = (0..g.dim() as u32)
            .map(SubsetState::from_mask_unchecked)
            .filter(|&s| (crate::model::classical_energy(g, c, s) - energy).abs() < DEGENERACY_TOL)
            .collect();
        Self::build(g, c, states, false)
    }

    /// Full manifold at the energy of `s`.
    pub fn full_at(g: &Graph, c: f64, s: SubsetState) -> Result<Self> {
        Self::full(g, c, crate::model::classical_energy(g, c, s))
    }

    fn build(g: &Graph, c: f64, mut states: Vec<SubsetState>, restricted: bool) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidManifold("manifold is empty".into()));
        }
        states.sort_unstable();
        states.dedup();
        let energy = crate::model::classical_energy(g, c, states[0]);
        for &s in &states {
            if s.mask() & !g.full_mask() != 0 {
                return Err(Error::InvalidManifold(format!("state {s} has bits beyond n")));
            }
            let e = crate::model::classical_energy(g, c, s);
            if (e - energy).abs() >= DEGENERACY_TOL {
                return Err(Error::InvalidManifold(format!(
                    "state {s} has energy {e}, manifold energy is {energy}"
                )));
            }
        }
        for (x, &a) in states.iter().enumerate() {
            for &b in &states[x + 1..] {
                if a.hamming(b) == 1 {
                    return Err(Error::InvalidManifold(format!(
                        "states {a} and {b} are one flip apart"
                    )));
                }
            }
        }
        Ok(Self {
            energy,
            states,
            restricted,
        })
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn states(&self) -> &[SubsetState] {
        &self.states
    }

    pub fn restricted_mode(&self) -> bool {
        self.restricted
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Second-order effective problem on a degenerate manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveSecondOrder {
    /// `A[k][k'] = Σ Δ_i Δ_j / (E_mid − E⁽⁰⁾)` over ordered two-flip paths
    /// `S_k → mid → S_k'`; the effective Hamiltonian is `E⁽⁰⁾ − λ² A`.
    pub a: DMatrix<f64>,
    /// Unit-norm top eigenvector of `A`, sign fixed so its sum is positive.
    pub coefficients: Vec<f64>,
    /// `−C·A·C`, the second-order shift of the lowest combination.
    pub e2: f64,
    pub restricted: bool,
}

impl EffectiveSecondOrder {
    /// `−vᵀ A v` for any trial combination.
    pub fn e2_for(&self, v: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(v);
        -(v.transpose() * &self.a * &v)[(0, 0)]
    }

    pub fn max_row_sum(&self) -> f64 {
        self.a
            .row_iter()
            .map(|r| r.iter().sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn degenerate_effective_matrix(
    inst: &AnnealInstance,
    manifold: &DegenerateManifold,
) -> Result<EffectiveSecondOrder> {
    let g = inst.graph();
    let n = g.n();
    let k = manifold.len();
    let index: HashMap<SubsetState, usize> = manifold
        .states()
        .iter()
        .enumerate()
        .map(|(x, &s)| (s, x))
        .collect();
    let e0 = manifold.energy();
    let mut a = DMatrix::<f64>::zeros(k, k);
    for (row, &s) in manifold.states().iter().enumerate() {
        for i in 0..n {
            let di = inst.driver().get(i);
            if di == 0.0 {
                continue;
            }
            let mid = s.flip(i);
            if index.contains_key(&mid) {
                return Err(Error::InvalidManifold(format!(
                    "states {s} and {mid} are one flip apart"
                )));
            }
            let gap = inst.energy(mid) - e0;
            if gap.abs() < DEGENERACY_TOL {
                return Err(Error::InvalidManifold(format!(
                    "intermediate {mid} is degenerate with the manifold but not part of it"
                )));
            }
            for j in 0..n {
                let dj = inst.driver().get(j);
                if dj == 0.0 {
                    continue;
                }
                if let Some(&col) = index.get(&mid.flip(j)) {
                    a[(row, col)] += di * dj / gap;
                }
            }
        }
    }
    let (top_value, mut top) = top_eigenpair(&a);
    let sum: f64 = top.iter().sum();
    if sum < 0.0 || (sum == 0.0 && top.iter().find(|x| **x != 0.0).is_some_and(|x| *x < 0.0)) {
        top.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(EffectiveSecondOrder {
        a,
        coefficients: top,
        e2: -top_value,
        restricted: manifold.restricted_mode(),
    })
}

fn top_eigenpair(a: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut best = 0;
    for x in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[x] > eig.eigenvalues[best] {
            best = x;
        }
    }
    let v = eig.eigenvectors.column(best).iter().copied().collect();
    (eig.eigenvalues[best], v)
}

/// Second-order estimate of where a local-minimum manifold overtakes the
/// global minimum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictedCrossing {
    /// `m − m'`.
    pub delta_e0: f64,
    /// `E2(locals) − E2(global)`.
    pub delta_e2: f64,
    pub e2_global: f64,
    pub e2_locals: f64,
    /// `√(δE0 / −δE2)` when `δE2 < 0`.
    pub lambda_star: Option<f64>,
    /// `λ* < λ_c`; predictions outside the radius are unreliable.
    pub within_radius: bool,
    pub restricted: bool,
}

impl PredictedCrossing {
    /// `δE(λ) = δE0 + λ² δE2`.
    pub fn separation(&self, lambda: f64) -> f64 {
        self.delta_e0 + lambda * lambda * self.delta_e2
    }
}

/// `global` is the manifold of the maximum set(s); a single-state manifold
/// reproduces the non-degenerate formula.
pub fn predict_crossing(
    inst: &AnnealInstance,
    global: &DegenerateManifold,
    locals: &DegenerateManifold,
) -> Result<PredictedCrossing> {
    let delta_e0 = locals.energy() - global.energy();
    if delta_e0 <= DEGENERACY_TOL {
        return Err(Error::InvalidManifold(format!(
            "local minima (energy {}) must lie strictly above the global minimum (energy {})",
            locals.energy(),
            global.energy()
        )));
    }
    let e2_global = degenerate_effective_matrix(inst, global)?.e2;
    let e2_locals = degenerate_effective_matrix(inst, locals)?.e2;
    let delta_e2 = e2_locals - e2_global;
    let lambda_star = (delta_e2 < 0.0).then(|| (delta_e0 / -delta_e2).sqrt());
    Ok(PredictedCrossing {
        delta_e0,
        delta_e2,
        e2_global,
        e2_locals,
        lambda_star,
        within_radius: lambda_star.is_some_and(|l| l < LAMBDA_C),
        restricted: locals.restricted_mode(),
    })
}

/// Large-`c` sufficient condition for the absence of a second-order
/// crossing. Paths through edge-violating intermediates are dropped, which
/// leaves removal-first paths only:
///
/// `F = Σ_{i∈M} Δ_i² − max_k Σ_{i∈M'_k} [Δ_i² + Σ_j Δ_i Δ_j]`,
///
/// where `j` ranges over additions that land `M'_k − i + j` on another listed
/// local minimum. `F > 0` certifies `δE2 > 0` without knowing the `C_k`.
pub fn sufficient_condition_f(
    g: &Graph,
    driver: &crate::model::DriverField,
    global: SubsetState,
    locals: &[SubsetState],
) -> Result<f64> {
    if locals.is_empty() {
        return Err(Error::InvalidArgument("no local minima given".into()));
    }
    if driver.len() != g.n() {
        return Err(Error::InvalidDriver(format!(
            "driver has {} amplitudes for {} nodes",
            driver.len(),
            g.n()
        )));
    }
    let sq = |i: usize| driver.get(i) * driver.get(i);
    let first: f64 = global.nodes().into_iter().map(sq).sum();
    let mut sorted = locals.to_vec();
    sorted.sort_unstable();
    let worst = locals
        .iter()
        .map(|&local| {
            local
                .nodes()
                .into_iter()
                .map(|i| {
                    let removed = local.flip(i);
                    let hops: f64 = (0..g.n())
                        .filter(|&j| j != i && !local.contains(j))
                        .filter(|&j| sorted.binary_search(&removed.flip(j)).is_ok())
                        .map(|j| driver.get(i) * driver.get(j))
                        .sum();
                    sq(i) + hops
                })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(first - worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_graph, GraphKind};
    use crate::model::DriverField;

    fn inst(kind: &str, c: f64) -> AnnealInstance {
        let g = generate_graph(&kind.parse().unwrap(), 0).unwrap();
        AnnealInstance::uniform(g, c).unwrap()
    }

    fn set(nodes: &[usize], n: usize) -> SubsetState {
        SubsetState::from_nodes(nodes, n).unwrap()
    }

    #[test]
    fn single_spin_second_order() {
        let k1 = inst("empty:1", 2.0);
        let so = second_order_nondegenerate(&k1, set(&[0], 1)).unwrap();
        assert_eq!(so.e2, -1.0);
        assert!(!so.degenerate_partner);
        let e = energy_to_second_order(&k1, set(&[0], 1), 0.1).unwrap();
        assert!((e + 1.01).abs() < 1e-15);
    }

    #[test]
    fn complete_bipartite_second_order() {
        let k23 = inst("complete_bipartite:2,3", 5.0);
        let big = second_order_nondegenerate(&k23, set(&[2, 3, 4], 5)).unwrap();
        assert!((big.e2 + (3.0 + 2.0 / 14.0)).abs() < 1e-12);
        let small = second_order_nondegenerate(&k23, set(&[0, 1], 5)).unwrap();
        assert!((small.e2 + (2.0 + 3.0 / 9.0)).abs() < 1e-12);
        let e = energy_to_second_order(&k23, set(&[2, 3, 4], 5), 0.2).unwrap();
        assert!((e - (-3.0 + 0.04 * big.e2)).abs() < 1e-12);
        assert!((e + 3.125714285714).abs() < 1e-9);
    }

    #[test]
    fn zeroth_order_at_lambda_zero() {
        let k23 = inst("complete_bipartite:2,3", 5.0);
        let s = set(&[0, 1], 5);
        assert_eq!(energy_to_second_order(&k23, s, 0.0).unwrap(), k23.energy(s));
    }

    #[test]
    fn non_maximal_sets_are_rejected() {
        let k23 = inst("complete_bipartite:2,3", 5.0);
        assert!(matches!(
            second_order_nondegenerate(&k23, set(&[2, 3], 5)),
            Err(Error::NotMaximal { .. })
        ));
    }

    #[test]
    fn degenerate_partner_warning() {
        let k3 = inst("complete:3", 3.0);
        let so = second_order_nondegenerate(&k3, set(&[0], 3)).unwrap();
        assert!(so.degenerate_partner);
    }

    #[test]
    fn qth_order_values() {
        assert_eq!(qth_order_coefficient(2, 1).unwrap(), -1.0);
        assert_eq!(qth_order_coefficient(4, 1).unwrap(), 1.0);
        assert_eq!(qth_order_coefficient(6, 2).unwrap(), -4.0);
        assert_eq!(qth_order_coefficient(8, 1).unwrap(), 5.0);
        assert_eq!(qth_order_coefficient(10, 1).unwrap(), -14.0);
        assert!(qth_order_coefficient(3, 1).is_err());
        assert!(qth_order_coefficient(0, 1).is_err());
        assert!(qth_order_coefficient(4, 0).is_err());
    }

    #[test]
    fn triangle_manifold() {
        let k3 = inst("complete:3", 3.0);
        let m = DegenerateManifold::restricted(
            k3.graph(),
            3.0,
            vec![set(&[0], 3), set(&[1], 3), set(&[2], 3)],
        )
        .unwrap();
        let eff = degenerate_effective_matrix(&k3, &m).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let want = if r == c { 2.0 } else { 1.5 };
                assert!((eff.a[(r, c)] - want).abs() < 1e-12);
            }
        }
        assert!((eff.e2 + 5.0).abs() < 1e-12);
        for x in &eff.coefficients {
            assert!((x - 1.0 / 3f64.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn single_edge_manifold() {
        let k2 = inst("complete:2", 3.0);
        let m = DegenerateManifold::restricted(k2.graph(), 3.0, vec![set(&[0], 2), set(&[1], 2)])
            .unwrap();
        let eff = degenerate_effective_matrix(&k2, &m).unwrap();
        assert!((eff.a[(0, 0)] - 1.5).abs() < 1e-12);
        assert!((eff.a[(0, 1)] - 1.5).abs() < 1e-12);
        assert!((eff.e2 + 3.0).abs() < 1e-12);
        assert!((eff.e2_for(&eff.coefficients) - eff.e2).abs() < 1e-12);
    }

    #[test]
    fn distant_minima_decouple() {
        // two disjoint triangles joined by nothing: minima {a, b} with a, b in
        // different triangles; pick two that differ in both picks (4 flips)
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap();
        let i = AnnealInstance::uniform(g.clone(), 3.0).unwrap();
        let states = vec![set(&[0, 3], 6), set(&[1, 4], 6)];
        let m = DegenerateManifold::restricted(&g, 3.0, states.clone()).unwrap();
        let eff = degenerate_effective_matrix(&i, &m).unwrap();
        assert_eq!(eff.a[(0, 1)], 0.0);
        let best = states
            .iter()
            .map(|&s| second_order_nondegenerate(&i, s).unwrap().e2)
            .fold(f64::INFINITY, f64::min);
        assert!((eff.e2 - best).abs() < 1e-12);
    }

    #[test]
    fn manifold_validation() {
        let k3 = inst("complete:3", 3.0);
        let g = k3.graph();
        assert!(DegenerateManifold::restricted(g, 3.0, vec![]).is_err());
        // different energies
        assert!(DegenerateManifold::restricted(g, 3.0, vec![set(&[0], 3), set(&[], 3)]).is_err());
        // one flip apart at equal energy cannot happen for c > 1, but the
        // check still guards hand-built inputs with mismatched energies
        let p3 = crate::graph::parse_graph("3\n0 1\n1 2").unwrap();
        let full = DegenerateManifold::full(&p3, 3.0, -1.0).unwrap();
        assert_eq!(full.states(), &[set(&[0], 3), set(&[1], 3), set(&[2], 3)]);
        assert!(!full.restricted_mode());
    }

    #[test]
    fn crossing_predictions_on_bipartite() {
        for (c, want_e2, star) in [(5.0, 1.0 - 1.0 / 3.0 + 1.0 / 7.0, None), (1.1, -0.630434782609, Some(1.259447))] {
            let k23 = inst("complete_bipartite:2,3", c);
            let g = k23.graph();
            let global = DegenerateManifold::restricted(g, c, vec![set(&[2, 3, 4], 5)]).unwrap();
            let locals = DegenerateManifold::restricted(g, c, vec![set(&[0, 1], 5)]).unwrap();
            let p = predict_crossing(&k23, &global, &locals).unwrap();
            assert_eq!(p.delta_e0, 1.0);
            assert!((p.delta_e2 - want_e2).abs() < 1e-9, "{}", p.delta_e2);
            match (p.lambda_star, star) {
                (None, None) => {}
                (Some(l), Some(w)) => {
                    assert!((l - w).abs() < 1e-5, "{l}");
                    assert!(!p.within_radius);
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn crossing_prediction_on_split() {
        let sp = inst("split:7,2", 9.0);
        let g = sp.graph();
        let global = DegenerateManifold::restricted(g, 9.0, vec![set(&[7, 8], 9)]).unwrap();
        let locals =
            DegenerateManifold::restricted(g, 9.0, (0..7).map(|k| set(&[k], 9)).collect()).unwrap();
        let p = predict_crossing(&sp, &global, &locals).unwrap();
        let want = -7.0 - 14.0 / 8.0 + 2.0 + 7.0 / 17.0;
        assert!((p.delta_e2 - want).abs() < 1e-12);
        let l = p.lambda_star.unwrap();
        assert!((l - 0.397).abs() < 1e-3);
        assert!(p.within_radius);
        assert!(p.separation(l).abs() < 1e-12);
        // reversed roles are rejected
        assert!(predict_crossing(&sp, &locals, &global).is_err());
    }

    #[test]
    fn f_condition_examples() {
        let g = generate_graph(&GraphKind::Split { clique: 7, independent: 2 }, 0).unwrap();
        let locals: Vec<_> = (0..7).map(|k| set(&[k], 9)).collect();
        let m = set(&[7, 8], 9);
        let uniform = DriverField::uniform(9, 1.0).unwrap();
        assert!((sufficient_condition_f(&g, &uniform, m, &locals).unwrap() + 5.0).abs() < 1e-12);
        let mut d = vec![0.4; 7];
        d.extend([1.0, 1.0]);
        let tuned = DriverField::new(d).unwrap();
        assert!((sufficient_condition_f(&g, &tuned, m, &locals).unwrap() - 0.88).abs() < 1e-12);
        assert!(sufficient_condition_f(&g, &uniform, m, &[]).is_err());
    }

    #[test]
    fn f_without_close_pairs_is_size_gap() {
        let k23 = generate_graph(&GraphKind::CompleteBipartite { a: 2, b: 3 }, 0).unwrap();
        let d = DriverField::uniform(5, 1.0).unwrap();
        let f = sufficient_condition_f(&k23, &d, set(&[2, 3, 4], 5), &[set(&[0, 1], 5)]).unwrap();
        assert_eq!(f, 1.0);
    }
}
