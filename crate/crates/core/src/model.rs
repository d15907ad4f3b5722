//! Cost function, spin Hamiltonian and the transverse-field family
//! `H(λ) = H_P + λ H_B` with `H_B = −Σ Δ_i σˣ_i`.
//!
//! Basis states are indexed by [`SubsetState`] masks; bit `i` set means
//! `x_i = 1`, i.e. `σᶻ_i = +1`. The constant offset of the spin form is kept,
//! so the diagonal of `H_P` equals the classical energy exactly.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, SubsetState};

/// `−|s| + c · (edges inside s)`.
pub fn classical_energy(g: &Graph, c: f64, s: SubsetState) -> f64 {
    -(s.size() as f64) + c * g.violations(s.mask()) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coupling {
    pub i: usize,
    pub j: usize,
    #[serde(rename = "J")]
    pub value: f64,
}

/// `H_P = Σ h_i σᶻ_i + Σ J_ij σᶻ_i σᶻ_j + offset`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IsingProblem {
    pub h: Vec<f64>,
    #[serde(rename = "edges")]
    pub couplings: Vec<Coupling>,
    pub c: f64,
    pub offset: f64,
}

impl IsingProblem {
    /// Diagonal matrix element at basis state `s`.
    pub fn diagonal(&self, s: SubsetState) -> f64 {
        let spin = |i: usize| if s.contains(i) { 1.0 } else { -1.0 };
        let field: f64 = self.h.iter().enumerate().map(|(i, h)| h * spin(i)).sum();
        let coupling: f64 = self
            .couplings
            .iter()
            .map(|cp| cp.value * spin(cp.i) * spin(cp.j))
            .sum();
        field + coupling + self.offset
    }
}

pub fn check_coefficient(c: f64) -> Result<()> {
    if c.is_finite() && c > 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidCoefficient(c))
    }
}

/// Substitutes `x_i → (σᶻ_i + 1)/2` into the cost function.
pub fn build_problem_hamiltonian(g: &Graph, c: f64) -> Result<IsingProblem> {
    check_coefficient(c)?;
    let h = (0..g.n())
        .map(|i| g.degree(i) as f64 * c / 4.0 - 0.5)
        .collect();
    let couplings = g
        .edges()
        .into_iter()
        .map(|(i, j)| Coupling {
            i,
            j,
            value: c / 4.0,
        })
        .collect();
    let offset = -(g.n() as f64) / 2.0 + c * g.edge_count() as f64 / 4.0;
    Ok(IsingProblem {
        h,
        couplings,
        c,
        offset,
    })
}

/// Per-node tunnelling amplitudes `Δ_i` of the driver.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DriverField(Vec<f64>);

impl DriverField {
    pub fn new(amplitudes: Vec<f64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidDriver("no amplitudes".into()));
        }
        if let Some(bad) = amplitudes.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::InvalidDriver(format!(
                "amplitudes must be finite and non-negative, found {bad}"
            )));
        }
        if amplitudes.iter().all(|&d| d == 0.0) {
            return Err(Error::InvalidDriver("at least one amplitude must be positive".into()));
        }
        Ok(Self(amplitudes))
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
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

/// A graph, penalty coefficient and driver: everything that fixes `H(λ)`.
///
/// The classical energies of all `2^n` basis states are computed once and
/// shared between clones.
#[derive(Clone, Debug)]
pub struct AnnealInstance {
    graph: Graph,
    c: f64,
    driver: DriverField,
    diagonal: Arc<[f64]>,
}

impl AnnealInstance {
    pub fn new(graph: Graph, c: f64, driver: DriverField) -> Result<Self> {
        check_coefficient(c)?;
        if driver.len() != graph.n() {
            return Err(Error::InvalidDriver(format!(
                "driver has {} amplitudes for {} nodes",
                driver.len(),
                graph.n()
            )));
        }
        let diagonal: Arc<[f64]> = (0..graph.dim() as u32)
            .into_par_iter()
            .map(|z| classical_energy(&graph, c, SubsetState::from_mask_unchecked(z)))
            .collect::<Vec<_>>()
            .into();
        Ok(Self {
            graph,
            c,
            driver,
            diagonal,
        })
    }

    /// Uniform `Δ_i = 1`.
    pub fn uniform(graph: Graph, c: f64) -> Result<Self> {
        let n = graph.n();
        Self::new(graph, c, DriverField::uniform(n, 1.0)?)
    }

    /// Same graph and coefficient, different driver.
    pub fn with_driver(&self, driver: DriverField) -> Result<Self> {
        if driver.len() != self.graph.n() {
            return Err(Error::InvalidDriver(format!(
                "driver has {} amplitudes for {} nodes",
                driver.len(),
                self.graph.n()
            )));
        }
        Ok(Self {
            graph: self.graph.clone(),
            c: self.c,
            driver,
            diagonal: Arc::clone(&self.diagonal),
        })
    }

    #[inline]
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    #[inline]
    pub fn c(&self) -> f64 {
        self.c
    }

    #[inline]
    pub fn driver(&self) -> &DriverField {
        &self.driver
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.graph.dim()
    }

    /// Classical energy of every basis state, indexed by mask.
    #[inline]
    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    #[inline]
    pub fn energy(&self, s: SubsetState) -> f64 {
        self.diagonal[s.mask() as usize]
    }

    /// `out = H(λ) v`, matrix-free. Buffers must have length `2^n`.
    pub fn apply_into(&self, lambda: f64, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        let n = self.graph.n();
        let weights: Vec<f64> = self.driver.as_slice().iter().map(|d| lambda * d).collect();
        let diag = &*self.diagonal;
        let row = |z: usize| {
            let mut acc = diag[z] * v[z];
            for (i, w) in weights.iter().enumerate().take(n) {
                acc -= w * v[z ^ (1usize << i)];
            }
            acc
        };
        const CHUNK: usize = 1 << 12;
        if out.len() >= 4 * CHUNK {
            out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
                let base = c * CHUNK;
                for (k, o) in chunk.iter_mut().enumerate() {
                    *o = row(base + k);
                }
            });
        } else {
            for (z, o) in out.iter_mut().enumerate() {
                *o = row(z);
            }
        }
    }
}

/// Real amplitudes over the `2^n` basis states.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(amplitudes: Vec<f64>) -> Self {
        Self(amplitudes)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn basis(dim: usize, s: SubsetState) -> Self {
        let mut v = vec![0.0; dim];
        v[s.mask() as usize] = 1.0;
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Total squared amplitude on the given basis states.
    pub fn weight_on(&self, states: &[SubsetState]) -> f64 {
        states.iter().map(|s| self.0[s.mask() as usize].powi(2)).sum()
    }
}

/// `H(λ) v`.
pub fn apply_hamiltonian(inst: &AnnealInstance, lambda: f64, v: &StateVector) -> Result<StateVector> {
    if v.len() != inst.dim() {
        return Err(Error::DimensionMismatch {
            expected: inst.dim(),
            actual: v.len(),
        });
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite, got {lambda}")));
    }
    let mut out = vec![0.0; inst.dim()];
    inst.apply_into(lambda, v.as_slice(), &mut out);
    Ok(StateVector(out))
}

/// What the neighbourhood of a flipped node says about the state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipNote {
    /// Node belongs to the set; removing it costs 1.
    InSet,
    /// `d_i = 0`: the node could be added for free, so the set is not maximal.
    NotMaximal,
    /// `d_i = 1`: swapping it with its single neighbour gives an equal-size
    /// minimum two flips away.
    DegeneratePartner,
    /// `d_i ≥ 2`.
    Isolated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlipCost {
    pub cost: f64,
    /// Neighbours of the node inside the set.
    pub d: usize,
    pub note: FlipNote,
}

/// Energy change from toggling node `i` of the independent set `s`.
pub fn flip_cost(g: &Graph, c: f64, s: SubsetState, i: usize) -> Result<FlipCost> {
    if !g.is_independent(s.mask()) {
        return Err(Error::NotIndependent { mask: s.mask() });
    }
    if i >= g.n() {
        return Err(Error::InvalidArgument(format!("node {i} out of range")));
    }
    if s.contains(i) {
        return Ok(FlipCost {
            cost: 1.0,
            d: 0,
            note: FlipNote::InSet,
        });
    }
    let d = g.neighbours_in(i, s.mask());
    let note = match d {
        0 => FlipNote::NotMaximal,
        1 => FlipNote::DegeneratePartner,
        _ => FlipNote::Isolated,
    };
    Ok(FlipCost {
        cost: c * d as f64 - 1.0,
        d,
        note,
    })
}
