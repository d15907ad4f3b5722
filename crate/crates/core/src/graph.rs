//! Graphs on at most 24 nodes stored as neighbour bitmasks, plus the
//! classical minima structure of the independent-set cost function:
//! maximal independent sets, their size classes, and the pairs of equal-size
//! sets that sit exactly two bit flips apart.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest supported node count. State vectors have length `2^n`.
pub const MAX_NODES: usize = 24;

#[inline]
const fn bit(i: usize) -> u32 {
    1u32 << i
}

/// Undirected simple graph with per-node neighbour bitmasks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adj: Vec<u32>,
    edge_count: usize,
}

impl Graph {
    /// Graph on `n` nodes with no edges.
    pub fn empty(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_NODES {
            return Err(Error::InvalidGraph(format!(
                "node count must be in 1..={MAX_NODES}, got {n}"
            )));
        }
        Ok(Self {
            n,
            adj: vec![0; n],
            edge_count: 0,
        })
    }

    /// Builds a graph from an edge list. Duplicate edges collapse to one.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n)?;
        for &(u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    fn add_edge(&mut self, u: usize, v: usize) -> Result<()> {
        if u >= self.n || v >= self.n {
            return Err(Error::InvalidGraph(format!(
                "edge ({u}, {v}) references a node >= n = {}",
                self.n
            )));
        }
        if u == v {
            return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
        }
        if self.adj[u] & bit(v) == 0 {
            self.adj[u] |= bit(v);
            self.adj[v] |= bit(u);
            self.edge_count += 1;
        }
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of basis states, `2^n`.
    #[inline]
    pub fn dim(&self) -> usize {
        1usize << self.n
    }

    /// Mask with the low `n` bits set.
    #[inline]
    pub fn full_mask(&self) -> u32 {
        if self.n == 32 {
            u32::MAX
        } else {
            (1u32 << self.n) - 1
        }
    }

    #[inline]
    pub fn adjacency(&self, i: usize) -> u32 {
        self.adj[i]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].count_ones() as usize
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u] & bit(v) != 0
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count);
        for u in 0..self.n {
            let mut higher = self.adj[u] & !((bit(u) << 1) - 1);
            while higher != 0 {
                let v = higher.trailing_zeros() as usize;
                out.push((u, v));
                higher &= higher - 1;
            }
        }
        out
    }

    /// Number of edges with both endpoints in `mask`.
    pub fn violations(&self, mask: u32) -> usize {
        let mut twice = 0;
        let mut rest = mask;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            twice += (self.adj[i] & mask).count_ones() as usize;
            rest &= rest - 1;
        }
        twice / 2
    }

    pub fn is_independent(&self, mask: u32) -> bool {
        let mut rest = mask;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            if self.adj[i] & mask != 0 {
                return false;
            }
            rest &= rest - 1;
        }
        true
    }

    /// Independent, and every node outside the set has a neighbour inside it.
    pub fn is_maximal_independent(&self, mask: u32) -> bool {
        if !self.is_independent(mask) {
            return false;
        }
        (0..self.n).all(|i| mask & bit(i) != 0 || self.adj[i] & mask != 0)
    }

    /// Number of neighbours of `i` inside `mask`.
    #[inline]
    pub fn neighbours_in(&self, i: usize, mask: u32) -> usize {
        (self.adj[i] & mask).count_ones() as usize
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = bit(0);
        let mut frontier = bit(0);
        while frontier != 0 {
            let mut next = 0;
            let mut rest = frontier;
            while rest != 0 {
                let i = rest.trailing_zeros() as usize;
                next |= self.adj[i];
                rest &= rest - 1;
            }
            frontier = next & !seen;
            seen |= next;
        }
        seen == self.full_mask()
    }
}

/// Text instance format: first non-comment line is `n`, every following
/// non-empty line is `u v`. Lines starting with `#` are ignored.
pub fn parse_graph(text: &str) -> Result<Graph> {
    let mut graph: Option<Graph> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        match graph.as_mut() {
            None => {
                let n: usize = line
                    .parse()
                    .map_err(|_| err(format!("expected node count, found {line:?}")))?;
                if n == 0 || n > MAX_NODES {
                    return Err(err(format!("node count must be in 1..={MAX_NODES}, got {n}")));
                }
                graph = Some(Graph::empty(n).map_err(|e| err(e.to_string()))?);
            }
            Some(g) => {
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != 2 {
                    return Err(err(format!("expected two node indices, found {line:?}")));
                }
                let parse_node = |s: &str| -> Result<usize> {
                    s.parse::<usize>()
                        .map_err(|_| err(format!("invalid node index {s:?}")))
                };
                let u = parse_node(fields[0])?;
                let v = parse_node(fields[1])?;
                if u >= g.n || v >= g.n {
                    return Err(err(format!(
                        "node index out of range in ({u}, {v}); n = {}",
                        g.n
                    )));
                }
                if u == v {
                    return Err(err(format!("self-loop at node {u}")));
                }
                g.add_edge(u, v).map_err(|e| err(e.to_string()))?;
            }
        }
    }
    graph.ok_or(Error::Parse {
        line: 1,
        message: "missing node count".into(),
    })
}

/// Named graph families.
#[derive(Clone, Debug, PartialEq)]
pub enum GraphKind {
    Empty { n: usize },
    Complete { n: usize },
    Cycle { n: usize },
    CompleteBipartite { a: usize, b: usize },
    /// A `clique`-node clique fully joined to an `independent`-node independent set.
    Split { clique: usize, independent: usize },
    RandomGnp { n: usize, p: f64 },
}

impl FromStr for GraphKind {
    type Err = Error;

    /// Parses `kind:params`, e.g. `complete:3`, `split:7,2`, `random_gnp:10,0.3`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, params) = s.split_once(':').unwrap_or((s, ""));
        let fields: Vec<&str> = if params.is_empty() {
            Vec::new()
        } else {
            params.split(',').map(str::trim).collect()
        };
        let bad = |msg: &str| Error::InvalidGenerator(format!("{s:?}: {msg}"));
        let int = |i: usize| -> Result<usize> {
            fields
                .get(i)
                .ok_or_else(|| bad("missing parameter"))?
                .parse::<usize>()
                .map_err(|_| bad("expected a non-negative integer"))
        };
        let arity = |k: usize| -> Result<()> {
            if fields.len() == k {
                Ok(())
            } else {
                Err(bad(&format!("expected {k} parameter(s)")))
            }
        };
        match kind {
            "empty" => {
                arity(1)?;
                Ok(GraphKind::Empty { n: int(0)? })
            }
            "complete" => {
                arity(1)?;
                Ok(GraphKind::Complete { n: int(0)? })
            }
            "cycle" => {
                arity(1)?;
                Ok(GraphKind::Cycle { n: int(0)? })
            }
            "complete_bipartite" => {
                arity(2)?;
                Ok(GraphKind::CompleteBipartite {
                    a: int(0)?,
                    b: int(1)?,
                })
            }
            "split" => {
                arity(2)?;
                Ok(GraphKind::Split {
                    clique: int(0)?,
                    independent: int(1)?,
                })
            }
            "random_gnp" | "gnp" => {
                arity(2)?;
                let p = fields[1]
                    .parse::<f64>()
                    .map_err(|_| bad("expected a probability"))?;
                Ok(GraphKind::RandomGnp { n: int(0)?, p })
            }
            _ => Err(bad("unknown graph kind")),
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphKind::Empty { n } => write!(f, "empty:{n}"),
            GraphKind::Complete { n } => write!(f, "complete:{n}"),
            GraphKind::Cycle { n } => write!(f, "cycle:{n}"),
            GraphKind::CompleteBipartite { a, b } => write!(f, "complete_bipartite:{a},{b}"),
            GraphKind::Split {
                clique,
                independent,
            } => write!(f, "split:{clique},{independent}"),
            GraphKind::RandomGnp { n, p } => write!(f, "random_gnp:{n},{p}"),
        }
    }
}

/// Deterministic for a given `(kind, seed)`. The seed only matters for
/// `RandomGnp`.
pub fn generate_graph(kind: &GraphKind, seed: u64) -> Result<Graph> {
    let positive = |name: &str, v: usize| -> Result<()> {
        if v == 0 {
            Err(Error::InvalidGenerator(format!("{name} must be positive")))
        } else {
            Ok(())
        }
    };
    let mut edges = Vec::new();
    let n = match *kind {
        GraphKind::Empty { n } => {
            positive("n", n)?;
            n
        }
        GraphKind::Complete { n } => {
            positive("n", n)?;
            for u in 0..n {
                for v in u + 1..n {
                    edges.push((u, v));
                }
            }
            n
        }
        GraphKind::Cycle { n } => {
            if n < 3 {
                return Err(Error::InvalidGenerator(format!(
                    "cycle needs at least 3 nodes, got {n}"
                )));
            }
            for u in 0..n {
                edges.push((u, (u + 1) % n));
            }
            n
        }
        GraphKind::CompleteBipartite { a, b } => {
            positive("a", a)?;
            positive("b", b)?;
            for u in 0..a {
                for v in 0..b {
                    edges.push((u, a + v));
                }
            }
            a + b
        }
        GraphKind::Split {
            clique,
            independent,
        } => {
            positive("K", clique)?;
            positive("m", independent)?;
            for u in 0..clique {
                for v in u + 1..clique {
                    edges.push((u, v));
                }
                for v in 0..independent {
                    edges.push((u, clique + v));
                }
            }
            clique + independent
        }
        GraphKind::RandomGnp { n, p } => {
            positive("n", n)?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidGenerator(format!(
                    "edge probability must be in [0, 1], got {p}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for u in 0..n {
                for v in u + 1..n {
                    if rng.random::<f64>() < p {
                        edges.push((u, v));
                    }
                }
            }
            n
        }
    };
    if n > MAX_NODES {
        return Err(Error::InvalidGenerator(format!(
            "node count {n} exceeds {MAX_NODES}"
        )));
    }
    Graph::from_edges(n, &edges)
}

/// A basis-state label: bit `i` set means node `i` is in the set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SubsetState(u32);

impl SubsetState {
    /// Checked constructor; only the low `n` bits may be set.
    pub fn new(mask: u32, n: usize) -> Result<Self> {
        let full = if n >= 32 { u32::MAX } else { (1u32 << n) - 1 };
        if mask & !full != 0 {
            return Err(Error::InvalidArgument(format!(
                "mask {mask:#b} has bits beyond n = {n}"
            )));
        }
        Ok(Self(mask))
    }

    pub fn from_nodes(nodes: &[usize], n: usize) -> Result<Self> {
        let mut mask = 0u32;
        for &i in nodes {
            if i >= n {
                return Err(Error::InvalidArgument(format!(
                    "node {i} out of range for n = {n}"
                )));
            }
            mask |= bit(i);
        }
        Ok(Self(mask))
    }

    #[inline]
    pub(crate) const fn from_mask_unchecked(mask: u32) -> Self {
        Self(mask)
    }

    #[inline]
    pub fn mask(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn size(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn contains(self, i: usize) -> bool {
        self.0 & bit(i) != 0
    }

    #[inline]
    pub fn flip(self, i: usize) -> Self {
        Self(self.0 ^ bit(i))
    }

    #[inline]
    pub fn hamming(self, other: Self) -> u32 {
        (self.0 ^ other.0).count_ones()
    }

    /// Members in ascending order.
    pub fn nodes(self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.size());
        let mut rest = self.0;
        while rest != 0 {
            out.push(rest.trailing_zeros() as usize);
            rest &= rest - 1;
        }
        out
    }
}

/// Serialized as its ascending node list.
impl Serialize for SubsetState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.nodes())
    }
}

impl fmt::Display for SubsetState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.nodes().into_iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// Maximal independent sets sharing one size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DegeneracyClass {
    pub size: usize,
    /// Indices into [`MinimaCatalog::sets`].
    pub members: Vec<usize>,
}

/// All maximal independent sets of a graph (the local minima of the cost
/// function) together with the structure the crossing analysis needs.
#[derive(Clone, Debug, PartialEq)]
pub struct MinimaCatalog {
    /// Ascending by mask value.
    pub sets: Vec<SubsetState>,
    pub sizes: Vec<usize>,
    pub mis_size: usize,
    /// Ordered by decreasing size, so the first class holds the maximum sets.
    pub degeneracy_classes: Vec<DegeneracyClass>,
    /// Index pairs `(a, b)`, `a < b`, of equal-size sets at Hamming distance 2.
    pub close_pairs: Vec<(usize, usize)>,
}

impl MinimaCatalog {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn index_of(&self, s: SubsetState) -> Option<usize> {
        self.sets.binary_search(&s).ok()
    }

    /// Maximum independent sets.
    pub fn maximum_sets(&self) -> Vec<SubsetState> {
        self.sets
            .iter()
            .zip(&self.sizes)
            .filter(|&(_, &s)| s == self.mis_size)
            .map(|(&set, _)| set)
            .collect()
    }

    /// Maximal sets that are strictly smaller than the maximum.
    pub fn local_sets(&self) -> Vec<SubsetState> {
        self.sets
            .iter()
            .zip(&self.sizes)
            .filter(|&(_, &s)| s < self.mis_size)
            .map(|(&set, _)| set)
            .collect()
    }

    /// Size classes of strictly-local minima, largest first.
    pub fn local_classes(&self) -> impl Iterator<Item = &DegeneracyClass> {
        self.degeneracy_classes
            .iter()
            .filter(move |cls| cls.size < self.mis_size)
    }

    pub fn class_states(&self, class: &DegeneracyClass) -> Vec<SubsetState> {
        class.members.iter().map(|&k| self.sets[k]).collect()
    }

    /// Close-pair partners of set index `k`.
    pub fn partners(&self, k: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .close_pairs
            .iter()
            .filter_map(|&(a, b)| {
                if a == k {
                    Some(b)
                } else if b == k {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }
}

/// Enumerates maximal independent sets as maximal cliques of the complement
/// graph (Bron–Kerbosch with Tomita pivoting on bitmasks).
pub fn enumerate_maximal_independent_sets(g: &Graph) -> MinimaCatalog {
    let full = g.full_mask();
    let comp: Vec<u32> = (0..g.n()).map(|v| !g.adjacency(v) & full & !bit(v)).collect();
    let mut sets = Vec::new();
    bron_kerbosch(&comp, 0, full, 0, &mut sets);
    sets.sort_unstable();
    let sets: Vec<SubsetState> = sets.into_iter().map(SubsetState).collect();
    build_catalog(sets)
}

fn bron_kerbosch(comp: &[u32], r: u32, mut p: u32, mut x: u32, out: &mut Vec<u32>) {
    if p == 0 {
        if x == 0 {
            out.push(r);
        }
        return;
    }
    // pivot maximising |P ∩ N(u)|
    let mut pivot = 0usize;
    let mut best = -1i32;
    let mut cand = p | x;
    while cand != 0 {
        let u = cand.trailing_zeros() as usize;
        let score = (p & comp[u]).count_ones() as i32;
        if score > best {
            best = score;
            pivot = u;
        }
        cand &= cand - 1;
    }
    let mut todo = p & !comp[pivot];
    while todo != 0 {
        let v = todo.trailing_zeros() as usize;
        bron_kerbosch(comp, r | bit(v), p & comp[v], x & comp[v], out);
        p &= !bit(v);
        x |= bit(v);
        todo &= todo - 1;
    }
}

fn build_catalog(sets: Vec<SubsetState>) -> MinimaCatalog {
    let sizes: Vec<usize> = sets.iter().map(|s| s.size()).collect();
    let mis_size = sizes.iter().copied().max().unwrap_or(0);

    let mut distinct: Vec<usize> = sizes.clone();
    distinct.sort_unstable_by(|a, b| b.cmp(a));
    distinct.dedup();
    let degeneracy_classes = distinct
        .into_iter()
        .map(|size| DegeneracyClass {
            size,
            members: (0..sets.len()).filter(|&k| sizes[k] == size).collect(),
        })
        .collect::<Vec<_>>();

    let mut close_pairs = Vec::new();
    for cls in &degeneracy_classes {
        for (x, &a) in cls.members.iter().enumerate() {
            for &b in &cls.members[x + 1..] {
                if sets[a].hamming(sets[b]) == 2 {
                    close_pairs.push((a, b));
                }
            }
        }
    }
    close_pairs.sort_unstable();

    MinimaCatalog {
        sets,
        sizes,
        mis_size,
        degeneracy_classes,
        close_pairs,
    }
}

fn require_maximal(g: &Graph, s: SubsetState) -> Result<()> {
    if !g.is_independent(s.mask()) {
        return Err(Error::NotIndependent { mask: s.mask() });
    }
    if !g.is_maximal_independent(s.mask()) {
        return Err(Error::NotMaximal { mask: s.mask() });
    }
    Ok(())
}

/// Equal-size maximal independent sets reachable by removing one node of `s`
/// and adding one node outside it.
pub fn degenerate_neighbors(g: &Graph, s: SubsetState) -> Result<Vec<SubsetState>> {
    require_maximal(g, s)?;
    let mut out = Vec::new();
    for i in s.nodes() {
        let base = s.mask() & !bit(i);
        for j in 0..g.n() {
            if j == i || s.contains(j) {
                continue;
            }
            // j may only touch i inside s
            if g.adjacency(j) & base != 0 {
                continue;
            }
            let t = base | bit(j);
            if g.is_maximal_independent(t) {
                out.push(SubsetState(t));
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// One removal in a [`RepairPath`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepairStep {
    pub removed: usize,
    /// `c · violations` after the removal.
    pub bilinear_energy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepairPath {
    pub start: SubsetState,
    pub start_energy: f64,
    pub steps: Vec<RepairStep>,
    pub end: SubsetState,
}

/// Removes nodes one at a time until the set is independent, never raising
/// the penalty term `c Σ x_i x_j`. Each step removes the node with the most
/// violated incident edges, ties going to the lowest index.
pub fn greedy_repair(g: &Graph, c: f64, s: SubsetState) -> RepairPath {
    let mut mask = s.mask();
    let start_energy = c * g.violations(mask) as f64;
    let mut steps = Vec::new();
    loop {
        let mut best: Option<(usize, usize)> = None;
        let mut rest = mask;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            let hits = g.neighbours_in(i, mask);
            if hits > 0 && best.is_none_or(|(_, h)| hits > h) {
                best = Some((i, hits));
            }
            rest &= rest - 1;
        }
        let Some((i, _)) = best else { break };
        mask &= !bit(i);
        steps.push(RepairStep {
            removed: i,
            bilinear_energy: c * g.violations(mask) as f64,
        });
    }
    RepairPath {
        start: s,
        start_energy,
        steps,
        end: SubsetState(mask),
    }
}
