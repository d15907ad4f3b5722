#![allow(dead_code)]

use aqo_core::graph::{generate_graph, Graph, GraphKind};

/// Seeded `G(n, p)` graphs with `n` in `lo..=hi`.
pub fn random_graphs(count: usize, lo: usize, hi: usize, seed: u64) -> Vec<Graph> {
    (0..count)
        .map(|i| {
            let n = lo + i % (hi - lo + 1);
            let p = [0.2, 0.35, 0.5, 0.65][i % 4];
            generate_graph(&GraphKind::RandomGnp { n, p }, seed + i as u64).unwrap()
        })
        .collect()
}

/// Like [`random_graphs`] but keeps connected graphs only.
pub fn connected_graphs(count: usize, lo: usize, hi: usize, seed: u64) -> Vec<Graph> {
    let mut out = Vec::with_capacity(count);
    let mut s = seed;
    while out.len() < count {
        let n = lo + out.len() % (hi - lo + 1);
        let p = [0.3, 0.45, 0.6][(s % 3) as usize];
        let g = generate_graph(&GraphKind::RandomGnp { n, p }, s).unwrap();
        if g.is_connected() {
            out.push(g);
        }
        s += 1;
    }
    out
}
