//! One PASS/FAIL line per acceptance criterion; exits non-zero on any failure.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use aqo_core::graph::{
    enumerate_maximal_independent_sets, generate_graph, greedy_repair, Graph, GraphKind, SubsetState,
};
use aqo_core::model::{AnnealInstance, DriverField};
use aqo_core::oracle::{brute_force_landscape, finite_difference_e2, rs_series, OracleTarget};
use aqo_core::perturb::{
    degenerate_effective_matrix, predict_crossing, second_order_nondegenerate, DegenerateManifold,
};
use aqo_core::report::{analyze, to_json, AnalysisOptions};
use aqo_core::spectrum::{
    dense_hamiltonian, detect_anticrossing, eigensolve_lowest, find_swap, LambdaGrid, SolverKind,
    SolverOptions, Sweeper,
};
use aqo_core::strategy::{beta_assignment, BetaRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: aqo_core::Error) -> String {
    e.to_string()
}

fn dense() -> SolverOptions {
    SolverOptions::default().with_kind(SolverKind::Dense)
}

fn ground(inst: &AnnealInstance, lambda: f64) -> Result<f64, String> {
    Ok(eigensolve_lowest(inst, lambda, 1, &dense()).map_err(err)?.values[0])
}

fn factorial(k: u64) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

fn criterion_1() -> Check {
    let grid = LambdaGrid::default();
    let mut worst_coef: f64 = 0.0;
    let mut worst_energy: f64 = 0.0;
    for s in [1usize, 3] {
        let inst = AnnealInstance::uniform(Graph::empty(s).map_err(err)?, 2.0).map_err(err)?;
        let all = SubsetState::new((1u32 << s) - 1, s).map_err(err)?;
        let series = rs_series(&inst, &OracleTarget::State(all), 10).map_err(err)?;
        for q in [2u64, 4, 6, 8, 10] {
            let sign = if (q / 2) % 2 == 0 { 1.0 } else { -1.0 };
            let want = sign * factorial(q - 2) / (factorial(q / 2 - 1) * factorial(q / 2)) * s as f64;
            let rel = (series[q as usize] - want).abs() / want.abs();
            worst_coef = worst_coef.max(rel);
            ensure(rel <= 1e-9, || format!("s = {s}, q = {q}: {} vs {want}", series[q as usize]))?;
        }
        for &l in grid.as_slice() {
            let want = -(s as f64) * (0.5 + (0.25 + l * l).sqrt());
            let diff = (ground(&inst, l)? - want).abs();
            worst_energy = worst_energy.max(diff);
            ensure(diff <= 1e-10, || format!("s = {s}, lambda = {l}: off by {diff:e}"))?;
        }
    }
    Ok(format!("max coefficient rel err {worst_coef:.1e}, max energy err {worst_energy:.1e}"))
}

fn criterion_2() -> Check {
    let g = generate_graph(&"complete_bipartite:2,3".parse().map_err(err)?, 0).map_err(err)?;
    let inst = AnnealInstance::uniform(g.clone(), 5.0).map_err(err)?;
    let cat = enumerate_maximal_independent_sets(&g);
    let m = cat.maximum_sets()[0];
    let mp = cat.local_sets()[0];
    let mut notes = Vec::new();
    for (label, s, expect) in [("M", m, -22.0 / 7.0), ("M'", mp, -7.0 / 3.0)] {
        let e2 = second_order_nondegenerate(&inst, s).map_err(err)?.e2;
        let fd = finite_difference_e2(&inst, &OracleTarget::State(s), 1e-3).map_err(err)?;
        ensure((e2 - expect).abs() < 1e-9, || format!("{label}: E2 = {e2}, expected {expect}"))?;
        ensure((fd - e2).abs() < 1e-4, || format!("{label}: finite difference {fd} vs {e2}"))?;
        notes.push(format!("{label} E2 {e2:.6} (fd {fd:.6})"));
    }
    let e2 = second_order_nondegenerate(&inst, m).map_err(err)?.e2;
    let resid = |l: f64| -> Result<f64, String> { Ok((ground(&inst, l)? - (inst.energy(m) + l * l * e2)).abs()) };
    let ratio = resid(0.02)? / resid(0.01)?;
    ensure((ratio - 16.0).abs() <= 0.2 * 16.0, || format!("residual ratio {ratio:.3}"))?;
    notes.push(format!("residual ratio {ratio:.3}"));
    Ok(notes.join(", "))
}

fn criterion_3() -> Check {
    let mut notes = Vec::new();
    for (k, want) in [(3usize, -5.0), (2, -3.0)] {
        let g = generate_graph(&GraphKind::Complete { n: k }, 0).map_err(err)?;
        let inst = AnnealInstance::uniform(g.clone(), 3.0).map_err(err)?;
        let states = enumerate_maximal_independent_sets(&g).sets;
        let eff = degenerate_effective_matrix(&inst, &DegenerateManifold::restricted(&g, 3.0, states.clone()).map_err(err)?)
            .map_err(err)?;
        let fd = finite_difference_e2(&inst, &OracleTarget::Manifold(states), 1e-3).map_err(err)?;
        ensure((eff.e2 - want).abs() < 1e-9, || format!("K{k}: E2 = {}", eff.e2))?;
        ensure((fd - eff.e2).abs() < 1e-4, || format!("K{k}: finite difference {fd}"))?;
        let uniform = 1.0 / (k as f64).sqrt();
        ensure(eff.coefficients.iter().all(|&c| c > 0.0 && (c - uniform).abs() < 1e-9), || {
            format!("K{k}: coefficients {:?}", eff.coefficients)
        })?;
        notes.push(format!("K{k} E2 {:.6} (fd {fd:.6})", eff.e2));
    }
    let g = generate_graph(&GraphKind::Cycle { n: 5 }, 0).map_err(err)?;
    let inst = AnnealInstance::uniform(g.clone(), 3.0).map_err(err)?;
    let mis = enumerate_maximal_independent_sets(&g).maximum_sets();
    let full = DegenerateManifold::full_at(&g, 3.0, mis[0]).map_err(err)?;
    let eff = degenerate_effective_matrix(&inst, &full).map_err(err)?;
    let series = rs_series(&inst, &OracleTarget::Manifold(mis), 2).map_err(err)?;
    ensure(!eff.restricted, || "C5 manifold should be full".into())?;
    ensure((eff.e2 - series[2]).abs() < 1e-9, || format!("C5: {} vs series {}", eff.e2, series[2]))?;
    notes.push(format!("C5 full E2 {:.6}", eff.e2));
    Ok(notes.join(", "))
}

/// Seeded connected graphs, `n ≤ 8`, whose minima all have every outside
/// node adjacent to at least two members.
fn well_covered_corpus(count: usize, seed: u64) -> Vec<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let n = rng.random_range(4..=8);
        let p = rng.random_range(0.4..0.85);
        let g = generate_graph(&GraphKind::RandomGnp { n, p }, rng.random()).unwrap();
        if !g.is_connected() {
            continue;
        }
        let cat = enumerate_maximal_independent_sets(&g);
        if cat.local_sets().is_empty() {
            continue;
        }
        let covered = cat
            .sets
            .iter()
            .all(|s| (0..n).filter(|&j| !s.contains(j)).all(|j| g.neighbours_in(j, s.mask()) >= 2));
        if covered {
            out.push(g);
        }
    }
    out
}

fn criterion_4() -> Check {
    let corpus = well_covered_corpus(1000, 4004);
    let bound_grid = LambdaGrid::default();
    let swap_grid = LambdaGrid::new((1..=16).map(|i| i as f64 / 32.0).collect()).map_err(err)?;
    let mut pairs = 0usize;
    let mut tightest = f64::INFINITY;
    for (idx, g) in corpus.iter().enumerate() {
        let n = g.n() as f64;
        let inst = AnnealInstance::uniform(g.clone(), n).map_err(err)?;
        let cat = enumerate_maximal_independent_sets(g);
        let maximum = cat.maximum_sets();
        let locals = cat.local_sets();
        for &m in &maximum {
            let e2m = second_order_nondegenerate(&inst, m).map_err(err)?.e2;
            for &mp in &locals {
                let e2l = second_order_nondegenerate(&inst, mp).map_err(err)?.e2;
                let (d0, d2) = (inst.energy(mp) - inst.energy(m), e2l - e2m);
                ensure(d0 >= 1.0 && d2 > 0.5, || format!("graph {idx}: dE0 {d0}, dE2 {d2}"))?;
                for &l in bound_grid.as_slice() {
                    let margin = d0 + l * l * d2 - (1.0 + l * l / 2.0);
                    tightest = tightest.min(margin);
                    ensure(margin > 0.0, || format!("graph {idx}, lambda {l}: margin {margin}"))?;
                }
                pairs += 1;
            }
        }
        let sweeper = Sweeper::new(&inst, 1, &maximum, &locals, SolverOptions::default().with_seed(idx as u64))
            .map_err(err)?;
        let mut trace = sweeper.sweep(&swap_grid).map_err(err)?;
        let swap = find_swap(&mut trace, &sweeper).map_err(err)?;
        ensure(swap.is_none(), || format!("graph {idx} ({:?}) swaps at {swap:?}", g.edges()))?;
    }
    Ok(format!(
        "{} graphs, {pairs} minima pairs, tightest bound margin {tightest:.2e}, no swap up to 0.5",
        corpus.len()
    ))
}

fn criterion_5() -> Check {
    let g = generate_graph(&GraphKind::Split { clique: 7, independent: 2 }, 0).map_err(err)?;
    let inst = AnnealInstance::uniform(g.clone(), 9.0).map_err(err)?;
    let cat = enumerate_maximal_independent_sets(&g);
    let maximum = cat.maximum_sets();
    let locals = cat.local_sets();
    let global = DegenerateManifold::restricted(&g, 9.0, maximum.clone()).map_err(err)?;
    let lm = DegenerateManifold::restricted(&g, 9.0, locals.clone()).map_err(err)?;
    let pred = predict_crossing(&inst, &global, &lm).map_err(err)?;
    let star = pred.lambda_star.ok_or("no predicted crossing")?;
    ensure((star - 0.397).abs() <= 1e-3 && pred.within_radius, || format!("lambda* {star}"))?;

    let observe = |inst: &AnnealInstance| {
        let sweeper = Sweeper::new(inst, 2, &maximum, &locals, SolverOptions::default()).map_err(err)?;
        let mut trace = sweeper.sweep(&LambdaGrid::default()).map_err(err)?;
        detect_anticrossing(&mut trace, &sweeper, Some(&pred)).map_err(err)
    };
    let before = observe(&inst)?;
    let swap_l = before.swap_lambda.unwrap_or(f64::NAN);
    ensure(before.swap && (0.25..=0.55).contains(&swap_l), || format!("swap {} at {swap_l}", before.swap))?;

    let union: Vec<usize> = (0..7).collect();
    let beta = beta_assignment(&g, 9.0, &union, BetaRule::Fixed(0.4)).map_err(err)?;
    let f = beta.f_value.ok_or("no F value")?;
    ensure((f - 0.88).abs() <= 0.01, || format!("F = {f}"))?;
    let after = observe(&inst.with_driver(beta.driver.clone()).map_err(err)?)?;
    ensure(!after.swap, || format!("swap persists at {:?}", after.swap_lambda))?;
    // the hint rule (m = 2, p = 0) lands on a larger β that also certifies
    let hint = beta_assignment(&g, 9.0, &union, BetaRule::Hint { m: 2, p: 0 }).map_err(err)?;
    ensure(hint.certificate.is_some(), || "hint rule gave no certificate".into())?;
    Ok(format!(
        "lambda* {star:.4}, swap at {swap_l:.4}, F(beta=0.4) {f:.3}, no swap after (g_min {:.4})",
        after.g_min
    ))
}

fn criterion_6() -> Check {
    let graphs = common::random_graphs(200, 1, 12, 6006);
    for (idx, g) in graphs.iter().enumerate() {
        let c = g.n().max(2) as f64;
        let mut brute: Vec<SubsetState> = brute_force_landscape(g, c)
            .map_err(err)?
            .into_iter()
            .filter(|p| p.independent && p.local_minimum)
            .map(|p| p.state)
            .collect();
        brute.sort_unstable();
        let mut listed = enumerate_maximal_independent_sets(g).sets;
        listed.sort_unstable();
        ensure(brute == listed, || format!("graph {idx} ({:?}) differs", g.edges()))?;
    }
    Ok(format!("{} graphs agree", graphs.len()))
}

fn criterion_7() -> Check {
    let mut manifolds = 0usize;
    let mut graphs = 0u64;
    let mut worst = f64::NEG_INFINITY;
    while manifolds < 500 {
        let n = 4 + (graphs % 7) as usize;
        let p = [0.3, 0.45, 0.6][(graphs % 3) as usize];
        let g = generate_graph(&GraphKind::RandomGnp { n, p }, 7007 + graphs).map_err(err)?;
        let c = 1.5 + (graphs % 5) as f64;
        let driver = DriverField::new((0..n).map(|i| 0.5 + ((graphs as usize + 3 * i) % 7) as f64 / 6.0).collect())
            .map_err(err)?;
        let inst = AnnealInstance::new(g.clone(), c, driver).map_err(err)?;
        let cat = enumerate_maximal_independent_sets(&g);
        // connected components of the close-pair graph within one size
        let mut comp: Vec<usize> = (0..cat.len()).collect();
        for _ in 0..cat.len() {
            for &(a, b) in &cat.close_pairs {
                let low = comp[a].min(comp[b]);
                comp[a] = low;
                comp[b] = low;
            }
        }
        let mut groups: BTreeMap<usize, Vec<SubsetState>> = BTreeMap::new();
        for (k, &r) in comp.iter().enumerate() {
            groups.entry(r).or_default().push(cat.sets[k]);
        }
        for states in groups.into_values() {
            let m = DegenerateManifold::restricted(&g, c, states).map_err(err)?;
            let eff = degenerate_effective_matrix(&inst, &m).map_err(err)?;
            let (top, bound) = (-eff.e2, eff.max_row_sum());
            worst = worst.max((top - bound) / bound);
            ensure(top <= bound * (1.0 + 1e-12), || format!("graph {graphs}: {top} > {bound}"))?;
            ensure(eff.coefficients.iter().all(|&x| x > 0.0), || format!("graph {graphs}: non-positive C"))?;
            manifolds += 1;
        }
        graphs += 1;
    }
    Ok(format!("{manifolds} manifolds from {graphs} graphs, max (lambda_max - rowsum)/rowsum {worst:.2e}"))
}

fn criterion_8() -> Check {
    let graphs = common::random_graphs(100, 1, 8, 8008);
    let mut states = 0usize;
    for (idx, g) in graphs.iter().enumerate() {
        let c = g.n() as f64 + 1.0;
        for mask in 0..g.dim() as u32 {
            let path = greedy_repair(g, c, SubsetState::new(mask, g.n()).map_err(err)?);
            let mut last = path.start_energy;
            for step in &path.steps {
                ensure(step.bilinear_energy <= last, || format!("graph {idx}, start {mask:#b}: energy rose"))?;
                last = step.bilinear_energy;
            }
            ensure(g.violations(path.end.mask()) == 0, || format!("graph {idx}, start {mask:#b}: violations remain"))?;
            states += 1;
        }
    }
    Ok(format!("{states} states over {} graphs", graphs.len()))
}

fn criterion_9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9009);
    let mut worst_mv: f64 = 0.0;
    for (idx, g) in common::random_graphs(30, 1, 10, 9009).into_iter().enumerate() {
        let n = g.n();
        let driver = DriverField::new((0..n).map(|_| rng.random_range(0.2..2.0)).collect()).map_err(err)?;
        let inst = AnnealInstance::new(g, rng.random_range(1.5..6.0), driver).map_err(err)?;
        let lambda = rng.random_range(-1.5..1.5);
        let v: Vec<f64> = (0..inst.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut out = vec![0.0; inst.dim()];
        inst.apply_into(lambda, &v, &mut out);
        let h = dense_hamiltonian(&inst, lambda);
        let want = &h * nalgebra::DVector::from_column_slice(&v);
        let scale = want.amax().max(1.0);
        let diff = out.iter().zip(want.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        worst_mv = worst_mv.max(diff);
        ensure(diff <= 1e-12, || format!("matvec instance {idx}: {diff:e}"))?;
    }

    let mut worst_even: f64 = 0.0;
    for g in common::random_graphs(20, 2, 8, 9109) {
        let inst = AnnealInstance::new(g.clone(), g.n() as f64, DriverField::uniform(g.n(), 1.0).map_err(err)?)
            .map_err(err)?;
        let k = 4.min(inst.dim());
        for l in [0.1, 0.37, 0.8] {
            let plus = eigensolve_lowest(&inst, l, k, &dense()).map_err(err)?;
            let minus = eigensolve_lowest(&inst, -l, k, &dense()).map_err(err)?;
            for (a, b) in plus.values.iter().zip(&minus.values) {
                worst_even = worst_even.max((a - b).abs());
            }
        }
    }
    ensure(worst_even <= 1e-10, || format!("spectrum odd part {worst_even:e}"))?;

    let g = generate_graph(&GraphKind::RandomGnp { n: 10, p: 0.3 }, 42).map_err(err)?;
    let inst = AnnealInstance::uniform(g, 10.0).map_err(err)?;
    let opts = AnalysisOptions {
        grid: LambdaGrid::geometric(0.01, 1.0, 32).map_err(err)?,
        k: 3,
        seed: 42,
        ..Default::default()
    };
    let render = || -> Result<(String, Vec<u8>), String> {
        let (report, trace) = analyze("gnp", "gen", &inst, &opts).map_err(err)?;
        let mut csv = Vec::new();
        trace.write_csv(&mut csv).map_err(|e| e.to_string())?;
        Ok((to_json(&report).map_err(err)?, csv))
    };
    let first = render()?;
    let second = render()?;
    ensure(first == second, || "repeated analysis differs".into())?;
    Ok(format!(
        "matvec err {worst_mv:.1e}, even-spectrum err {worst_even:.1e}, {} report bytes identical",
        first.0.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(usize, fn() -> Check); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let mut failed = 0;
    for (id, check) in criteria {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {id}: PASS ({secs:.1}s) {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id}: FAIL ({secs:.1}s) {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
