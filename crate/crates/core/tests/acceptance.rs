//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::time::Instant;

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specind::dynamics::{
    entropy_tensorization_ratio, glauber_kernel, shattering_check, simulate_glauber,
};
use specind::gibbs::{parse_rational, Caps, Graph, SpinSystem};
use specind::influence::{influence_matrix, influence_spectrum, spectral_independence};
use specind::levels::WeightedComplex;
use specind::matroid::{
    reliability_direct, reliability_dual, reliability_exact, simulate_bases_exchange, Matroid,
};
use specind::verify::{run_matroid_suite, run_spin_suite, SuiteReport};

type Outcome = Result<String, String>;

fn hardcore(g: &Graph, l: &str) -> SpinSystem {
    SpinSystem::build_hardcore(g, &parse_rational(l).unwrap(), &Caps::default()).unwrap()
}

const LAMBDAS: [&str; 3] = ["1/2", "1", "2"];

fn er(n: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < 0.5 {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, &edges).unwrap()
}

/// Graphs for the influence sweep: paths, cycles, cliques and G(n, 1/2), n ≤ 6.
fn influence_graphs() -> Vec<Graph> {
    let mut out = Vec::new();
    out.extend((2..=6).map(Graph::path));
    out.extend((3..=6).map(Graph::cycle));
    out.extend((2..=6).map(Graph::complete));
    for n in 4..=6 {
        for s in 0..7 {
            out.push(er(n, 100 * n as u64 + s));
        }
    }
    out
}

/// Graphs the full suite runs on (n ≤ 5 keeps every level small).
fn suite_graphs() -> Vec<Graph> {
    let mut out = Vec::new();
    out.extend((2..=5).map(Graph::path));
    out.extend((3..=5).map(Graph::cycle));
    out.extend((2..=4).map(Graph::complete));
    out.extend((2..=4).map(Graph::empty));
    for s in 0..3 {
        out.push(er(5, 500 + s));
    }
    out
}

fn suite_reports() -> Vec<SuiteReport> {
    let mut out = Vec::new();
    for g in suite_graphs() {
        for l in LAMBDAS {
            let mut r = run_spin_suite(&hardcore(&g, l), 2024, &Caps::default()).unwrap();
            r.subject = format!("λ={l} {}", g.to_json());
            out.push(r);
        }
    }
    out
}

/// All results of the named checks: (count, first failure).
fn tally(reports: &[SuiteReport], names: &[&str]) -> (usize, usize, Option<String>) {
    let mut count = 0;
    let mut skipped = 0;
    let mut first = None;
    for r in reports {
        for c in r.checks.iter().filter(|c| names.contains(&c.name.as_str())) {
            count += 1;
            skipped += usize::from(c.skipped.is_some());
            if !c.pass && first.is_none() {
                first = Some(format!("{} [{}] on {}: margin {:?} {:?}", c.name, c.instance, r.subject, c.margin, c.notes));
            }
        }
    }
    (count, skipped, first)
}

fn from_suite(reports: &[SuiteReport], names: &[&str]) -> Outcome {
    let (count, skipped, first) = tally(reports, names);
    if count == 0 {
        return Err("no results".into());
    }
    match first {
        Some(f) => Err(f),
        None => Ok(format!("{count} results, {skipped} skipped with reasons")),
    }
}

fn criterion_1() -> Outcome {
    let caps = Caps::default();
    let mut instances = 0;
    let mut pinnings = 0;
    for g in influence_graphs() {
        for l in LAMBDAS {
            let sys = hardcore(&g, l);
            instances += 1;
            for k in 0..=sys.n() {
                for p in sys.enumerate_pinnings(k, &caps).unwrap() {
                    let psi = influence_matrix(&sys, &p).unwrap();
                    if psi.is_degenerate() {
                        continue;
                    }
                    pinnings += 1;
                    let min = influence_spectrum(&psi).unwrap().min().unwrap();
                    if min < -1e-10 {
                        return Err(format!("λ_min = {min} at {p} on {}", g.to_json()));
                    }
                    if psi.factorization_residual() > 1e-12 || psi.factorization_exact() == Some(false) {
                        return Err(format!("factorization residual at {p} on {}", g.to_json()));
                    }
                }
            }
        }
    }
    if instances < 100 {
        return Err(format!("only {instances} instances"));
    }
    Ok(format!("{instances} instances, {pinnings} pinnings"))
}

fn criterion_7() -> Outcome {
    let mut graphs: Vec<(String, Graph)> = Vec::new();
    // every labeled graph with n ≤ 6 and Δ ≤ 3
    for n in 1..=6usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        for mask in 0u64..1 << pairs.len() {
            let edges: Vec<_> = (0..pairs.len()).filter(|&i| mask >> i & 1 == 1).map(|i| pairs[i]).collect();
            let g = Graph::new(n, &edges).unwrap();
            if g.max_degree() <= 3 {
                graphs.push((format!("labeled n={n} #{mask}"), g));
            }
        }
    }
    let exhaustive = graphs.len();
    // structured families up to 12
    for n in 2..=12 {
        graphs.push((format!("path {n}"), Graph::path(n)));
    }
    for n in 3..=12 {
        graphs.push((format!("cycle {n}"), Graph::cycle(n)));
    }
    for half in 2..=6 {
        let mut ladder = Vec::new();
        for i in 0..half {
            ladder.push((i, i + half));
            if i + 1 < half {
                ladder.push((i, i + 1));
                ladder.push((i + half, i + 1 + half));
            }
        }
        graphs.push((format!("ladder {}", 2 * half), Graph::new(2 * half, &ladder).unwrap()));
        if half >= 3 {
            let mut prism = ladder.clone();
            prism.push((half - 1, 0));
            prism.push((2 * half - 1, half));
            graphs.push((format!("prism {}", 2 * half), Graph::new(2 * half, &prism).unwrap()));
        }
    }
    let cube: Vec<_> = (0..8usize)
        .flat_map(|u| (0..3).map(move |b| (u, u ^ 1 << b)))
        .filter(|(u, v)| u < v)
        .collect();
    graphs.push(("cube".into(), Graph::new(8, &cube).unwrap()));
    let mut petersen = Vec::new();
    for i in 0..5 {
        petersen.push((i, (i + 1) % 5));
        petersen.push((i, i + 5));
        petersen.push((i + 5, (i + 2) % 5 + 5));
    }
    graphs.push(("petersen".into(), Graph::new(10, &petersen).unwrap()));
    let triangles: Vec<_> = (0..4).flat_map(|t| [(3 * t, 3 * t + 1), (3 * t + 1, 3 * t + 2), (3 * t, 3 * t + 2)]).collect();
    graphs.push(("four triangles".into(), Graph::new(12, &triangles).unwrap()));
    // seeded random Δ ≤ 3 graphs
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in 7..=12usize {
        for i in 0..5 {
            let mut deg = vec![0; n];
            let mut edges = Vec::new();
            for _ in 0..2 * n {
                let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
                let (u, v) = (u.min(v), u.max(v));
                if u != v && deg[u] < 3 && deg[v] < 3 && !edges.contains(&(u, v)) {
                    deg[u] += 1;
                    deg[v] += 1;
                    edges.push((u, v));
                }
            }
            graphs.push((format!("random n={n} #{i}"), Graph::new(n, &edges).unwrap()));
        }
    }
    let mut checks = 0;
    for (name, g) in &graphs {
        for m in 1..=g.n() {
            let r = shattering_check(g, m, 0, 0, 1).map_err(|e| format!("{name}: {e:?}"))?;
            if !r.exact {
                return Err(format!("{name} m={m} was not enumerated exactly"));
            }
            if r.violations > 0 {
                return Err(format!("{name} m={m}: {} violations", r.violations));
            }
            checks += 1;
        }
    }
    // independent recount of one row set
    let c6 = Graph::cycle(6);
    let r = shattering_check(&c6, 2, 0, 0, 1).unwrap();
    let (mut singles, mut pairs) = (0, 0);
    for a in 0..6 {
        for b in a + 1..6 {
            if a == 0 || b == 0 {
                if (b - a) % 6 == 1 || (b - a) % 6 == 5 {
                    pairs += 1;
                } else {
                    singles += 1;
                }
            }
        }
    }
    let p1 = r.rows[0].per_vertex[0];
    let p2 = r.rows[1].per_vertex[0];
    if (p1 - singles as f64 / 15.0).abs() > 1e-15 || (p2 - pairs as f64 / 15.0).abs() > 1e-15 {
        return Err(format!("C6 recount mismatch: {p1} {p2}"));
    }
    Ok(format!(
        "{} graphs ({exhaustive} labeled n ≤ 6), {checks} block sizes, zero violations",
        graphs.len()
    ))
}

fn suite_matroids() -> Vec<(String, Matroid)> {
    let q = |a: i64| BigRational::from_integer(a.into());
    vec![
        ("graphic(triangle)".into(), Matroid::graphic(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()),
        ("graphic(K4)".into(), Matroid::graphic(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap()),
        ("uniform(4,2)".into(), Matroid::uniform(4, 2).unwrap()),
        ("uniform(5,3)".into(), Matroid::uniform(5, 3).unwrap()),
        (
            "transversal".into(),
            Matroid::transversal(5, 3, &[(0, 0), (0, 1), (1, 1), (2, 1), (2, 2), (3, 2), (4, 0), (4, 2)]).unwrap(),
        ),
        (
            "linear".into(),
            Matroid::linear_rational(vec![
                vec![q(1), q(0), q(0)],
                vec![q(0), q(1), q(0)],
                vec![q(0), q(0), q(1)],
                vec![q(1), q(1), q(0)],
                vec![q(0), q(1), q(1)],
                vec![q(2), q(0), q(0)],
            ])
            .unwrap(),
        ),
    ]
}

fn criterion_8() -> Outcome {
    let wanted = [
        "matroid.axioms",
        "matroid.exchange_gap",
        "matroid.rank_two_links",
        "matroid.trickle_down",
        "matroid.link_gap_at_least_one",
        "matroid.link_dirichlet_decomposition",
        "matroid.link_expectation_decomposition",
        "matroid.second_eigenvector_average",
    ];
    let mut reports = Vec::new();
    let mut ranks = Vec::new();
    for (name, m) in suite_matroids() {
        let mut r = run_matroid_suite(&m, 1, &Caps::default()).unwrap();
        r.subject = name;
        reports.push(r);
        ranks.push(m.rank());
    }
    for (r, rank) in reports.iter().zip(ranks) {
        if !r.pass {
            let c = r.failures().next().unwrap();
            return Err(format!("{}: {} [{}]", r.subject, c.name, c.instance));
        }
        // rank 2 has a single level of links, so no trickle-down step
        let required: &[&str] = if rank >= 3 { &wanted } else { &wanted[..3] };
        for w in required.iter().chain(&["matroid.link_gap_at_least_one"]) {
            if !r.checks.iter().any(|c| c.name == *w && c.skipped.is_none()) {
                return Err(format!("{}: {w} was not evaluated", r.subject));
            }
        }
    }
    from_suite(&reports, &wanted)
}

fn criterion_9() -> Outcome {
    let caps = Caps::default();
    let mut n = 0;
    for (name, m) in suite_matroids() {
        for p in [0.25, 0.5, 0.75] {
            let a = reliability_dual(&m, p, &caps).unwrap();
            let b = reliability_direct(&m, p, &caps).unwrap();
            if (a - b).abs() > 1e-12 {
                return Err(format!("{name} p={p}: {a} vs {b}"));
            }
            n += 1;
        }
    }
    let tri = Matroid::graphic(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
    let half = parse_rational("1/2").unwrap();
    let exact = reliability_exact(&tri, &half, &caps).unwrap();
    // p³ + 3p²(1−p) at p = 1/2
    let hand = &half * &half * &half + BigRational::from_integer(3.into()) * &half * &half * (BigRational::from_integer(1.into()) - &half);
    if exact != half || hand != half {
        return Err(format!("triangle exact reliability {exact}"));
    }
    Ok(format!("{n} (matroid, p) pairs agree; triangle at 1/2 is exactly 1/2"))
}

fn criterion_10() -> Outcome {
    let p3 = Graph::path(3);
    let one = parse_rational("1").unwrap();
    let sys = SpinSystem::build_hardcore(&p3, &one, &Caps::default()).unwrap();
    let a = simulate_glauber(&p3, 1.0, 1_000_000, 42, false).unwrap();
    let b = simulate_glauber(&p3, 1.0, 1_000_000, 42, false).unwrap();
    let tv = a.tv_to(&sys);
    if a != b {
        return Err("Glauber replay differs".into());
    }
    if tv >= 0.01 {
        return Err(format!("Glauber TV {tv}"));
    }
    let tri = Matroid::graphic(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
    let s = simulate_bases_exchange(&tri, 100_000, 42);
    let t = simulate_bases_exchange(&tri, 100_000, 42);
    let tv2 = s.tv_to_uniform(&tri.bases(&Caps::default()).unwrap());
    if s != t {
        return Err("bases-exchange replay differs".into());
    }
    if tv2 >= 0.02 {
        return Err(format!("bases-exchange TV {tv2}"));
    }
    Ok(format!("Glauber TV {tv:.5}, bases-exchange TV {tv2:.5}, replays identical"))
}

fn criterion_11() -> Outcome {
    let caps = Caps::default();
    let mut systems = 0;
    for n in 1..=6 {
        for l in LAMBDAS {
            let sys = hardcore(&Graph::empty(n), l);
            let si = spectral_independence(&sys, &caps).unwrap();
            if si.eta.abs() > 1e-9 {
                return Err(format!("η = {} at n={n}", si.eta));
            }
            let complex = WeightedComplex::from_spin_system(&sys, &caps).unwrap();
            for g in complex.local_gaps().unwrap() {
                if (g.gamma - 1.0).abs() > 1e-9 {
                    return Err(format!("γ_{} = {} at n={n}", g.k, g.gamma));
                }
            }
            for v in 0..n {
                let f: Vec<f64> = sys.support().iter().map(|c| if c.spin(v) == 1 { 1.1 } else { 0.1 }).collect();
                let r = entropy_tensorization_ratio(&sys, &f).unwrap();
                if r.undefined || (r.ratio - 1.0).abs() > 1e-9 {
                    return Err(format!("ratio {} for vertex {v} at n={n}", r.ratio));
                }
            }
            glauber_kernel(&sys).unwrap();
            systems += 1;
        }
    }
    Ok(format!("{systems} edgeless systems calibrated"))
}

fn main() {
    let start = Instant::now();
    let reports = suite_reports();
    let results: Vec<(&str, Outcome)> = vec![
        ("1 influence PSD and factorization", criterion_1()),
        ("2 local-walk spectrum identity", from_suite(&reports, &["levels.local_walk_spectrum"])),
        (
            "3 Glauber = top down-up, first up-down = lazy local walk",
            from_suite(&reports, &["dynamics.glauber_equals_top_down_up", "levels.lazy_root_walk"]),
        ),
        (
            "4 local-to-global and improved bounds",
            from_suite(&reports, &["dynamics.local_to_global", "dynamics.improved_block_gap", "dynamics.improved_level_gap"]),
        ),
        (
            "5 probe identity battery",
            from_suite(
                &reports,
                &[
                    "levels.multi_level_dirichlet",
                    "levels.up_down_local_decomposition",
                    "levels.down_up_local_variance",
                    "levels.step_factorization",
                    "levels.two_step_variance",
                    "levels.up_down_dominates_down_up",
                    "levels.down_up_growth",
                ],
            ),
        ),
        (
            "6 mixing and relaxation bounds, positivity, boosting",
            from_suite(
                &reports,
                &["dynamics.mixing_bound", "dynamics.relaxation_bound", "dynamics.psd", "dynamics.mixing_boosting"],
            ),
        ),
        ("7 shattering", criterion_7()),
        ("8 matroid suite", criterion_8()),
        ("9 reliability paths", criterion_9()),
        ("10 simulation fidelity", criterion_10()),
        ("11 product calibration", criterion_11()),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    println!(
        "{} suite reports, {} criteria failed, {:.1}s",
        reports.len(),
        failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
