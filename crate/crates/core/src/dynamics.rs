//! Glauber and uniform-block dynamics, exact mixing times, laziness,
//! trajectory simulation, the shattering estimate for random blocks, and the
//! entropy functional.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::{binomial, subsets_of_size, Graph, SpinConfig, SpinSystem};
use crate::numerics::{gap, reversible_spectrum, DenseMatrix, WalkKernel};
use crate::rng;

/// Largest state space for which dense kernels are built.
pub const MAX_KERNEL_STATES: usize = 4096;
/// Squarings allowed before `t_mix` gives up (horizon 2^62).
const MAX_SQUARINGS: usize = 62;
/// Exact shattering enumeration is used up to this many subsets.
pub const SHATTER_EXACT_LIMIT: u128 = 1_000_000;

fn check_states(system: &SpinSystem) -> Result<()> {
    if system.len() > MAX_KERNEL_STATES {
        return Err(Error::CapExceeded {
            what: "kernel states",
            required: system.len() as u128,
            cap: MAX_KERNEL_STATES as u128,
        });
    }
    Ok(())
}

/// Heat-bath Glauber dynamics on Ω: pick a uniform vertex and resample its
/// spin from the conditional given all other spins.
pub fn glauber_kernel(system: &SpinSystem) -> Result<WalkKernel> {
    check_states(system)?;
    let n = system.n();
    let len = system.len();
    let mut m = DenseMatrix::zeros(len, len);
    for (x, &c) in system.support().iter().enumerate() {
        for v in 0..n {
            let flipped = system.index_of(c.flip(v));
            let here = system.probs()[x];
            let there = flipped.map_or(0.0, |y| system.probs()[y]);
            let total = here + there;
            m[(x, x)] += here / total / n as f64;
            if let Some(y) = flipped {
                m[(x, y)] += there / total / n as f64;
            }
        }
    }
    Ok(WalkKernel::square(m, system.probs().to_vec()))
}

/// Uniform block dynamics: pick a uniform `m`-subset of vertices and
/// resample it from the conditional given the rest.
pub fn block_kernel(system: &SpinSystem, block_size: usize) -> Result<WalkKernel> {
    check_states(system)?;
    let n = system.n();
    if block_size == 0 || block_size > n {
        return Err(Error::InvalidInput(format!(
            "block size must lie in 1..={n}, got {block_size}"
        )));
    }
    let len = system.len();
    let weight = 1.0 / binomial(n, block_size) as f64;
    let mut m = DenseMatrix::zeros(len, len);
    for block in subsets_of_size(n, block_size) {
        let mut groups: HashMap<u64, Vec<usize>> = HashMap::new();
        for (i, c) in system.support().iter().enumerate() {
            groups.entry(c.0 & !block).or_default().push(i);
        }
        for members in groups.values() {
            let mass: f64 = members.iter().map(|&i| system.probs()[i]).sum();
            for &x in members {
                for &y in members {
                    m[(x, y)] += weight * system.probs()[y] / mass;
                }
            }
        }
    }
    Ok(WalkKernel::square(m, system.probs().to_vec()))
}

/// (P + I)/2.
pub fn lazy(kernel: &WalkKernel) -> Result<WalkKernel> {
    if !kernel.matrix.is_square() {
        return Err(Error::InvalidInput("lazy chain needs a square kernel".into()));
    }
    let m = kernel
        .matrix
        .add(&DenseMatrix::identity(kernel.dim()))?
        .scale(0.5);
    Ok(match &kernel.stationary {
        Some(pi) => WalkKernel::square(m, pi.clone()),
        None => WalkKernel::operator(m),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingTime {
    pub eps: f64,
    pub t_mix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingReport {
    pub n: usize,
    pub gamma: f64,
    pub absolute_gap: f64,
    pub lambda_star: f64,
    /// Smallest eigenvalue; nonnegative for positive semidefinite kernels.
    pub psd_min_eigenvalue: f64,
    pub t_relax: f64,
    /// n/γ
    pub t_relax_bound: f64,
    /// 1/γ
    pub t_relax_bound_standard: f64,
    pub mu_star: f64,
    /// (n/γ) log(1/μ*)
    pub t_mix_bound: f64,
    pub t_mix: Vec<MixingTime>,
}

impl MixingReport {
    pub fn t_mix_at(&self, eps: f64) -> Option<u64> {
        self.t_mix.iter().find(|m| m.eps == eps).map(|m| m.t_mix)
    }
}

/// Worst-start total variation distance max_x ½ Σ_y |M(x,y) − π(y)|.
pub fn worst_tv(m: &DenseMatrix, pi: &[f64]) -> f64 {
    (0..m.rows())
        .map(|x| tv_distance(m.row(x), pi))
        .fold(0.0, f64::max)
}

pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn renormalize_rows(m: &mut DenseMatrix) {
    for r in 0..m.rows() {
        let s: f64 = m.row(r).iter().sum();
        if s > 0.0 {
            for c in 0..m.cols() {
                m[(r, c)] /= s;
            }
        }
    }
}

/// Exact worst-start mixing time: the least t ≥ 0 with
/// max_x TV(P^t(x,·), π) ≤ ε.
pub fn exact_mixing_time(kernel: &WalkKernel, eps: f64) -> Result<u64> {
    let pi = kernel
        .stationary
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("mixing time needs a stationary distribution".into()))?;
    let dim = kernel.dim();
    let identity = DenseMatrix::identity(dim);
    if worst_tv(&identity, pi) <= eps {
        return Ok(0);
    }
    let mut powers = vec![kernel.matrix.clone()];
    while worst_tv(powers.last().expect("nonempty"), pi) > eps {
        if powers.len() > MAX_SQUARINGS {
            return Err(Error::NoConvergence {
                sweeps: MAX_SQUARINGS,
            });
        }
        let last = powers.last().expect("nonempty");
        let mut sq = last.matmul(last)?;
        renormalize_rows(&mut sq);
        powers.push(sq);
    }
    // d(t) is nonincreasing, so locate the last t with d(t) > ε bit by bit.
    let mut acc = identity;
    let mut t: u64 = 0;
    for i in (0..powers.len() - 1).rev() {
        let mut candidate = acc.matmul(&powers[i])?;
        renormalize_rows(&mut candidate);
        if worst_tv(&candidate, pi) > eps {
            acc = candidate;
            t += 1 << i;
        }
    }
    Ok(t + 1)
}

/// Gap quantities, exact mixing times and the relaxation-based bounds for a
/// reversible kernel on a system of `n` sites.
pub fn mixing_report(kernel: &WalkKernel, n: usize, eps_list: &[f64]) -> Result<MixingReport> {
    let spec = reversible_spectrum(kernel)?;
    let g = gap(&spec);
    if g.reducible {
        return Err(Error::NonErgodic);
    }
    let pi = kernel.stationary.as_ref().expect("reversible kernels carry π");
    let mu_star = pi.iter().copied().fold(f64::INFINITY, f64::min);
    let mut t_mix = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidInput(format!("ε must lie in (0,1), got {eps}")));
        }
        t_mix.push(MixingTime {
            eps,
            t_mix: exact_mixing_time(kernel, eps)?,
        });
    }
    let nf = n as f64;
    Ok(MixingReport {
        n,
        gamma: g.gamma,
        absolute_gap: g.absolute_gap,
        lambda_star: g.lambda_star,
        psd_min_eigenvalue: spec.min().unwrap_or(1.0),
        t_relax: 1.0 / g.absolute_gap,
        t_relax_bound: nf / g.gamma,
        t_relax_bound_standard: 1.0 / g.gamma,
        mu_star,
        t_mix_bound: nf / g.gamma * (1.0 / mu_star).ln(),
        t_mix,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub seed: u64,
    pub steps: u64,
    pub n: usize,
    /// Every visited state X_0..X_T, when recording was requested.
    pub states: Option<Vec<SpinConfig>>,
    pub final_state: SpinConfig,
    /// Visit counts over X_0..X_T keyed by configuration bits.
    pub empirical_counts: BTreeMap<u64, u64>,
    /// Average of |X_t|/n over X_0..X_T.
    pub mean_occupancy: f64,
}

impl Trajectory {
    /// Empirical distribution as (configuration, frequency) pairs.
    pub fn empirical(&self) -> Vec<(SpinConfig, f64)> {
        let total = (self.steps + 1) as f64;
        self.empirical_counts
            .iter()
            .map(|(&c, &k)| (SpinConfig(c), k as f64 / total))
            .collect()
    }

    /// Total variation between the visit frequencies and an exact system.
    pub fn tv_to(&self, system: &SpinSystem) -> f64 {
        let total = (self.steps + 1) as f64;
        let mut tv = 0.0;
        for (c, &p) in system.support().iter().zip(system.probs()) {
            let emp = self.empirical_counts.get(&c.0).copied().unwrap_or(0) as f64 / total;
            tv += (emp - p).abs();
        }
        for (&c, &k) in &self.empirical_counts {
            if system.index_of(SpinConfig(c)).is_none() {
                tv += k as f64 / total;
            }
        }
        tv / 2.0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,state\n");
        if let Some(states) = &self.states {
            for (t, s) in states.iter().enumerate() {
                out.push_str(&format!("{t},{}\n", s.to_bitstring(self.n)));
            }
        }
        out
    }
}

/// Hard-core Glauber dynamics simulated directly on the graph from the
/// empty set: pick a uniform vertex, propose it occupied with probability
/// λ/(1+λ) and unoccupied otherwise, and keep the proposal only if the
/// result is independent.
pub fn simulate_glauber(
    graph: &Graph,
    activity: f64,
    steps: u64,
    seed: u64,
    record_states: bool,
) -> Result<Trajectory> {
    if !(activity > 0.0) || !activity.is_finite() {
        return Err(Error::InvalidInput("activity must be positive and finite".into()));
    }
    let n = graph.n();
    let p_occupy = activity / (1.0 + activity);
    let mut rng = rng::seeded(seed);
    let mut x = 0u64;
    let mut counts = BTreeMap::new();
    let mut states = record_states.then(|| Vec::with_capacity(steps as usize + 1));
    let mut occupancy = 0.0;
    let visit = |x: u64, counts: &mut BTreeMap<u64, u64>, states: &mut Option<Vec<SpinConfig>>| {
        *counts.entry(x).or_insert(0) += 1;
        if let Some(s) = states.as_mut() {
            s.push(SpinConfig(x));
        }
        x.count_ones() as f64
    };
    occupancy += visit(x, &mut counts, &mut states);
    for _ in 0..steps {
        if n > 0 {
            let v = rng.random_range(0..n);
            if rng.random::<f64>() < p_occupy {
                if graph.neighbors(v) & x == 0 {
                    x |= 1 << v;
                }
            } else {
                x &= !(1 << v);
            }
        }
        occupancy += visit(x, &mut counts, &mut states);
    }
    Ok(Trajectory {
        seed,
        steps,
        n,
        states,
        final_state: SpinConfig(x),
        empirical_counts: counts,
        mean_occupancy: if n == 0 {
            0.0
        } else {
            occupancy / (steps + 1) as f64 / n as f64
        },
    })
}

/// Vertex set of the component of `v` in the subgraph induced by `set`,
/// empty when `v ∉ set`.
pub fn component_of(graph: &Graph, set: u64, v: usize) -> u64 {
    if set >> v & 1 == 0 {
        return 0;
    }
    let mut comp = 1u64 << v;
    let mut frontier = comp;
    while frontier != 0 {
        let mut next = 0u64;
        let mut rest = frontier;
        while rest != 0 {
            let u = rest.trailing_zeros() as usize;
            next |= graph.neighbors(u);
            rest &= rest - 1;
        }
        next &= set & !comp;
        comp |= next;
        frontier = next;
    }
    comp
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShatterRow {
    pub k: usize,
    pub bound: f64,
    /// Pr[|T_v| = k] for each vertex v.
    pub per_vertex: Vec<f64>,
    pub max_prob: f64,
    /// Upper end of the 95% Wilson interval for the worst vertex (sampling only).
    pub ci_upper: Option<f64>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShatteringReport {
    pub n: usize,
    pub block_size: usize,
    pub alpha: f64,
    pub max_degree: usize,
    pub exact: bool,
    pub samples: u128,
    pub rows: Vec<ShatterRow>,
    pub violations: usize,
}

/// Distribution of the size of the component T_v containing v in the
/// subgraph induced by a uniform random `block_size`-subset, against
/// α(6Δα)^{k−1} with α = block_size/n. Exact over all subsets when there
/// are at most [`SHATTER_EXACT_LIMIT`]; otherwise `samples` draws split over
/// `workers` seeded streams.
pub fn shattering_check(
    graph: &Graph,
    block_size: usize,
    samples: u64,
    seed: u64,
    workers: u64,
) -> Result<ShatteringReport> {
    let n = graph.n();
    if block_size == 0 || block_size > n {
        return Err(Error::InvalidInput(format!(
            "block size must lie in 1..={n}, got {block_size}"
        )));
    }
    let alpha = block_size as f64 / n as f64;
    let delta = graph.max_degree();
    let total = binomial(n, block_size);
    let exact = total <= SHATTER_EXACT_LIMIT;
    let tally = |counts: &mut Vec<Vec<u64>>, set: u64| {
        let mut seen = 0u64;
        for v in 0..n {
            if set >> v & 1 == 0 || seen >> v & 1 == 1 {
                continue;
            }
            let comp = component_of(graph, set, v);
            seen |= comp;
            let size = comp.count_ones() as usize;
            let mut rest = comp;
            while rest != 0 {
                counts[rest.trailing_zeros() as usize][size] += 1;
                rest &= rest - 1;
            }
        }
    };
    let (counts, drawn) = if exact {
        let mut counts = vec![vec![0u64; block_size + 1]; n];
        for set in subsets_of_size(n, block_size) {
            tally(&mut counts, set);
        }
        (counts, total)
    } else {
        let workers = workers.max(1);
        let per = samples / workers;
        let extra = samples % workers;
        let parts: Vec<Vec<Vec<u64>>> = (0..workers)
            .into_par_iter()
            .map(|w| {
                let mut rng = rng::stream(seed, w);
                let mut counts = vec![vec![0u64; block_size + 1]; n];
                let mut verts: Vec<usize> = (0..n).collect();
                for _ in 0..per + u64::from(w < extra) {
                    let (chosen, _) = verts.partial_shuffle(&mut rng, block_size);
                    let set = chosen.iter().fold(0u64, |s, &v| s | 1 << v);
                    tally(&mut counts, set);
                }
                counts
            })
            .collect();
        let mut counts = vec![vec![0u64; block_size + 1]; n];
        for part in parts {
            for (v, row) in part.into_iter().enumerate() {
                for (k, c) in row.into_iter().enumerate() {
                    counts[v][k] += c;
                }
            }
        }
        (counts, samples as u128)
    };
    let denom = drawn as f64;
    let mut rows = Vec::with_capacity(block_size);
    let mut violations = 0;
    for k in 1..=block_size {
        let bound = alpha * (6.0 * delta as f64 * alpha).powi(k as i32 - 1);
        let per_vertex: Vec<f64> = (0..n).map(|v| counts[v][k] as f64 / denom).collect();
        let max_prob = per_vertex.iter().copied().fold(0.0, f64::max);
        let (holds, ci_upper) = if exact {
            (max_prob <= bound * (1.0 + 1e-12), None)
        } else {
            let (lo, hi) = wilson_interval(max_prob, denom);
            (lo <= bound, Some(hi))
        };
        if !holds {
            violations += 1;
        }
        rows.push(ShatterRow {
            k,
            bound,
            per_vertex,
            max_prob,
            ci_upper,
            holds,
        });
    }
    Ok(ShatteringReport {
        n,
        block_size,
        alpha,
        max_degree: delta,
        exact,
        samples: drawn,
        rows,
        violations,
    })
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson_interval(p: f64, trials: f64) -> (f64, f64) {
    let z = 1.959_963_984_540_054;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * trials)) / (1.0 + z2 / trials);
    let half = z / (1.0 + z2 / trials) * (p * (1.0 - p) / trials + z2 / (4.0 * trials * trials)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Ent_π(f) = π[f log f] − π[f] log π[f], with 0 log 0 = 0.
pub fn entropy(pi: &[f64], f: &[f64]) -> Result<f64> {
    if pi.len() != f.len() {
        return Err(Error::DimensionMismatch {
            expected: pi.len(),
            got: f.len(),
        });
    }
    if f.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidInput("entropy needs a finite nonnegative function".into()));
    }
    let mean: f64 = pi.iter().zip(f).map(|(p, x)| p * x).sum();
    let plogp: f64 = pi.iter().zip(f).map(|(p, &x)| p * xlogx(x)).sum();
    Ok((plogp - xlogx(mean)).max(0.0))
}

/// μ(Ent_v f): entropy of f in the spin at v given all other spins,
/// averaged over the other spins.
pub fn site_entropy(system: &SpinSystem, f: &[f64], v: usize) -> Result<f64> {
    if f.len() != system.len() {
        return Err(Error::DimensionMismatch {
            expected: system.len(),
            got: f.len(),
        });
    }
    let mut groups: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, c) in system.support().iter().enumerate() {
        groups.entry(c.0 & !(1 << v)).or_default().push(i);
    }
    let mut acc = 0.0;
    for members in groups.values() {
        let mass: f64 = members.iter().map(|&i| system.probs()[i]).sum();
        let pi: Vec<f64> = members.iter().map(|&i| system.probs()[i] / mass).collect();
        let g: Vec<f64> = members.iter().map(|&i| f[i]).collect();
        acc += mass * entropy(&pi, &g)?;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorizationRatio {
    pub entropy: f64,
    pub site_sum: f64,
    /// Ent(f) / Σ_v μ(Ent_v f); 1 by convention when both vanish.
    pub ratio: f64,
    pub undefined: bool,
}

/// Tolerance below which entropies are treated as zero.
const ENTROPY_ZERO: f64 = 1e-14;

pub fn entropy_tensorization_ratio(system: &SpinSystem, f: &[f64]) -> Result<TensorizationRatio> {
    let ent = entropy(system.probs(), f)?;
    let mut site_sum = 0.0;
    for v in 0..system.n() {
        site_sum += site_entropy(system, f, v)?;
    }
    if site_sum <= ENTROPY_ZERO {
        return Ok(TensorizationRatio {
            entropy: ent,
            site_sum,
            ratio: if ent <= ENTROPY_ZERO { 1.0 } else { f64::INFINITY },
            undefined: true,
        });
    }
    Ok(TensorizationRatio {
        entropy: ent,
        site_sum,
        ratio: ent / site_sum,
        undefined: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyProbe {
    pub name: String,
    pub values: Vec<f64>,
}

/// Probe functions for the tensorization constant: constants, indicators of
/// single spins offset by 0.1, and exponentials of random linear functions
/// of the spins.
pub fn entropy_probes(system: &SpinSystem, seed: u64, random_count: usize) -> Vec<EntropyProbe> {
    let mut probes = Vec::new();
    for c in [0.5, 1.0, 3.0] {
        probes.push(EntropyProbe {
            name: format!("constant {c}"),
            values: vec![c; system.len()],
        });
    }
    for v in 0..system.n() {
        for s in 0..2u8 {
            probes.push(EntropyProbe {
                name: format!("indicator {v}={s}"),
                values: system
                    .support()
                    .iter()
                    .map(|c| if c.spin(v) == s { 1.1 } else { 0.1 })
                    .collect(),
            });
        }
    }
    let mut rng = rng::seeded(seed);
    for i in 0..random_count {
        let coeffs = rng::normal_vector(&mut rng, system.n());
        probes.push(EntropyProbe {
            name: format!("exp-linear {i}"),
            values: system
                .support()
                .iter()
                .map(|c| {
                    let s: f64 = (0..system.n()).map(|v| coeffs[v] * c.spin(v) as f64).sum();
                    s.exp()
                })
                .collect(),
        });
    }
    probes
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorizationSummary {
    /// Largest ratio over probes with a defined ratio; a lower bound on the
    /// tensorization constant.
    pub max_ratio: f64,
    pub witness: String,
    pub undefined_probes: usize,
    /// C·n·log(log(1/μ*)) with C = `max_ratio`; NaN when μ* ≥ 1/e.
    pub t_mix_bound: f64,
}

pub fn tensorization_summary(system: &SpinSystem, seed: u64, random_count: usize) -> Result<TensorizationSummary> {
    let mut max_ratio = 1.0;
    let mut witness = String::from("none");
    let mut undefined = 0;
    for probe in entropy_probes(system, seed, random_count) {
        let r = entropy_tensorization_ratio(system, &probe.values)?;
        if r.undefined {
            undefined += 1;
        } else if r.ratio > max_ratio || witness == "none" {
            max_ratio = r.ratio.max(max_ratio);
            witness = probe.name;
        }
    }
    let mu_star = system.min_prob();
    Ok(TensorizationSummary {
        max_ratio,
        witness,
        undefined_probes: undefined,
        t_mix_bound: max_ratio * system.n() as f64 * (1.0 / mu_star).ln().ln(),
    })
}
