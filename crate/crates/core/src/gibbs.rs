//! Binary-spin Gibbs distributions built by full enumeration: graphs,
//! configurations, pinnings, conditioning and marginals.
//!
//! Configurations and pinnings are bitmasks over vertex indices (bit `v`
//! holds the spin of vertex `v`), so systems are limited to 64 vertices;
//! the enumeration caps stop far earlier in practice.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Enumeration limits. Every exhaustive sweep checks against one of these
/// and refuses with [`Error::CapExceeded`] instead of running away.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub max_configs: u128,
    pub max_pinnings: u128,
    pub max_bases: u128,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            max_configs: 1 << 20,
            max_pinnings: 1_000_000,
            max_bases: 100_000,
        }
    }
}

impl Caps {
    pub const ENV_MAX_STATES: &'static str = "SPECIND_MAX_STATES";
    pub const ENV_MAX_PINNINGS: &'static str = "SPECIND_MAX_PINNINGS";
    pub const ENV_MAX_BASES: &'static str = "SPECIND_MAX_BASES";

    /// Defaults overridden by the `SPECIND_MAX_*` environment variables.
    pub fn from_env() -> Self {
        let read = |key: &str, default: u128| {
            std::env::var(key)
                .ok()
                .and_then(|v| v.trim().parse().ok())
                .unwrap_or(default)
        };
        let d = Self::default();
        Self {
            max_configs: read(Self::ENV_MAX_STATES, d.max_configs),
            max_pinnings: read(Self::ENV_MAX_PINNINGS, d.max_pinnings),
            max_bases: read(Self::ENV_MAX_BASES, d.max_bases),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl Graph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n > 64 {
            return Err(Error::InvalidInput(format!(
                "graphs are limited to 64 vertices, got {n}"
            )));
        }
        let mut adjacency = vec![0u64; n];
        let mut normalized = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({u}, {v}) out of range for n = {n}"
                )));
            }
            if u == v {
                return Err(Error::InvalidInput(format!("self-loop at vertex {u}")));
            }
            if adjacency[u] >> v & 1 == 1 {
                return Err(Error::InvalidInput(format!("duplicate edge ({u}, {v})")));
            }
            adjacency[u] |= 1 << v;
            adjacency[v] |= 1 << u;
            normalized.push((u.min(v), u.max(v)));
        }
        Ok(Self {
            n,
            edges: normalized,
            adjacency,
        })
    }

    pub fn empty(n: usize) -> Self {
        Self::new(n, &[]).expect("edgeless graph is valid")
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges).expect("path is valid")
    }

    /// Cycle on `n ≥ 3` vertices; smaller `n` falls back to a path.
    pub fn cycle(n: usize) -> Self {
        if n < 3 {
            return Self::path(n);
        }
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        edges.push((0, n - 1));
        Self::new(n, &edges).expect("cycle is valid")
    }

    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                edges.push((u, v));
            }
        }
        Self::new(n, &edges).expect("clique is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbour bitmask of `v`.
    pub fn neighbors(&self, v: usize) -> u64 {
        self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].count_ones() as usize
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn is_independent(&self, set: u64) -> bool {
        let mut rest = set;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            if self.adjacency[v] & set != 0 {
                return false;
            }
            rest &= rest - 1;
        }
        true
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: GraphJson = serde_json::from_str(text).map_err(|e| {
            Error::Parse(format!("graph JSON at line {} column {}: {e}", e.line(), e.column()))
        })?;
        let edges: Vec<_> = raw.edges.iter().map(|e| (e[0], e[1])).collect();
        Self::new(raw.n, &edges)
    }

    pub fn to_json(&self) -> String {
        let raw = GraphJson {
            n: self.n,
            edges: self.edges.iter().map(|&(u, v)| [u, v]).collect(),
        };
        serde_json::to_string(&raw).expect("graph serializes")
    }
}

/// A full assignment in {0,1}^V; bit `v` is the spin of vertex `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SpinConfig(pub u64);

impl SpinConfig {
    pub fn from_spins(spins: &[u8]) -> Result<Self> {
        if spins.len() > 64 {
            return Err(Error::InvalidInput("more than 64 spins".into()));
        }
        let mut bits = 0u64;
        for (v, &s) in spins.iter().enumerate() {
            match s {
                0 => {}
                1 => bits |= 1 << v,
                _ => return Err(Error::InvalidInput(format!("spin {s} is not binary"))),
            }
        }
        Ok(Self(bits))
    }

    /// Parses a bitstring whose i-th character is the spin of vertex i.
    pub fn from_bitstring(text: &str) -> Result<Self> {
        let spins: Vec<u8> = text
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Parse(format!("bad spin character {other:?}"))),
            })
            .collect::<Result<_>>()?;
        Self::from_spins(&spins)
    }

    pub fn to_bitstring(self, n: usize) -> String {
        (0..n).map(|v| if self.spin(v) == 1 { '1' } else { '0' }).collect()
    }

    pub fn spin(self, v: usize) -> u8 {
        (self.0 >> v & 1) as u8
    }

    pub fn occupied(self) -> u32 {
        self.0.count_ones()
    }

    pub fn flip(self, v: usize) -> Self {
        Self(self.0 ^ (1 << v))
    }
}

/// Sort key realizing lexicographic order by vertex index with 0 < 1.
pub(crate) fn lex_key(config: u64, n: usize) -> u64 {
    if n == 0 {
        0
    } else {
        config.reverse_bits() >> (64 - n)
    }
}

/// A partial assignment τ on a vertex set S.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Pinning {
    mask: u64,
    values: u64,
}

impl Pinning {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: &[(usize, u8)]) -> Result<Self> {
        let mut p = Self::empty();
        for &(v, s) in pairs {
            if v >= 64 {
                return Err(Error::InvalidInput(format!("vertex {v} out of range")));
            }
            if s > 1 {
                return Err(Error::InvalidInput(format!("spin {s} is not binary")));
            }
            if p.mask >> v & 1 == 1 {
                return Err(Error::InvalidInput(format!("vertex {v} pinned twice")));
            }
            p = p.with(v, s);
        }
        Ok(p)
    }

    pub(crate) fn from_masks(mask: u64, values: u64) -> Self {
        Self {
            mask,
            values: values & mask,
        }
    }

    pub fn with(self, v: usize, s: u8) -> Self {
        let bit = 1u64 << v;
        Self {
            mask: self.mask | bit,
            values: if s == 1 {
                self.values | bit
            } else {
                self.values & !bit
            },
        }
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn values(&self) -> u64 {
        self.values
    }

    pub fn level(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_pinned(&self, v: usize) -> bool {
        self.mask >> v & 1 == 1
    }

    pub fn spin(&self, v: usize) -> Option<u8> {
        self.is_pinned(v).then(|| (self.values >> v & 1) as u8)
    }

    pub fn pairs(&self) -> Vec<(usize, u8)> {
        let mut out = Vec::with_capacity(self.level());
        let mut rest = self.mask;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            out.push((v, (self.values >> v & 1) as u8));
            rest &= rest - 1;
        }
        out
    }

    pub fn is_extended_by(&self, config: SpinConfig) -> bool {
        config.0 & self.mask == self.values
    }

    /// Union of two pinnings, `None` when they disagree on a shared vertex.
    pub fn union(&self, other: &Pinning) -> Option<Pinning> {
        let shared = self.mask & other.mask;
        if self.values & shared != other.values & shared {
            return None;
        }
        Some(Self {
            mask: self.mask | other.mask,
            values: self.values | other.values,
        })
    }
}

impl Ord for Pinning {
    fn cmp(&self, other: &Self) -> Ordering {
        self.pairs().cmp(&other.pairs())
    }
}

impl PartialOrd for Pinning {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Pinning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.pairs().iter().map(|(v, s)| format!("{v}={s}")).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl Serialize for Pinning {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<String, u8> = self
            .pairs()
            .into_iter()
            .map(|(v, s)| (v.to_string(), s))
            .collect();
        map.serialize(serializer)
    }
}

/// A distribution on {0,1}^V given by an explicit table over its support.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    n: usize,
    graph: Option<Graph>,
    support: Vec<SpinConfig>,
    probs: Vec<f64>,
    exact: Option<Vec<BigRational>>,
    partition_value: Option<BigRational>,
}

impl SpinSystem {
    /// Hard-core model: uniform over independent sets weighted by λ^|σ|.
    pub fn build_hardcore(graph: &Graph, activity: &BigRational, caps: &Caps) -> Result<Self> {
        if !activity.is_positive() {
            return Err(Error::InvalidInput("activity must be positive".into()));
        }
        let n = graph.n();
        let required = 1u128 << n;
        if required > caps.max_configs {
            return Err(Error::CapExceeded {
                what: "configurations",
                required,
                cap: caps.max_configs,
            });
        }
        let mut sets = Vec::new();
        independent_sets(graph, 0, 0, &mut sets);
        let mut powers: Vec<BigRational> = vec![BigRational::one()];
        for i in 1..=n {
            let next = &powers[i - 1] * activity;
            powers.push(next);
        }
        let records: Vec<(SpinConfig, BigRational)> = sets
            .into_iter()
            .map(|s| (SpinConfig(s), powers[s.count_ones() as usize].clone()))
            .collect();
        let mut sys = Self::from_exact_weights(n, records)?;
        sys.graph = Some(graph.clone());
        Ok(sys)
    }

    /// Arbitrary table of nonnegative exact weights; zero weights drop out.
    pub fn load_table(n: usize, records: Vec<(SpinConfig, BigRational)>) -> Result<Self> {
        Self::from_exact_weights(n, records)
    }

    /// Floating-point table; the system carries no exact probabilities.
    pub fn load_float_table(n: usize, records: Vec<(SpinConfig, f64)>) -> Result<Self> {
        check_records(n, records.iter().map(|r| r.0))?;
        if records.iter().any(|r| !(r.1 >= 0.0) || !r.1.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        let mut kept: Vec<(SpinConfig, f64)> = records.into_iter().filter(|r| r.1 > 0.0).collect();
        let total: f64 = kept.iter().map(|r| r.1).sum();
        if kept.is_empty() || total <= 0.0 {
            return Err(Error::InvalidInput("all weights are zero".into()));
        }
        kept.sort_by_key(|r| lex_key(r.0 .0, n));
        Ok(Self {
            n,
            graph: None,
            support: kept.iter().map(|r| r.0).collect(),
            probs: kept.iter().map(|r| r.1 / total).collect(),
            exact: None,
            partition_value: None,
        })
    }

    fn from_exact_weights(n: usize, records: Vec<(SpinConfig, BigRational)>) -> Result<Self> {
        check_records(n, records.iter().map(|r| r.0))?;
        if records.iter().any(|r| r.1.is_negative()) {
            return Err(Error::InvalidInput("weights must be nonnegative".into()));
        }
        let mut kept: Vec<(SpinConfig, BigRational)> =
            records.into_iter().filter(|r| r.1.is_positive()).collect();
        if kept.is_empty() {
            return Err(Error::InvalidInput("all weights are zero".into()));
        }
        kept.sort_by_key(|r| lex_key(r.0 .0, n));
        let z: BigRational = kept.iter().map(|r| r.1.clone()).sum();
        let exact: Vec<BigRational> = kept.iter().map(|r| &r.1 / &z).collect();
        Ok(Self {
            n,
            graph: None,
            support: kept.iter().map(|r| r.0).collect(),
            probs: exact.iter().map(rational_to_f64).collect(),
            exact: Some(exact),
            partition_value: Some(z),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn graph(&self) -> Option<&Graph> {
        self.graph.as_ref()
    }

    pub fn support(&self) -> &[SpinConfig] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn exact_probs(&self) -> Option<&[BigRational]> {
        self.exact.as_deref()
    }

    pub fn partition_value(&self) -> Option<&BigRational> {
        self.partition_value.as_ref()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn prob_of(&self, config: SpinConfig) -> f64 {
        self.index_of(config).map_or(0.0, |i| self.probs[i])
    }

    pub fn index_of(&self, config: SpinConfig) -> Option<usize> {
        let key = lex_key(config.0, self.n);
        self.support
            .binary_search_by_key(&key, |c| lex_key(c.0, self.n))
            .ok()
    }

    /// Smallest stationary mass μ*.
    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_valid(&self, pinning: &Pinning) -> bool {
        self.support.iter().any(|&c| pinning.is_extended_by(c))
    }

    fn check_pinning(&self, pinning: &Pinning) -> Result<()> {
        if self.n < 64 && pinning.mask() >> self.n != 0 {
            return Err(Error::InvalidInput("pinning touches a vertex outside the system".into()));
        }
        if !self.is_valid(pinning) {
            return Err(Error::InvalidPinning);
        }
        Ok(())
    }

    /// μ(τ): total mass of configurations extending the pinning.
    pub fn mass(&self, pinning: &Pinning) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .filter(|(c, _)| pinning.is_extended_by(**c))
            .map(|(_, p)| p)
            .sum()
    }

    pub fn mass_exact(&self, pinning: &Pinning) -> Option<BigRational> {
        let exact = self.exact.as_ref()?;
        Some(
            self.support
                .iter()
                .zip(exact)
                .filter(|(c, _)| pinning.is_extended_by(**c))
                .map(|(_, p)| p.clone())
                .sum(),
        )
    }

    /// The conditional distribution μ_τ on the same vertex set.
    pub fn condition(&self, pinning: &Pinning) -> Result<SpinSystem> {
        self.check_pinning(pinning)?;
        let keep: Vec<usize> = (0..self.support.len())
            .filter(|&i| pinning.is_extended_by(self.support[i]))
            .collect();
        let support = keep.iter().map(|&i| self.support[i]).collect();
        let (probs, exact, partition_value) = match &self.exact {
            Some(exact) => {
                let m: BigRational = keep.iter().map(|&i| exact[i].clone()).sum();
                let ex: Vec<BigRational> = keep.iter().map(|&i| &exact[i] / &m).collect();
                let z = self.partition_value.as_ref().map(|z| z * &m);
                (ex.iter().map(rational_to_f64).collect(), Some(ex), z)
            }
            None => {
                let m: f64 = keep.iter().map(|&i| self.probs[i]).sum();
                (keep.iter().map(|&i| self.probs[i] / m).collect(), None, None)
            }
        };
        Ok(SpinSystem {
            n: self.n,
            graph: self.graph.clone(),
            support,
            probs,
            exact,
            partition_value,
        })
    }

    pub fn marginal(&self, vertex: usize, spin: u8) -> Result<f64> {
        self.check_vertex(vertex, spin)?;
        Ok(self.mass(&Pinning::empty().with(vertex, spin)))
    }

    pub fn marginal_exact(&self, vertex: usize, spin: u8) -> Result<Option<BigRational>> {
        self.check_vertex(vertex, spin)?;
        Ok(self.mass_exact(&Pinning::empty().with(vertex, spin)))
    }

    fn check_vertex(&self, vertex: usize, spin: u8) -> Result<()> {
        if vertex >= self.n || spin > 1 {
            return Err(Error::InvalidInput(format!(
                "vertex {vertex} / spin {spin} out of range for n = {}",
                self.n
            )));
        }
        Ok(())
    }

    /// All valid pinnings of size `k`, sorted.
    pub fn enumerate_pinnings(&self, k: usize, caps: &Caps) -> Result<Vec<Pinning>> {
        if k > self.n {
            return Err(Error::InvalidInput(format!("level {k} exceeds n = {}", self.n)));
        }
        let mut out = Vec::new();
        for mask in subsets_of_size(self.n, k) {
            let mut seen: Vec<u64> = self.support.iter().map(|c| c.0 & mask).collect();
            seen.sort_unstable();
            seen.dedup();
            out.extend(seen.into_iter().map(|v| Pinning::from_masks(mask, v)));
            if out.len() as u128 > caps.max_pinnings {
                return Err(Error::CapExceeded {
                    what: "pinnings per level",
                    required: binomial(self.n, k) << k,
                    cap: caps.max_pinnings,
                });
            }
        }
        out.sort();
        Ok(out)
    }

    /// Splits the unpinned vertices into the free set T (both spins possible
    /// under μ_τ) and frozen vertices with their forced spin.
    pub fn free_frozen_split(&self, pinning: &Pinning) -> Result<(Vec<usize>, BTreeMap<usize, u8>)> {
        self.check_pinning(pinning)?;
        let mut seen_one = 0u64;
        let mut seen_zero = 0u64;
        for &c in &self.support {
            if pinning.is_extended_by(c) {
                seen_one |= c.0;
                seen_zero |= !c.0;
            }
        }
        let mut free = Vec::new();
        let mut frozen = BTreeMap::new();
        for v in 0..self.n {
            if pinning.is_pinned(v) {
                continue;
            }
            match (seen_zero >> v & 1, seen_one >> v & 1) {
                (1, 1) => free.push(v),
                (0, 1) => {
                    frozen.insert(v, 1);
                }
                _ => {
                    frozen.insert(v, 0);
                }
            }
        }
        Ok((free, frozen))
    }

    /// Infimum of the positive conditional single-site marginals over every
    /// valid pinning. Marginal boundedness holds for every b strictly below
    /// the returned value.
    pub fn marginal_bound(&self, caps: &Caps) -> Result<f64> {
        let mut best = f64::INFINITY;
        for k in 0..=self.n {
            let mut count: u128 = 0;
            for mask in subsets_of_size(self.n, k) {
                let mut groups: HashMap<u64, (f64, Vec<f64>)> = HashMap::new();
                for (c, &p) in self.support.iter().zip(&self.probs) {
                    let entry = groups
                        .entry(c.0 & mask)
                        .or_insert_with(|| (0.0, vec![0.0; self.n]));
                    entry.0 += p;
                    for v in 0..self.n {
                        if c.spin(v) == 1 {
                            entry.1[v] += p;
                        }
                    }
                }
                count += groups.len() as u128;
                if count > caps.max_pinnings {
                    return Err(Error::CapExceeded {
                        what: "pinnings per level",
                        required: binomial(self.n, k) << k,
                        cap: caps.max_pinnings,
                    });
                }
                for (total, ones) in groups.values() {
                    for &one in ones {
                        for m in [one / total, (total - one) / total] {
                            // exact zeros come from frozen spins; clamp float dust
                            if m > 1e-15 {
                                best = best.min(m);
                            }
                        }
                    }
                }
            }
        }
        Ok(best)
    }

    /// CSV rows `bitstring,weight`; exact systems write reduced fractions.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (i, c) in self.support.iter().enumerate() {
            let w = match &self.exact {
                Some(ex) => format_rational(&ex[i]),
                None => format!("{:e}", self.probs[i]),
            };
            out.push_str(&format!("{},{}\n", c.to_bitstring(self.n), w));
        }
        out
    }

    /// Reads `bitstring,weight` rows. Weights may be integers, decimals or
    /// fractions `a/b`, and are kept exact.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut n = None;
        let mut records = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (bits, weight) = line.split_once(',').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `bitstring,weight`", lineno + 1))
            })?;
            let bits = bits.trim();
            let config = SpinConfig::from_bitstring(bits)
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            match n {
                None => n = Some(bits.len()),
                Some(m) if m != bits.len() => {
                    return Err(Error::Parse(format!(
                        "line {}: bitstring length {} differs from {m}",
                        lineno + 1,
                        bits.len()
                    )))
                }
                _ => {}
            }
            if !seen.insert(config) {
                return Err(Error::InvalidInput(format!(
                    "line {}: duplicate configuration {bits}",
                    lineno + 1
                )));
            }
            let w = parse_rational(weight.trim())
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            records.push((config, w));
        }
        let n = n.ok_or_else(|| Error::Parse("empty table".into()))?;
        Self::load_table(n, records)
    }
}

fn check_records(n: usize, configs: impl Iterator<Item = SpinConfig>) -> Result<()> {
    if n > 64 {
        return Err(Error::InvalidInput("at most 64 vertices".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for c in configs {
        if n < 64 && c.0 >> n != 0 {
            return Err(Error::InvalidInput(format!(
                "configuration {:#b} has spins beyond n = {n}",
                c.0
            )));
        }
        if !seen.insert(c) {
            return Err(Error::InvalidInput(format!(
                "duplicate configuration {}",
                c.to_bitstring(n)
            )));
        }
    }
    Ok(())
}

fn independent_sets(graph: &Graph, v: usize, current: u64, out: &mut Vec<u64>) {
    if v == graph.n() {
        out.push(current);
        return;
    }
    independent_sets(graph, v + 1, current, out);
    if graph.neighbors(v) & current == 0 {
        independent_sets(graph, v + 1, current | 1 << v, out);
    }
}

/// Bitmasks of all `k`-subsets of `{0..n}` in increasing numeric order.
pub fn subsets_of_size(n: usize, k: usize) -> impl Iterator<Item = u64> {
    let limit: u128 = 1u128 << n;
    let mut next: Option<u64> = if k > n {
        None
    } else if k == 0 {
        Some(0)
    } else {
        Some(((1u128 << k) - 1) as u64)
    };
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 {
            None
        } else {
            // Gosper's hack
            let c = cur & cur.wrapping_neg();
            let r = cur as u128 + c as u128;
            let nxt = (((r as u64 ^ cur) >> 2) / c) | r as u64;
            if r >= limit {
                None
            } else {
                Some(nxt)
            }
        };
        Some(cur)
    })
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn format_rational(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses `a`, `a/b`, or a decimal such as `-0.125` or `2.5e-3` exactly.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let text = text.trim();
    let bad = || Error::Parse(format!("not a rational number: {text:?}"));
    if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| bad())?;
        let den: BigInt = den.trim().parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(num, den));
    }
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty()
        || !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit())
    {
        return Err(bad());
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut value = BigRational::from_integer(all.parse::<BigInt>().map_err(|_| bad())?);
    let scale = exponent - frac_part.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    if scale >= 0 {
        value *= num_traits::pow(ten, scale as usize);
    } else {
        value /= num_traits::pow(ten, (-scale) as usize);
    }
    Ok(if negative { -value } else { value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn edge() -> SpinSystem {
        SpinSystem::build_hardcore(&Graph::path(2), &q(1, 1), &Caps::default()).unwrap()
    }

    fn path3() -> SpinSystem {
        SpinSystem::build_hardcore(&Graph::path(3), &q(1, 1), &Caps::default()).unwrap()
    }

    /// Independent sets of a graph by checking every subset against its edge list.
    fn brute_independent_sets(n: usize, edges: &[(usize, usize)]) -> Vec<u64> {
        (0..1u64 << n)
            .filter(|s| edges.iter().all(|&(u, v)| !(s >> u & 1 == 1 && s >> v & 1 == 1)))
            .collect()
    }

    #[test]
    fn graph_validation() {
        assert!(Graph::new(2, &[(0, 0)]).is_err());
        assert!(Graph::new(2, &[(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(2, &[(0, 2)]).is_err());
        assert_eq!(Graph::cycle(5).max_degree(), 2);
        let g = Graph::from_json(r#"{"n": 3, "edges": [[0,1],[1,2]]}"#).unwrap();
        assert_eq!(g, Graph::path(3));
        assert_eq!(Graph::from_json(&g.to_json()).unwrap(), g);
        assert!(matches!(Graph::from_json("{\"n\": 3,"), Err(Error::Parse(_))));
    }

    #[test]
    fn hardcore_single_edge() {
        let sys = edge();
        let brute = brute_independent_sets(2, &[(0, 1)]);
        assert_eq!(sys.len(), brute.len());
        assert_eq!(sys.partition_value().unwrap(), &q(3, 1));
        for p in sys.exact_probs().unwrap() {
            assert_eq!(p, &q(1, 3));
        }
        let bits: Vec<String> = sys.support().iter().map(|c| c.to_bitstring(2)).collect();
        assert_eq!(bits, vec!["00", "01", "10"]);
    }

    #[test]
    fn hardcore_single_vertex_marginal() {
        let lambda = q(3, 2);
        let sys = SpinSystem::build_hardcore(&Graph::empty(1), &lambda, &Caps::default()).unwrap();
        let expected = &lambda / (BigRational::one() + &lambda);
        assert_eq!(sys.marginal_exact(0, 1).unwrap().unwrap(), expected);
    }

    #[test]
    fn hardcore_triangle_partition_function() {
        let sys = SpinSystem::build_hardcore(&Graph::complete(3), &q(2, 1), &Caps::default()).unwrap();
        // brute force: Σ over independent sets of 2^|I|
        let z: i64 = brute_independent_sets(3, &[(0, 1), (0, 2), (1, 2)])
            .iter()
            .map(|s| 2i64.pow(s.count_ones()))
            .sum();
        assert_eq!(z, 7);
        assert_eq!(sys.partition_value().unwrap(), &q(7, 1));
    }

    #[test]
    fn hardcore_cap_refusal() {
        let caps = Caps {
            max_configs: 1 << 4,
            ..Caps::default()
        };
        let err = SpinSystem::build_hardcore(&Graph::path(5), &q(1, 1), &caps).unwrap_err();
        assert_eq!(
            err,
            Error::CapExceeded {
                what: "configurations",
                required: 32,
                cap: 16
            }
        );
    }

    #[test]
    fn load_table_examples() {
        let sys = SpinSystem::load_table(
            1,
            vec![(SpinConfig(0), q(1, 1)), (SpinConfig(1), q(1, 1))],
        )
        .unwrap();
        assert_eq!(sys.probs(), &[0.5, 0.5]);

        let sys = SpinSystem::load_table(
            2,
            vec![
                (SpinConfig(0), q(2, 1)),
                (SpinConfig(1), q(0, 1)),
                (SpinConfig(2), q(2, 1)),
            ],
        )
        .unwrap();
        assert_eq!(sys.len(), 2);
        assert_eq!(sys.probs(), &[0.5, 0.5]);

        let hc = path3();
        let round = SpinSystem::from_csv(&hc.to_csv()).unwrap();
        assert_eq!(round.support(), hc.support());
        assert_eq!(round.exact_probs(), hc.exact_probs());
    }

    #[test]
    fn load_table_errors() {
        let dup = SpinSystem::load_table(1, vec![(SpinConfig(0), q(1, 1)), (SpinConfig(0), q(1, 1))]);
        assert!(dup.is_err());
        let zero = SpinSystem::load_table(1, vec![(SpinConfig(0), q(0, 1))]);
        assert!(zero.is_err());
        assert!(SpinSystem::from_csv("01,1\n01,2\n").is_err());
        assert!(SpinSystem::from_csv("01,1\n011,2\n").is_err());
        assert!(SpinSystem::from_csv("0x,1\n").is_err());
    }

    #[test]
    fn condition_examples() {
        let sys = edge();
        assert_eq!(sys.condition(&Pinning::empty()).unwrap(), sys);

        let c = sys.condition(&Pinning::from_pairs(&[(0, 1)]).unwrap()).unwrap();
        assert_eq!(c.support(), &[SpinConfig(0b01)]);
        assert_eq!(c.exact_probs().unwrap(), &[q(1, 1)]);

        let c = path3()
            .condition(&Pinning::from_pairs(&[(0, 0)]).unwrap())
            .unwrap();
        let bits: Vec<String> = c.support().iter().map(|x| x.to_bitstring(3)).collect();
        assert_eq!(bits, vec!["000", "001", "010"]);
        assert!(c.exact_probs().unwrap().iter().all(|p| p == &q(1, 3)));

        let bad = Pinning::from_pairs(&[(0, 1), (1, 1)]).unwrap();
        assert_eq!(sys.condition(&bad), Err(Error::InvalidPinning));
    }

    #[test]
    fn marginal_examples() {
        assert_eq!(edge().marginal_exact(0, 1).unwrap().unwrap(), q(1, 3));
        let iso = SpinSystem::build_hardcore(&Graph::empty(1), &q(1, 1), &Caps::default()).unwrap();
        assert_eq!(iso.marginal(0, 1).unwrap(), 0.5);
        assert_eq!(path3().marginal_exact(1, 1).unwrap().unwrap(), q(1, 5));
        assert!(edge().marginal(2, 1).is_err());
    }

    #[test]
    fn pinning_enumeration() {
        let sys = edge();
        let caps = Caps::default();
        assert_eq!(sys.enumerate_pinnings(0, &caps).unwrap(), vec![Pinning::empty()]);
        assert_eq!(sys.enumerate_pinnings(2, &caps).unwrap().len(), 3);
        let level1 = sys.enumerate_pinnings(1, &caps).unwrap();
        let shown: Vec<String> = level1.iter().map(|p| p.to_string()).collect();
        assert_eq!(shown, vec!["{0=0}", "{0=1}", "{1=0}", "{1=1}"]);
        let tight = Caps {
            max_pinnings: 2,
            ..caps
        };
        assert!(matches!(
            sys.enumerate_pinnings(1, &tight),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn free_frozen_examples() {
        let sys = edge();
        let (free, frozen) = sys
            .free_frozen_split(&Pinning::from_pairs(&[(0, 1)]).unwrap())
            .unwrap();
        assert!(free.is_empty());
        assert_eq!(frozen, BTreeMap::from([(1, 0)]));

        let (free, frozen) = sys.free_frozen_split(&Pinning::empty()).unwrap();
        assert_eq!(free, vec![0, 1]);
        assert!(frozen.is_empty());

        let (free, frozen) = path3()
            .free_frozen_split(&Pinning::from_pairs(&[(1, 1)]).unwrap())
            .unwrap();
        assert!(free.is_empty());
        assert_eq!(frozen, BTreeMap::from([(0, 0), (2, 0)]));
    }

    #[test]
    fn marginal_bound_examples() {
        let caps = Caps::default();
        let iso = SpinSystem::build_hardcore(&Graph::empty(1), &q(1, 1), &caps).unwrap();
        assert!((iso.marginal_bound(&caps).unwrap() - 0.5).abs() < 1e-15);
        assert!((edge().marginal_bound(&caps).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("1/2").unwrap(), q(1, 2));
        assert_eq!(parse_rational("0.25").unwrap(), q(1, 4));
        assert_eq!(parse_rational("-2.5e-1").unwrap(), q(-1, 4));
        assert_eq!(parse_rational("3").unwrap(), q(3, 1));
        assert_eq!(parse_rational("1e-12").unwrap(), q(1, 1_000_000_000_000));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational(".").is_err());
    }

    #[test]
    fn subsets_and_binomials() {
        assert_eq!(subsets_of_size(4, 2).count(), 6);
        assert_eq!(subsets_of_size(3, 0).collect::<Vec<_>>(), vec![0]);
        assert_eq!(subsets_of_size(3, 3).collect::<Vec<_>>(), vec![0b111]);
        assert_eq!(subsets_of_size(2, 3).count(), 0);
        assert_eq!(subsets_of_size(64, 1).count(), 64);
        assert_eq!(binomial(6, 3), 20);
        assert_eq!(binomial(3, 5), 0);
    }
}
