//! Matroids given by independence oracles: constructions, minors, bases,
//! axiom checks, the bases-exchange walk, link walks, trickle-down
//! certification and exact reliability.
//!
//! Ground sets are `{0, .., n-1}` with `n ≤ 64`; sets are bitmasks.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{format_rational, parse_rational, rational_to_f64, Caps};
use crate::levels::{ComplexKind, LocalWalk, WeightedComplex};
use crate::numerics::{gap, reversible_spectrum, DenseMatrix, WalkKernel};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
enum Field {
    Rational(Vec<Vec<BigRational>>),
    Prime { p: u64, columns: Vec<Vec<u64>> },
}

#[derive(Debug, Clone, PartialEq)]
enum Oracle {
    Uniform { r: usize },
    Graphic { vertices: usize, edges: Vec<(usize, usize)> },
    Linear(Field),
    Transversal { right: usize, adjacency: Vec<u64> },
    Explicit { bases: Vec<u64> },
    Dual(Box<Matroid>),
    Restrict(Box<Matroid>, u64),
    Contract(Box<Matroid>, u64),
    Truncate(Box<Matroid>, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matroid {
    n: usize,
    rank: usize,
    oracle: Oracle,
}

fn mask_of(items: &[usize], n: usize) -> Result<u64> {
    let mut m = 0u64;
    for &e in items {
        if e >= n {
            return Err(Error::InvalidMatroid(format!("element {e} outside ground set of size {n}")));
        }
        if m >> e & 1 == 1 {
            return Err(Error::InvalidMatroid(format!("element {e} listed twice")));
        }
        m |= 1 << e;
    }
    Ok(m)
}

pub fn set_elements(set: u64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut rest = set;
    while rest != 0 {
        out.push(rest.trailing_zeros() as usize);
        rest &= rest - 1;
    }
    out
}

pub fn set_label(set: u64) -> String {
    let els: Vec<String> = set_elements(set).iter().map(|e| e.to_string()).collect();
    format!("{{{}}}", els.join(","))
}

fn full(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

fn check_ground(n: usize) -> Result<()> {
    if n > 64 {
        return Err(Error::InvalidMatroid(format!("ground sets are limited to 64 elements, got {n}")));
    }
    Ok(())
}

fn rational_rank(columns: &[&Vec<BigRational>]) -> usize {
    let Some(first) = columns.first() else {
        return 0;
    };
    let rows = first.len();
    let mut m: Vec<Vec<BigRational>> = (0..rows)
        .map(|r| columns.iter().map(|c| c[r].clone()).collect())
        .collect();
    let cols = columns.len();
    let mut rank = 0;
    for c in 0..cols {
        let Some(pivot) = (rank..rows).find(|&r| !m[r][c].is_zero()) else {
            continue;
        };
        m.swap(rank, pivot);
        let inv = BigRational::one() / &m[rank][c];
        for r in 0..rows {
            if r != rank && !m[r][c].is_zero() {
                let factor = &m[r][c] * &inv;
                for cc in c..cols {
                    let sub = &factor * &m[rank][cc];
                    m[r][cc] -= sub;
                }
            }
        }
        rank += 1;
    }
    rank
}

fn mod_pow(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % p;
        }
        base = base * base % p;
        exp >>= 1;
    }
    acc
}

fn prime_rank(columns: &[&Vec<u64>], p: u64) -> usize {
    let Some(first) = columns.first() else {
        return 0;
    };
    let rows = first.len();
    let cols = columns.len();
    let mut m: Vec<Vec<u64>> = (0..rows)
        .map(|r| columns.iter().map(|c| c[r]).collect())
        .collect();
    let mut rank = 0;
    for c in 0..cols {
        let Some(pivot) = (rank..rows).find(|&r| m[r][c] != 0) else {
            continue;
        };
        m.swap(rank, pivot);
        let inv = mod_pow(m[rank][c], p - 2, p);
        for r in 0..rows {
            if r != rank && m[r][c] != 0 {
                let factor = m[r][c] * inv % p;
                for cc in c..cols {
                    m[r][cc] = (m[r][cc] + p - factor * m[rank][cc] % p) % p;
                }
            }
        }
        rank += 1;
    }
    rank
}

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Augmenting-path search for a matching covering `left` vertex `u`.
fn augment(u: usize, adjacency: &[u64], seen: &mut u64, owner: &mut [Option<usize>]) -> bool {
    let mut options = adjacency[u] & !*seen;
    while options != 0 {
        let v = options.trailing_zeros() as usize;
        options &= options - 1;
        *seen |= 1 << v;
        let free = match owner[v] {
            None => true,
            Some(w) => augment(w, adjacency, seen, owner),
        };
        if free {
            owner[v] = Some(u);
            return true;
        }
    }
    false
}

impl Matroid {
    fn with_oracle(n: usize, oracle: Oracle) -> Self {
        let mut m = Self { n, rank: 0, oracle };
        m.rank = m.rank_of(full(n));
        m
    }

    pub fn uniform(n: usize, r: usize) -> Result<Self> {
        check_ground(n)?;
        if r > n {
            return Err(Error::InvalidMatroid(format!("uniform rank {r} exceeds n = {n}")));
        }
        Ok(Self::with_oracle(n, Oracle::Uniform { r }))
    }

    /// Cycle matroid of a multigraph; ground elements are the edges in order.
    pub fn graphic(vertices: usize, edges: &[(usize, usize)]) -> Result<Self> {
        check_ground(edges.len())?;
        if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u >= vertices || v >= vertices) {
            return Err(Error::InvalidMatroid(format!(
                "edge ({u}, {v}) out of range for {vertices} vertices"
            )));
        }
        Ok(Self::with_oracle(
            edges.len(),
            Oracle::Graphic {
                vertices,
                edges: edges.to_vec(),
            },
        ))
    }

    /// Column matroid of rational vectors, one per ground element.
    pub fn linear_rational(vectors: Vec<Vec<BigRational>>) -> Result<Self> {
        check_ground(vectors.len())?;
        if let Some(d) = vectors.first().map(Vec::len) {
            if vectors.iter().any(|v| v.len() != d) {
                return Err(Error::InvalidMatroid("vectors have different lengths".into()));
            }
        }
        Ok(Self::with_oracle(vectors.len(), Oracle::Linear(Field::Rational(vectors))))
    }

    /// Column matroid over GF(p) for a prime p ≤ 2^31.
    pub fn linear_prime(p: u64, vectors: Vec<Vec<u64>>) -> Result<Self> {
        check_ground(vectors.len())?;
        if p > 1 << 31 || !is_prime(p) {
            return Err(Error::InvalidMatroid(format!("{p} is not a prime ≤ 2^31")));
        }
        if let Some(d) = vectors.first().map(Vec::len) {
            if vectors.iter().any(|v| v.len() != d) {
                return Err(Error::InvalidMatroid("vectors have different lengths".into()));
            }
        }
        let columns: Vec<Vec<u64>> = vectors
            .into_iter()
            .map(|v| v.into_iter().map(|x| x % p).collect())
            .collect();
        Ok(Self::with_oracle(
            columns.len(),
            Oracle::Linear(Field::Prime { p, columns }),
        ))
    }

    /// Transversal matroid on the `left` side of a bipartite graph: a set is
    /// independent when some matching covers it.
    pub fn transversal(left: usize, right: usize, edges: &[(usize, usize)]) -> Result<Self> {
        check_ground(left)?;
        if right > 64 {
            return Err(Error::InvalidMatroid("at most 64 right vertices".into()));
        }
        let mut adjacency = vec![0u64; left];
        for &(l, r) in edges {
            if l >= left || r >= right {
                return Err(Error::InvalidMatroid(format!("edge ({l}, {r}) out of range")));
            }
            adjacency[l] |= 1 << r;
        }
        Ok(Self::with_oracle(left, Oracle::Transversal { right, adjacency }))
    }

    /// Matroid given by its bases. The list must be nonempty, of equal-size
    /// sets, and satisfy basis exchange.
    pub fn explicit(n: usize, bases: &[Vec<usize>]) -> Result<Self> {
        let m = Self::explicit_unchecked(n, bases)?;
        let Oracle::Explicit { bases: masks } = &m.oracle else {
            unreachable!()
        };
        if let Some(w) = exchange_witness(masks) {
            return Err(Error::InvalidMatroid(w));
        }
        Ok(m)
    }

    /// Like [`Matroid::explicit`] but without validation, so that
    /// [`axioms_check`] can report what is wrong with the family.
    pub fn explicit_unchecked(n: usize, bases: &[Vec<usize>]) -> Result<Self> {
        check_ground(n)?;
        if bases.is_empty() {
            return Err(Error::InvalidMatroid("no bases given".into()));
        }
        let mut masks = bases.iter().map(|b| mask_of(b, n)).collect::<Result<Vec<_>>>()?;
        masks.sort_unstable();
        masks.dedup();
        Ok(Self::with_oracle(n, Oracle::Explicit { bases: masks }))
    }

    /// M* with bases {E ∖ B}.
    pub fn dual(&self) -> Self {
        Self::with_oracle(self.n, Oracle::Dual(Box::new(self.clone())))
    }

    /// M|S: independent sets of M inside S. Elements outside S become loops.
    pub fn restrict(&self, set: u64) -> Result<Self> {
        if set & !full(self.n) != 0 {
            return Err(Error::InvalidMatroid("restriction set outside the ground set".into()));
        }
        Ok(Self::with_oracle(self.n, Oracle::Restrict(Box::new(self.clone()), set)))
    }

    /// M/S for an independent S: sets T disjoint from S with T ∪ S
    /// independent. Elements of S become loops.
    pub fn contract(&self, set: u64) -> Result<Self> {
        if set & !full(self.n) != 0 || !self.is_independent(set) {
            return Err(Error::InvalidMatroid(format!(
                "cannot contract dependent set {}",
                set_label(set)
            )));
        }
        Ok(Self::with_oracle(self.n, Oracle::Contract(Box::new(self.clone()), set)))
    }

    /// Independent sets of size at most k.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.rank {
            return Err(Error::InvalidMatroid(format!(
                "truncation level {k} outside 1..={}",
                self.rank
            )));
        }
        Ok(Self::with_oracle(self.n, Oracle::Truncate(Box::new(self.clone()), k)))
    }

    pub fn ground_size(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn kind_name(&self) -> &'static str {
        match self.oracle {
            Oracle::Uniform { .. } => "uniform",
            Oracle::Graphic { .. } => "graphic",
            Oracle::Linear(_) => "linear",
            Oracle::Transversal { .. } => "transversal",
            Oracle::Explicit { .. } => "explicit",
            Oracle::Dual(_) => "dual",
            Oracle::Restrict(..) => "restrict",
            Oracle::Contract(..) => "contract",
            Oracle::Truncate(..) => "truncate",
        }
    }

    pub fn is_independent(&self, set: u64) -> bool {
        if set & !full(self.n) != 0 {
            return false;
        }
        match &self.oracle {
            Oracle::Uniform { r } => set.count_ones() as usize <= *r,
            Oracle::Graphic { vertices, edges } => {
                let mut parent: Vec<usize> = (0..*vertices).collect();
                fn find(parent: &mut [usize], mut x: usize) -> usize {
                    while parent[x] != x {
                        parent[x] = parent[parent[x]];
                        x = parent[x];
                    }
                    x
                }
                for e in set_elements(set) {
                    let (u, v) = edges[e];
                    let (a, b) = (find(&mut parent, u), find(&mut parent, v));
                    if a == b {
                        return false;
                    }
                    parent[a] = b;
                }
                true
            }
            Oracle::Linear(Field::Rational(vectors)) => {
                let cols: Vec<&Vec<BigRational>> = set_elements(set).into_iter().map(|e| &vectors[e]).collect();
                rational_rank(&cols) == cols.len()
            }
            Oracle::Linear(Field::Prime { p, columns }) => {
                let cols: Vec<&Vec<u64>> = set_elements(set).into_iter().map(|e| &columns[e]).collect();
                prime_rank(&cols, *p) == cols.len()
            }
            Oracle::Transversal { right, adjacency } => {
                let mut owner = vec![None; *right];
                set_elements(set).into_iter().all(|u| {
                    let mut seen = 0u64;
                    augment(u, adjacency, &mut seen, &mut owner)
                })
            }
            Oracle::Explicit { bases } => bases.iter().any(|b| b & set == set),
            Oracle::Dual(m) => m.rank_of(full(m.n) & !set) == m.rank,
            Oracle::Restrict(m, s) => set & !s == 0 && m.is_independent(set),
            Oracle::Contract(m, s) => set & s == 0 && m.is_independent(set | s),
            Oracle::Truncate(m, k) => set.count_ones() as usize <= *k && m.is_independent(set),
        }
    }

    /// Size of a greedily grown independent subset of `set`; the rank of
    /// `set` whenever the oracle is a matroid.
    pub fn rank_of(&self, set: u64) -> usize {
        if let Oracle::Explicit { bases } = &self.oracle {
            return bases.iter().map(|b| (b & set).count_ones() as usize).max().unwrap_or(0);
        }
        let mut current = 0u64;
        for e in set_elements(set) {
            if self.is_independent(current | 1 << e) {
                current |= 1 << e;
            }
        }
        current.count_ones() as usize
    }

    /// All bases in lexicographic order of their sorted element lists.
    pub fn bases(&self, caps: &Caps) -> Result<Vec<u64>> {
        let mut out = Vec::new();
        self.bases_dfs(0, 0, &mut out, caps)?;
        Ok(out)
    }

    fn bases_dfs(&self, e: usize, current: u64, out: &mut Vec<u64>, caps: &Caps) -> Result<()> {
        let size = current.count_ones() as usize;
        if size == self.rank {
            out.push(current);
            if out.len() as u128 > caps.max_bases {
                return Err(Error::CapExceeded {
                    what: "bases",
                    required: out.len() as u128,
                    cap: caps.max_bases,
                });
            }
            return Ok(());
        }
        if e >= self.n || self.n - e < self.rank - size {
            return Ok(());
        }
        if self.is_independent(current | 1 << e) {
            self.bases_dfs(e + 1, current | 1 << e, out, caps)?;
        }
        self.bases_dfs(e + 1, current, out, caps)
    }

    /// Uniform distribution over bases as a weighted complex.
    pub fn to_complex(&self, caps: &Caps) -> Result<WeightedComplex> {
        let faces = self.bases(caps)?.into_iter().map(|b| (b, 1.0)).collect();
        WeightedComplex::new(ComplexKind::Sets { ground: self.n }, self.rank, faces, caps)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        MatroidSpec::from_json(text)?.build()
    }
}

/// A violation of basis exchange or equal size, described for humans.
fn exchange_witness(bases: &[u64]) -> Option<String> {
    let size = bases[0].count_ones();
    if let Some(b) = bases.iter().find(|b| b.count_ones() != size) {
        return Some(format!(
            "bases of different sizes: {} and {}",
            set_label(bases[0]),
            set_label(*b)
        ));
    }
    for &b1 in bases {
        for &b2 in bases {
            for x in set_elements(b1 & !b2) {
                let ok = set_elements(b2 & !b1)
                    .into_iter()
                    .any(|y| bases.binary_search(&((b1 & !(1 << x)) | 1 << y)).is_ok());
                if !ok {
                    return Some(format!(
                        "exchange fails for {} and {} at element {x}",
                        set_label(b1),
                        set_label(b2)
                    ));
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomReport {
    pub independent_sets: usize,
    pub empty_independent: bool,
    pub downward_closed: bool,
    pub augmentation: bool,
    pub equal_bases: bool,
    pub pass: bool,
    pub witness: Option<String>,
}

/// Exhaustive check of ∅ ∈ I, downward closure, augmentation (for |T| > |S|
/// some e ∈ T∖S has S∪e ∈ I) and equal-size maximal sets.
pub fn axioms_check(m: &Matroid, caps: &Caps) -> Result<AxiomReport> {
    let n = m.ground_size();
    let total = 1u128 << n;
    if total > caps.max_configs {
        return Err(Error::CapExceeded {
            what: "subsets",
            required: total,
            cap: caps.max_configs,
        });
    }
    let indep: Vec<u64> = (0..=full(n)).filter(|&s| m.is_independent(s)).collect();
    let is_indep = |s: u64| indep.binary_search(&s).is_ok();
    let mut witness = None;
    let empty = m.is_independent(0);
    if !empty {
        witness = Some("the empty set is dependent".into());
    }
    let mut downward = true;
    'outer: for &s in &indep {
        for e in set_elements(s) {
            if !is_indep(s & !(1 << e)) {
                downward = false;
                witness.get_or_insert(format!(
                    "{} is independent but {} is not",
                    set_label(s),
                    set_label(s & !(1 << e))
                ));
                break 'outer;
            }
        }
    }
    let mut augmentation = true;
    'aug: for &s in &indep {
        for &t in &indep {
            if t.count_ones() > s.count_ones()
                && !set_elements(t & !s).into_iter().any(|e| is_indep(s | 1 << e))
            {
                augmentation = false;
                witness.get_or_insert(format!(
                    "no element of {} ∖ {} extends {}",
                    set_label(t),
                    set_label(s),
                    set_label(s)
                ));
                break 'aug;
            }
        }
    }
    let maximal: Vec<u64> = indep
        .iter()
        .copied()
        .filter(|&s| (0..n).all(|e| s >> e & 1 == 1 || !is_indep(s | 1 << e)))
        .collect();
    let equal = maximal.windows(2).all(|w| w[0].count_ones() == w[1].count_ones())
        && maximal.iter().all(|b| b.count_ones() == maximal[0].count_ones());
    if !equal {
        let small = maximal.iter().min_by_key(|b| b.count_ones()).expect("nonempty");
        let large = maximal.iter().max_by_key(|b| b.count_ones()).expect("nonempty");
        witness = Some(format!(
            "maximal independent sets of different sizes: {} and {}",
            set_label(*small),
            set_label(*large)
        ));
    }
    Ok(AxiomReport {
        independent_sets: indep.len(),
        empty_independent: empty,
        downward_closed: downward,
        augmentation,
        equal_bases: equal,
        pass: empty && downward && augmentation && equal,
        witness,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasesWalk {
    pub bases: Vec<u64>,
    pub kernel: WalkKernel,
}

/// Remove a uniform element e of B, then add a uniform f from
/// F = {f ∉ B∖e : (B∖e) ∪ f ∈ I}; e itself is always in F.
pub fn bases_exchange_kernel(m: &Matroid, caps: &Caps) -> Result<BasesWalk> {
    let bases = m.bases(caps)?;
    let dim = bases.len();
    if dim > crate::dynamics::MAX_KERNEL_STATES {
        return Err(Error::CapExceeded {
            what: "kernel states",
            required: dim as u128,
            cap: crate::dynamics::MAX_KERNEL_STATES as u128,
        });
    }
    let r = m.rank();
    let index: std::collections::HashMap<u64, usize> =
        bases.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let mut k = DenseMatrix::zeros(dim, dim);
    if r == 0 {
        k[(0, 0)] = 1.0;
    }
    for (i, &b) in bases.iter().enumerate() {
        for e in set_elements(b) {
            let rest = b & !(1 << e);
            let options: Vec<u64> = (0..m.ground_size())
                .filter(|&f| rest >> f & 1 == 0 && m.is_independent(rest | 1 << f))
                .map(|f| rest | 1 << f)
                .collect();
            for next in &options {
                let j = index[next];
                k[(i, j)] += 1.0 / (r as f64 * options.len() as f64);
            }
        }
    }
    Ok(BasesWalk {
        kernel: WalkKernel::square(k, vec![1.0 / dim as f64; dim]),
        bases,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasesTrajectory {
    pub seed: u64,
    pub steps: u64,
    pub initial: Vec<usize>,
    pub final_basis: Vec<usize>,
    /// Visit counts over B_0..B_T, keyed by basis bits.
    pub counts: std::collections::BTreeMap<u64, u64>,
}

impl BasesTrajectory {
    /// Total variation between visit frequencies and the uniform
    /// distribution on `bases`.
    pub fn tv_to_uniform(&self, bases: &[u64]) -> f64 {
        let total = (self.steps + 1) as f64;
        let u = 1.0 / bases.len() as f64;
        let known: std::collections::HashSet<u64> = bases.iter().copied().collect();
        let mut tv: f64 = bases
            .iter()
            .map(|b| (self.counts.get(b).copied().unwrap_or(0) as f64 / total - u).abs())
            .sum();
        tv += self
            .counts
            .iter()
            .filter(|(b, _)| !known.contains(b))
            .map(|(_, &c)| c as f64 / total)
            .sum::<f64>();
        tv / 2.0
    }
}

/// Runs the bases-exchange walk with oracle calls only, starting from the
/// greedy (lexicographically first) basis.
pub fn simulate_bases_exchange(m: &Matroid, steps: u64, seed: u64) -> BasesTrajectory {
    let mut b = 0u64;
    for e in 0..m.ground_size() {
        if m.is_independent(b | 1 << e) {
            b |= 1 << e;
        }
    }
    let initial = b;
    let mut rng = rng::seeded(seed);
    let mut counts = std::collections::BTreeMap::new();
    *counts.entry(b).or_insert(0) += 1;
    for _ in 0..steps {
        let elems = set_elements(b);
        if !elems.is_empty() {
            let e = elems[rng.random_range(0..elems.len())];
            let rest = b & !(1 << e);
            let options: Vec<usize> = (0..m.ground_size())
                .filter(|&f| rest >> f & 1 == 0 && m.is_independent(rest | 1 << f))
                .collect();
            b = rest | 1 << options[rng.random_range(0..options.len())];
        }
        *counts.entry(b).or_insert(0) += 1;
    }
    BasesTrajectory {
        seed,
        steps,
        initial: set_elements(initial),
        final_basis: set_elements(b),
        counts,
    }
}

/// Local walk Q_S of the uniform bases distribution for an independent S
/// with |S| ≤ r−2.
pub fn matroid_local_walk(m: &Matroid, complex: &WeightedComplex, set: u64) -> Result<LocalWalk> {
    if !m.is_independent(set) {
        return Err(Error::InvalidInput(format!("{} is not independent", set_label(set))));
    }
    complex.local_walk(set)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rank2Structure {
    pub loops: Vec<usize>,
    /// Maximal sets of pairwise parallel non-loop elements.
    pub classes: Vec<Vec<usize>>,
    pub lambda2: f64,
}

/// For a rank-2 matroid: loops, parallel classes (the parts of the complete
/// multipartite graph of independent pairs), and λ₂ of the walk on bases.
pub fn rank2_structure(m: &Matroid, caps: &Caps) -> Result<Rank2Structure> {
    if m.rank() != 2 {
        return Err(Error::InvalidInput(format!("rank is {}, not 2", m.rank())));
    }
    let n = m.ground_size();
    let loops: Vec<usize> = (0..n).filter(|&e| !m.is_independent(1 << e)).collect();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for e in (0..n).filter(|e| !loops.contains(e)) {
        match classes.iter_mut().find(|c| !m.is_independent(1 << c[0] | 1 << e)) {
            Some(c) => c.push(e),
            None => classes.push(vec![e]),
        }
    }
    for (i, ci) in classes.iter().enumerate() {
        for (j, cj) in classes.iter().enumerate() {
            for &a in ci {
                for &b in cj {
                    if a == b {
                        continue;
                    }
                    let independent = m.is_independent(1 << a | 1 << b);
                    if independent != (i != j) {
                        return Err(Error::InvalidMatroid(format!(
                            "pair {{{a},{b}}} breaks the multipartite structure"
                        )));
                    }
                }
            }
        }
    }
    let complex = m.to_complex(caps)?;
    let walk = complex.local_walk(0)?;
    let spec = reversible_spectrum(&walk.kernel)?;
    Ok(Rank2Structure {
        loops,
        classes,
        lambda2: spec.eigenvalues.get(1).copied().unwrap_or(0.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkGap {
    pub set: Vec<usize>,
    pub gamma: f64,
    pub lambda2: f64,
    /// 2 − 1/min γ over the links one level up, when that level exists.
    pub trickle_bound: Option<f64>,
    pub reducible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrickleLevel {
    pub level: usize,
    pub min_gamma: f64,
    pub links: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrickleReport {
    pub rank: usize,
    pub levels: Vec<TrickleLevel>,
    pub links: Vec<LinkGap>,
    /// Worst γ(Q_S) − (2 − 1/min child γ) over links with children.
    pub worst_trickle_margin: Option<f64>,
    /// Worst min-level γ_i − (2 − 1/γ_{i+1}).
    pub worst_level_margin: Option<f64>,
    pub min_gamma: f64,
    pub reducible_witness: Option<Vec<usize>>,
}

/// Measures γ(Q_S) for every independent S with |S| ≤ r−2 and compares each
/// to the trickle-down bound from the level above.
pub fn trickle_down_certify(m: &Matroid, complex: &WeightedComplex) -> Result<TrickleReport> {
    let r = m.rank();
    let mut links = Vec::new();
    let mut levels = Vec::new();
    let mut child_min: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
    let mut reducible_witness = None;
    let mut worst_trickle: Option<f64> = None;
    let mut worst_level: Option<f64> = None;
    let mut above_min: Option<f64> = None;
    for level in (0..r.saturating_sub(1)).rev() {
        let faces = complex.level(level)?.faces.clone();
        let measured: Vec<(u64, f64, f64, bool)> = faces
            .par_iter()
            .map(|&s| {
                let w = complex.local_walk(s)?;
                let spec = reversible_spectrum(&w.kernel)?;
                let g = gap(&spec);
                Ok((s, g.gamma, spec.eigenvalues.get(1).copied().unwrap_or(0.0), g.reducible))
            })
            .collect::<Result<_>>()?;
        let mut level_min = f64::INFINITY;
        let mut level_links = Vec::new();
        let mut this_level: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
        for (s, gamma, lambda2, reducible) in measured {
            if reducible && reducible_witness.is_none() {
                reducible_witness = Some(set_elements(s));
            }
            let children: Vec<f64> = (0..m.ground_size())
                .filter(|&a| s >> a & 1 == 0)
                .filter_map(|a| child_min.get(&(s | 1 << a)).copied())
                .collect();
            let bound = (!children.is_empty())
                .then(|| 2.0 - 1.0 / children.iter().copied().fold(f64::INFINITY, f64::min));
            if let Some(b) = bound {
                let margin = gamma - b;
                worst_trickle = Some(worst_trickle.map_or(margin, |w| w.min(margin)));
            }
            level_min = level_min.min(gamma);
            this_level.insert(s, gamma);
            level_links.push(LinkGap {
                set: set_elements(s),
                gamma,
                lambda2,
                trickle_bound: bound,
                reducible,
            });
        }
        if let Some(above) = above_min {
            let margin = level_min - (2.0 - 1.0 / above);
            worst_level = Some(worst_level.map_or(margin, |w| w.min(margin)));
        }
        above_min = Some(level_min);
        levels.push(TrickleLevel {
            level,
            min_gamma: level_min,
            links: level_links.len(),
        });
        level_links.reverse();
        links.push(level_links);
        child_min = this_level;
    }
    levels.reverse();
    links.reverse();
    let links: Vec<LinkGap> = links.into_iter().flat_map(|l| l.into_iter().rev()).collect();
    let min_gamma = links.iter().map(|l| l.gamma).fold(f64::INFINITY, f64::min);
    Ok(TrickleReport {
        rank: r,
        levels,
        links,
        worst_trickle_margin: worst_trickle,
        worst_level_margin: worst_level,
        min_gamma,
        reducible_witness,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reliability {
    pub p: f64,
    pub dual_formula: Option<f64>,
    pub direct_enumeration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r#match: Option<bool>,
}

/// Number of independent sets of each size, by depth-first extension.
pub fn independent_counts(m: &Matroid, caps: &Caps) -> Result<Vec<u128>> {
    let n = m.ground_size();
    if (1u128 << n) > caps.max_configs {
        return Err(Error::CapExceeded {
            what: "subsets",
            required: 1u128 << n,
            cap: caps.max_configs,
        });
    }
    let mut counts = vec![0u128; n + 1];
    fn walk(m: &Matroid, e: usize, current: u64, counts: &mut [u128]) {
        counts[current.count_ones() as usize] += 1;
        for f in e..m.ground_size() {
            if m.is_independent(current | 1 << f) {
                walk(m, f + 1, current | 1 << f, counts);
            }
        }
    }
    walk(m, 0, 0, &mut counts);
    Ok(counts)
}

/// Pr[a p-random subset contains a basis] as Σ_k (1−p)^k p^{n−k} · #{independent k-sets of M*}.
pub fn reliability_dual(m: &Matroid, p: f64, caps: &Caps) -> Result<f64> {
    check_p(p)?;
    let n = m.ground_size();
    let counts = independent_counts(&m.dual(), caps)?;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f64 * (1.0 - p).powi(k as i32) * p.powi((n - k) as i32))
        .sum())
}

/// The same probability by summing over all 2^n subsets that span.
pub fn reliability_direct(m: &Matroid, p: f64, caps: &Caps) -> Result<f64> {
    check_p(p)?;
    let n = m.ground_size();
    if (1u128 << n) > caps.max_configs {
        return Err(Error::CapExceeded {
            what: "subsets",
            required: 1u128 << n,
            cap: caps.max_configs,
        });
    }
    let r = m.rank();
    Ok((0..=full(n))
        .filter(|&s| m.rank_of(s) == r)
        .map(|s| {
            let k = s.count_ones() as i32;
            p.powi(k) * (1.0 - p).powi(n as i32 - k)
        })
        .sum())
}

/// Dual-formula reliability in exact rational arithmetic.
pub fn reliability_exact(m: &Matroid, p: &BigRational, caps: &Caps) -> Result<BigRational> {
    if p < &BigRational::zero() || p > &BigRational::one() {
        return Err(Error::InvalidInput("p must lie in [0,1]".into()));
    }
    let n = m.ground_size();
    let q = BigRational::one() - p;
    let counts = independent_counts(&m.dual(), caps)?;
    let mut acc = BigRational::zero();
    for (k, &c) in counts.iter().enumerate() {
        let term = num_traits::pow(q.clone(), k) * num_traits::pow(p.clone(), n - k);
        acc += term * BigRational::from_integer(BigInt::from(c));
    }
    Ok(acc)
}

/// Both computation paths; a path that exceeds its cap is reported as `None`.
pub fn reliability(m: &Matroid, p: f64, caps: &Caps) -> Result<Reliability> {
    check_p(p)?;
    let keep = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::CapExceeded { .. }) => Ok(None),
        Err(e) => Err(e),
    };
    let dual_formula = keep(reliability_dual(m, p, caps))?;
    let direct_enumeration = keep(reliability_direct(m, p, caps))?;
    let matched = match (dual_formula, direct_enumeration) {
        (Some(a), Some(b)) => Some((a - b).abs() <= 1e-12),
        _ => None,
    };
    Ok(Reliability {
        p,
        dual_formula,
        direct_enumeration,
        r#match: matched,
    })
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("p must lie in [0,1], got {p}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MinorOp {
    Dual,
    Restrict,
    Contract,
    Truncate,
}

/// JSON description of a matroid, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MatroidSpec {
    Uniform {
        n: usize,
        r: usize,
    },
    Graphic {
        n: usize,
        edges: Vec<[usize; 2]>,
    },
    Linear {
        /// One vector per ground element; entries are rationals like "1/2".
        vectors: Vec<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prime: Option<u64>,
    },
    Transversal {
        left: usize,
        right: usize,
        edges: Vec<[usize; 2]>,
    },
    /// Bases given explicitly. The family is not validated here; run the
    /// axiom check to see whether it is a matroid.
    Explicit {
        n: usize,
        bases: Vec<Vec<usize>>,
    },
    Minor {
        op: MinorOp,
        of: Box<MatroidSpec>,
        #[serde(default)]
        set: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<usize>,
    },
}

impl MatroidSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::Parse(format!("matroid JSON at line {} column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    pub fn build(&self) -> Result<Matroid> {
        match self {
            Self::Uniform { n, r } => Matroid::uniform(*n, *r),
            Self::Graphic { n, edges } => {
                let edges: Vec<_> = edges.iter().map(|e| (e[0], e[1])).collect();
                Matroid::graphic(*n, &edges)
            }
            Self::Linear { vectors, prime } => match prime {
                Some(p) => {
                    let parsed = vectors
                        .iter()
                        .map(|v| {
                            v.iter()
                                .map(|x| {
                                    let q = parse_rational(x)?;
                                    if !q.is_integer() {
                                        return Err(Error::Parse(format!("{x} is not an integer")));
                                    }
                                    let big = q.to_integer() % BigInt::from(*p);
                                    let big = if big < BigInt::zero() { big + BigInt::from(*p) } else { big };
                                    Ok(u64::try_from(big).expect("residue fits"))
                                })
                                .collect::<Result<Vec<u64>>>()
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Matroid::linear_prime(*p, parsed)
                }
                None => {
                    let parsed = vectors
                        .iter()
                        .map(|v| v.iter().map(|x| parse_rational(x)).collect::<Result<Vec<_>>>())
                        .collect::<Result<Vec<_>>>()?;
                    Matroid::linear_rational(parsed)
                }
            },
            Self::Transversal { left, right, edges } => {
                let edges: Vec<_> = edges.iter().map(|e| (e[0], e[1])).collect();
                Matroid::transversal(*left, *right, &edges)
            }
            Self::Explicit { n, bases } => Matroid::explicit_unchecked(*n, bases),
            Self::Minor { op, of, set, k } => {
                let base = of.build()?;
                let mask = mask_of(set, base.ground_size())?;
                match op {
                    MinorOp::Dual => Ok(base.dual()),
                    MinorOp::Restrict => base.restrict(mask),
                    MinorOp::Contract => base.contract(mask),
                    MinorOp::Truncate => base.truncate(
                        k.ok_or_else(|| Error::InvalidInput("truncate needs `k`".into()))?,
                    ),
                }
            }
        }
    }
}

/// Exact rational from a float-free string, re-exported for CLI parsing of p.
pub fn parse_probability(text: &str) -> Result<BigRational> {
    let p = parse_rational(text)?;
    if p < BigRational::zero() || p > BigRational::one() {
        return Err(Error::InvalidInput(format!("p = {} is outside [0,1]", format_rational(&p))));
    }
    Ok(p)
}

pub fn probability_to_f64(p: &BigRational) -> f64 {
    rational_to_f64(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caps() -> Caps {
        Caps::default()
    }

    fn triangle() -> Matroid {
        Matroid::graphic(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    fn k4() -> Matroid {
        Matroid::graphic(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap()
    }

    /// Spanning-tree count via the matrix-tree theorem (exact determinant).
    fn kirchhoff(vertices: usize, edges: &[(usize, usize)]) -> i64 {
        let d = vertices - 1;
        let mut l = vec![vec![BigRational::zero(); d]; d];
        for &(u, v) in edges {
            for (a, b) in [(u, v), (v, u)] {
                if a < d {
                    l[a][a] += BigRational::one();
                    if b < d {
                        l[a][b] -= BigRational::one();
                    }
                }
            }
        }
        let mut det = BigRational::one();
        for c in 0..d {
            let Some(p) = (c..d).find(|&r| !l[r][c].is_zero()) else {
                return 0;
            };
            if p != c {
                l.swap(p, c);
                det = -det;
            }
            det *= l[c][c].clone();
            for r in c + 1..d {
                let f = &l[r][c] / &l[c][c];
                for cc in c..d {
                    let sub = &f * &l[c][cc];
                    l[r][cc] -= sub;
                }
            }
        }
        det.to_integer().try_into().unwrap()
    }

    #[test]
    fn constructor_examples() {
        let t = triangle();
        assert_eq!(t.rank(), 2);
        assert_eq!(t.bases(&caps()).unwrap(), vec![0b011, 0b101, 0b110]);
        assert_eq!(Matroid::uniform(4, 2).unwrap().bases(&caps()).unwrap().len(), 6);
        let tr = Matroid::transversal(1, 1, &[(0, 0)]).unwrap();
        assert_eq!(tr.bases(&caps()).unwrap(), vec![1]);
        assert_eq!(Matroid::uniform(5, 5).unwrap().bases(&caps()).unwrap().len(), 1);
        let k4_edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        assert_eq!(k4().bases(&caps()).unwrap().len() as i64, kirchhoff(4, &k4_edges));
        assert_eq!(kirchhoff(4, &k4_edges), 16);
    }

    #[test]
    fn linear_and_transversal() {
        let q = |a: i64| BigRational::from_integer(a.into());
        // e1, e2, e1+e2, 2e1: the last is parallel to the first
        let m = Matroid::linear_rational(vec![
            vec![q(1), q(0)],
            vec![q(0), q(1)],
            vec![q(1), q(1)],
            vec![q(2), q(0)],
        ])
        .unwrap();
        assert_eq!(m.rank(), 2);
        assert!(!m.is_independent(0b1001));
        assert!(m.is_independent(0b0110));
        let p = Matroid::linear_prime(2, vec![vec![1, 0], vec![0, 1], vec![1, 1]]).unwrap();
        assert_eq!(p.rank(), 2);
        assert!(!p.is_independent(0b111));
        assert!(Matroid::linear_prime(4, vec![vec![1]]).is_err());
        // left {0,1,2}, right {0,1}; 2 only reaches 0
        let t = Matroid::transversal(3, 2, &[(0, 0), (0, 1), (1, 0), (2, 0)]).unwrap();
        assert_eq!(t.rank(), 2);
        assert!(!t.is_independent(0b110));
        assert!(t.is_independent(0b101));
    }

    #[test]
    fn minors() {
        let t = triangle();
        let d = t.dual();
        assert_eq!(d.rank(), 1);
        assert!(d.is_independent(0b001) && !d.is_independent(0b011));
        let c = t.contract(0b001).unwrap();
        assert_eq!(c.rank(), 1);
        assert_eq!(c.bases(&caps()).unwrap(), vec![0b010, 0b100]);
        let tr = Matroid::uniform(4, 3).unwrap().truncate(2).unwrap();
        assert_eq!(tr.bases(&caps()).unwrap(), Matroid::uniform(4, 2).unwrap().bases(&caps()).unwrap());
        assert!(t.contract(0b111).is_err());
        let r = k4().restrict(0b000111).unwrap();
        assert_eq!(r.rank(), 3);
        for m in [t.clone(), k4(), Matroid::uniform(5, 3).unwrap()] {
            assert_eq!(m.dual().dual().bases(&caps()).unwrap(), m.bases(&caps()).unwrap());
        }
    }

    #[test]
    fn axioms() {
        assert!(axioms_check(&Matroid::uniform(4, 2).unwrap(), &caps()).unwrap().pass);
        assert!(axioms_check(&k4(), &caps()).unwrap().pass);
        let bad = Matroid::explicit_unchecked(3, &[vec![0], vec![1, 2]]).unwrap();
        let report = axioms_check(&bad, &caps()).unwrap();
        assert!(!report.pass);
        assert!(!report.equal_bases);
        assert!(report.witness.unwrap().contains("different sizes"));
        assert!(Matroid::explicit(3, &[vec![0], vec![1, 2]]).is_err());
        assert!(Matroid::explicit(4, &[vec![0, 1], vec![2, 3]]).is_err());
        assert!(Matroid::explicit(3, &[vec![0, 1], vec![0, 2], vec![1, 2]]).is_ok());
    }

    #[test]
    fn exchange_kernel() {
        let t = triangle();
        let w = bases_exchange_kernel(&t, &caps()).unwrap();
        // {e1,e2} = 0b011 -> {e2,e3} = 0b110
        let i = w.bases.iter().position(|&b| b == 0b011).unwrap();
        let j = w.bases.iter().position(|&b| b == 0b110).unwrap();
        assert!((w.kernel.matrix[(i, j)] - 0.25).abs() < 1e-15);
        assert!(w.kernel.stationarity_residual() < 1e-12);
        assert!((0..3).all(|x| w.kernel.matrix[(x, x)] > 0.0));
        let single = bases_exchange_kernel(&Matroid::uniform(3, 3).unwrap(), &caps()).unwrap();
        assert_eq!(single.kernel.matrix, DenseMatrix::identity(1));
        for m in [t, k4(), Matroid::uniform(5, 3).unwrap()] {
            let w = bases_exchange_kernel(&m, &caps()).unwrap();
            let c = m.to_complex(&caps()).unwrap();
            let du = c.down_up(m.rank()).unwrap();
            assert!(w.kernel.matrix.max_abs_diff(&du.matrix) < 1e-12);
        }
    }

    #[test]
    fn local_walks_and_rank2() {
        let t = triangle();
        let c = t.to_complex(&caps()).unwrap();
        let w = matroid_local_walk(&t, &c, 0).unwrap();
        let spec = w.spectrum().unwrap();
        let expected = [1.0, -0.5, -0.5];
        for (a, b) in spec.eigenvalues.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let u = Matroid::uniform(4, 2).unwrap();
        let s = rank2_structure(&u, &caps()).unwrap();
        assert!((s.lambda2 + 1.0 / 3.0).abs() < 1e-12);
        let s = rank2_structure(&t, &caps()).unwrap();
        assert_eq!(s.classes, vec![vec![0], vec![1], vec![2]]);
        assert!((s.lambda2 + 0.5).abs() < 1e-12);
        let parallel = Matroid::graphic(3, &[(0, 1), (0, 1), (1, 2)]).unwrap();
        let s = rank2_structure(&parallel, &caps()).unwrap();
        assert_eq!(s.classes, vec![vec![0, 1], vec![2]]);
        assert!(s.lambda2 <= 1e-9);
        let with_loop = Matroid::explicit(4, &[vec![0, 1], vec![0, 2], vec![1, 2]]).unwrap();
        let s = rank2_structure(&with_loop, &caps()).unwrap();
        assert_eq!(s.loops, vec![3]);
        let w = with_loop.to_complex(&caps()).unwrap().local_walk(0).unwrap();
        assert_eq!(w.states, vec![0, 1, 2]);
    }

    #[test]
    fn trickle_down() {
        let m = k4();
        let c = m.to_complex(&caps()).unwrap();
        let r = trickle_down_certify(&m, &c).unwrap();
        assert!(r.min_gamma >= 1.0 - 1e-9);
        assert!(r.worst_trickle_margin.unwrap() >= -1e-9);
        assert!(r.links.iter().filter(|l| l.set.len() == 1).all(|l| l.lambda2 <= 1e-9));
        let u = Matroid::uniform(4, 2).unwrap();
        let r = trickle_down_certify(&u, &u.to_complex(&caps()).unwrap()).unwrap();
        assert_eq!(r.links.len(), 1);
        assert!((r.links[0].gamma - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn reliability_examples() {
        let t = triangle();
        let half = BigRational::new(1.into(), 2.into());
        assert_eq!(reliability_exact(&t, &half, &caps()).unwrap(), half);
        let r = reliability(&t, 0.5, &caps()).unwrap();
        assert!((r.dual_formula.unwrap() - 0.5).abs() < 1e-15);
        assert!((r.direct_enumeration.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(r.r#match, Some(true));
        for m in [t, k4()] {
            assert!((reliability_dual(&m, 1.0, &caps()).unwrap() - 1.0).abs() < 1e-15);
            assert_eq!(reliability_dual(&m, 0.0, &caps()).unwrap(), 0.0);
            assert_eq!(reliability_direct(&m, 0.0, &caps()).unwrap(), 0.0);
        }
        assert!(reliability(&k4(), 1.5, &caps()).is_err());
    }

    #[test]
    fn simulation() {
        let t = triangle();
        let s = simulate_bases_exchange(&t, 0, 1);
        assert_eq!(s.initial, vec![0, 1]);
        assert_eq!(s.final_basis, s.initial);
        let a = simulate_bases_exchange(&t, 1000, 4);
        assert_eq!(a, simulate_bases_exchange(&t, 1000, 4));
    }

    #[test]
    fn json_specs() {
        let m = Matroid::from_json(r#"{"kind":"graphic","n":3,"edges":[[0,1],[1,2],[0,2]]}"#).unwrap();
        assert_eq!(m, triangle());
        let d = Matroid::from_json(
            r#"{"kind":"minor","op":"dual","of":{"kind":"uniform","n":4,"r":1}}"#,
        )
        .unwrap();
        assert_eq!(d.rank(), 3);
        let l = Matroid::from_json(r#"{"kind":"linear","vectors":[["1","0"],["1/2","0"],["0","3"]]}"#).unwrap();
        assert_eq!(l.rank(), 2);
        assert!(!l.is_independent(0b011));
        let p = Matroid::from_json(r#"{"kind":"linear","prime":3,"vectors":[["1","1"],["-2","1"]]}"#).unwrap();
        assert_eq!(p.rank(), 1);
        assert!(matches!(Matroid::from_json(r#"{"kind":"nope"}"#), Err(Error::Parse(_))));
        let spec = MatroidSpec::Uniform { n: 3, r: 2 };
        assert_eq!(MatroidSpec::from_json(&spec.to_json()).unwrap(), spec);
    }
}
