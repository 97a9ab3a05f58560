//! Level distributions π_k, up/down operators, up-down and down-up walks,
//! local walks, Dirichlet forms and projections.
//!
//! Everything here works on a [`WeightedComplex`]: a family of equal-size top
//! faces with weights, where level `k` consists of the `k`-subsets of top
//! faces. A spin system on `n` vertices becomes a complex of rank `n` over
//! the `2n` elements `2v + s` (vertex `v` with spin `s`), whose level-`k`
//! faces are exactly the valid pinnings of size `k`. A matroid becomes the
//! complex of its bases with uniform weights.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::{binomial, subsets_of_size, Caps, Pinning, SpinConfig, SpinSystem};
use crate::numerics::{gap, reversible_eigen, reversible_spectrum, DenseMatrix, Spectrum, SymmetricEigen, WalkKernel};

/// Above this many (top face, subset) visits a level is refused outright.
const MAX_LEVEL_WORK: u128 = 200_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ComplexKind {
    /// Elements `2v + s` over `n` vertices.
    Spin { n: usize },
    /// Elements are ground-set indices.
    Sets { ground: usize },
}

/// One level of the complex: its faces in lexicographic order, their
/// masses μ(face), and π_k(face) = μ(face)/C(r, k).
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSpace {
    pub k: usize,
    pub faces: Vec<u64>,
    pub mass: Vec<f64>,
    pub pi: Vec<f64>,
    index: HashMap<u64, usize>,
}

impl LevelSpace {
    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn index_of(&self, face: u64) -> Option<usize> {
        self.index.get(&face).copied()
    }

    pub fn mass_of(&self, face: u64) -> f64 {
        self.index_of(face).map_or(0.0, |i| self.mass[i])
    }
}

/// Sort key putting equal-size faces in lexicographic order of their sorted
/// element lists.
fn face_order(face: u64) -> std::cmp::Reverse<u64> {
    std::cmp::Reverse(face.reverse_bits())
}

fn elements_of(face: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(face.count_ones() as usize);
    let mut rest = face;
    while rest != 0 {
        out.push(rest.trailing_zeros() as usize);
        rest &= rest - 1;
    }
    out
}

#[derive(Debug)]
pub struct WeightedComplex {
    kind: ComplexKind,
    rank: usize,
    top: Vec<(u64, f64)>,
    caps: Caps,
    levels: Vec<OnceLock<LevelSpace>>,
}

impl WeightedComplex {
    /// Complex of top faces of equal size `rank` with positive weights,
    /// normalized to a probability distribution.
    pub fn new(kind: ComplexKind, rank: usize, faces: Vec<(u64, f64)>, caps: &Caps) -> Result<Self> {
        let elements = match kind {
            ComplexKind::Spin { n } => 2 * n,
            ComplexKind::Sets { ground } => ground,
        };
        if elements > 64 {
            return Err(Error::InvalidInput(format!(
                "complexes are limited to 64 elements, got {elements}"
            )));
        }
        if faces.is_empty() {
            return Err(Error::InvalidInput("complex has no top faces".into()));
        }
        let mut total = 0.0;
        for &(f, w) in &faces {
            if f.count_ones() as usize != rank {
                return Err(Error::InvalidInput(format!(
                    "top face {:#b} does not have size {rank}",
                    f
                )));
            }
            if elements < 64 && f >> elements != 0 {
                return Err(Error::InvalidInput("top face uses unknown elements".into()));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidInput("top-face weights must be positive".into()));
            }
            total += w;
        }
        let mut top: Vec<(u64, f64)> = faces.into_iter().map(|(f, w)| (f, w / total)).collect();
        top.sort_by_key(|&(f, _)| face_order(f));
        if top.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidInput("duplicate top face".into()));
        }
        Ok(Self {
            kind,
            rank,
            top,
            caps: *caps,
            levels: (0..=rank).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn from_spin_system(system: &SpinSystem, caps: &Caps) -> Result<Self> {
        let n = system.n();
        if n > 32 {
            return Err(Error::InvalidInput("level complexes support at most 32 vertices".into()));
        }
        let faces = system
            .support()
            .iter()
            .zip(system.probs())
            .map(|(&c, &p)| (config_face(c, n), p))
            .collect();
        Self::new(ComplexKind::Spin { n }, n, faces, caps)
    }

    pub fn kind(&self) -> ComplexKind {
        self.kind
    }

    /// Size r of the top faces (n for spin systems, the rank for matroids).
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn element_count(&self) -> usize {
        match self.kind {
            ComplexKind::Spin { n } => 2 * n,
            ComplexKind::Sets { ground } => ground,
        }
    }

    pub fn top_faces(&self) -> &[(u64, f64)] {
        &self.top
    }

    pub fn level(&self, k: usize) -> Result<&LevelSpace> {
        if k > self.rank {
            return Err(Error::InvalidInput(format!(
                "level {k} exceeds rank {}",
                self.rank
            )));
        }
        if let Some(l) = self.levels[k].get() {
            return Ok(l);
        }
        let built = self.build_level(k)?;
        let _ = self.levels[k].set(built);
        Ok(self.levels[k].get().expect("level was just set"))
    }

    fn build_level(&self, k: usize) -> Result<LevelSpace> {
        let work = self.top.len() as u128 * binomial(self.rank, k);
        if work > MAX_LEVEL_WORK {
            return Err(Error::CapExceeded {
                what: "level faces",
                required: work,
                cap: MAX_LEVEL_WORK,
            });
        }
        let mut acc: HashMap<u64, f64> = HashMap::new();
        let picks: Vec<u64> = subsets_of_size(self.rank, k).collect();
        for &(face, w) in &self.top {
            let els = elements_of(face);
            for &pick in &picks {
                let mut sub = 0u64;
                let mut rest = pick;
                while rest != 0 {
                    sub |= 1 << els[rest.trailing_zeros() as usize];
                    rest &= rest - 1;
                }
                *acc.entry(sub).or_insert(0.0) += w;
            }
            if acc.len() as u128 > self.caps.max_pinnings {
                return Err(Error::CapExceeded {
                    what: "faces per level",
                    required: work,
                    cap: self.caps.max_pinnings,
                });
            }
        }
        let mut faces: Vec<u64> = acc.keys().copied().collect();
        faces.sort_by_key(|&f| face_order(f));
        let mass: Vec<f64> = faces.iter().map(|f| acc[f]).collect();
        let norm = binomial(self.rank, k) as f64;
        let pi = mass.iter().map(|m| m / norm).collect();
        let index = faces.iter().enumerate().map(|(i, &f)| (f, i)).collect();
        Ok(LevelSpace {
            k,
            faces,
            mass,
            pi,
            index,
        })
    }

    /// μ(face): total top weight of faces containing it.
    pub fn mass(&self, face: u64) -> Result<f64> {
        let k = face.count_ones() as usize;
        if k > self.rank {
            return Ok(0.0);
        }
        Ok(self.level(k)?.mass_of(face))
    }

    /// Human-readable label of a face: `{v=s,...}` for spin complexes and
    /// `[e,...]` for set complexes.
    pub fn face_label(&self, face: u64) -> String {
        match self.kind {
            ComplexKind::Spin { .. } => face_pinning(face).to_string(),
            ComplexKind::Sets { .. } => {
                let els: Vec<String> = elements_of(face).iter().map(|e| e.to_string()).collect();
                format!("[{}]", els.join(","))
            }
        }
    }

    pub fn element_label(&self, element: usize) -> String {
        match self.kind {
            ComplexKind::Spin { .. } => format!("({},{})", element / 2, element % 2),
            ComplexKind::Sets { .. } => element.to_string(),
        }
    }

    /// P↓_k: level k → level k−1, removing a uniform element.
    pub fn down(&self, k: usize) -> Result<WalkKernel> {
        if k == 0 || k > self.rank {
            return Err(Error::InvalidInput(format!("down operator needs 1 ≤ k ≤ {}", self.rank)));
        }
        let rows = self.level(k)?;
        let cols = self.level(k - 1)?;
        let mut m = DenseMatrix::zeros(rows.len(), cols.len());
        for (i, &face) in rows.faces.iter().enumerate() {
            for e in elements_of(face) {
                let j = cols.index_of(face & !(1 << e)).expect("subface is present");
                m[(i, j)] += 1.0 / k as f64;
            }
        }
        Ok(WalkKernel::operator(m))
    }

    /// P↑_k: level k → level k+1 with P↑_k(τ, τ∪a) = μ(τ∪a)/((r−k)μ(τ)).
    pub fn up(&self, k: usize) -> Result<WalkKernel> {
        if k >= self.rank {
            return Err(Error::InvalidInput(format!("up operator needs 0 ≤ k < {}", self.rank)));
        }
        let rows = self.level(k)?;
        let cols = self.level(k + 1)?;
        let mut m = DenseMatrix::zeros(rows.len(), cols.len());
        let scale = (self.rank - k) as f64;
        for (j, &face) in cols.faces.iter().enumerate() {
            for e in elements_of(face) {
                let i = rows.index_of(face & !(1 << e)).expect("subface is present");
                m[(i, j)] = cols.mass[j] / (scale * rows.mass[i]);
            }
        }
        Ok(WalkKernel::operator(m))
    }

    /// P↑↓_k = P↑_k P↓_{k+1} on level k.
    pub fn up_down(&self, k: usize) -> Result<WalkKernel> {
        let m = self.up(k)?.matrix.matmul(&self.down(k + 1)?.matrix)?;
        Ok(WalkKernel::square(m, self.level(k)?.pi.clone()))
    }

    /// P↓↑_k = P↓_k P↑_{k−1} on level k.
    pub fn down_up(&self, k: usize) -> Result<WalkKernel> {
        if k == 0 {
            return Err(Error::InvalidInput("down-up walk needs k ≥ 1".into()));
        }
        let m = self.down(k)?.matrix.matmul(&self.up(k - 1)?.matrix)?;
        Ok(WalkKernel::square(m, self.level(k)?.pi.clone()))
    }

    /// P↓↑_{i,j}: down from level i to level j one element at a time, then
    /// back up to level i.
    pub fn down_up_multi(&self, i: usize, j: usize) -> Result<WalkKernel> {
        if !(j < i && i <= self.rank) {
            return Err(Error::InvalidInput(format!(
                "multi-level walk needs {} ≥ i > j ≥ 0, got i={i}, j={j}",
                self.rank
            )));
        }
        let mut m = DenseMatrix::identity(self.level(i)?.len());
        for level in ((j + 1)..=i).rev() {
            m = m.matmul(&self.down(level)?.matrix)?;
        }
        for level in j..i {
            m = m.matmul(&self.up(level)?.matrix)?;
        }
        Ok(WalkKernel::square(m, self.level(i)?.pi.clone()))
    }

    /// P↑↓_k evaluated entrywise from the closed form
    /// π_{k+1}(σ∪a∪b)/((k+1)² π_k(σ∪a)) off the diagonal, 1/(k+1) on it.
    pub fn up_down_direct(&self, k: usize) -> Result<WalkKernel> {
        if k >= self.rank {
            return Err(Error::InvalidInput(format!("up-down walk needs 0 ≤ k < {}", self.rank)));
        }
        let here = self.level(k)?;
        let above = self.level(k + 1)?;
        let kk = (k + 1) as f64;
        let mut m = DenseMatrix::zeros(here.len(), here.len());
        for (x, &fx) in here.faces.iter().enumerate() {
            m[(x, x)] = 1.0 / kk;
            for (y, &fy) in here.faces.iter().enumerate() {
                let joint = fx | fy;
                if x != y && joint.count_ones() as usize == k + 1 {
                    if let Some(a) = above.index_of(joint) {
                        m[(x, y)] = above.pi[a] / (kk * kk * here.pi[x]);
                    }
                }
            }
        }
        Ok(WalkKernel::square(m, here.pi.clone()))
    }

    /// Local walk Q_τ on the elements extending τ, for a face of size
    /// k ≤ r−2: Q_τ(a,b) = μ(τ∪a∪b)/((r−k−1)μ(τ∪a)) for a ≠ b.
    pub fn local_walk(&self, face: u64) -> Result<LocalWalk> {
        let k = face.count_ones() as usize;
        if k + 2 > self.rank {
            return Err(Error::Degenerate(format!(
                "local walk needs at least two unfixed coordinates; face {} has size {k} of {}",
                self.face_label(face),
                self.rank
            )));
        }
        let mu = self.mass(face)?;
        if !(mu > 0.0) {
            return Err(Error::InvalidPinning);
        }
        let one_up = self.level(k + 1)?;
        let two_up = self.level(k + 2)?;
        let states: Vec<usize> = (0..self.element_count())
            .filter(|&a| face >> a & 1 == 0 && one_up.mass_of(face | 1 << a) > 0.0)
            .collect();
        let d = states.len();
        let free = (self.rank - k) as f64;
        let mut m = DenseMatrix::zeros(d, d);
        let mut pi = Vec::with_capacity(d);
        for (x, &a) in states.iter().enumerate() {
            let ma = one_up.mass_of(face | 1 << a);
            pi.push(ma / (free * mu));
            for (y, &b) in states.iter().enumerate() {
                if x != y {
                    m[(x, y)] = two_up.mass_of(face | 1 << a | 1 << b) / ((free - 1.0) * ma);
                }
            }
        }
        Ok(LocalWalk {
            face,
            states,
            kernel: WalkKernel::square(m, pi),
        })
    }

    /// π_{η,j}: the distribution of the j extra elements of a level-(ℓ+j)
    /// face containing η, π_{η,j}(ρ) = μ(η∪ρ)/(μ(η) C(r−ℓ, j)).
    pub fn conditional_level(&self, face: u64, j: usize) -> Result<(Vec<u64>, Vec<f64>)> {
        let l = face.count_ones() as usize;
        if l + j > self.rank {
            return Err(Error::InvalidInput(format!(
                "cannot extend a face of size {l} by {j} in rank {}",
                self.rank
            )));
        }
        let mu = self.mass(face)?;
        if !(mu > 0.0) {
            return Err(Error::InvalidPinning);
        }
        let target = self.level(l + j)?;
        let norm = binomial(self.rank - l, j) as f64;
        let mut rho = Vec::new();
        let mut probs = Vec::new();
        for (i, &f) in target.faces.iter().enumerate() {
            if f & face == face {
                rho.push(f & !face);
                probs.push(target.mass[i] / (mu * norm));
            }
        }
        Ok((rho, probs))
    }

    /// f^{(k)} = P↑_k f^{(k+1)}.
    pub fn project(&self, k: usize, f: &[f64]) -> Result<Vec<f64>> {
        let up = self.up(k)?;
        up.matrix.mul_vec(f)
    }

    /// Projects a level-`from` function all the way down to level `to`.
    pub fn project_to(&self, from: usize, to: usize, f: &[f64]) -> Result<Vec<f64>> {
        let mut g = f.to_vec();
        for k in (to..from).rev() {
            g = self.project(k, &g)?;
        }
        Ok(g)
    }

    /// γ_k = min over level-k faces of γ(Q_τ) for k = 0..=r−2.
    pub fn local_gaps(&self) -> Result<Vec<LevelGap>> {
        let mut out = Vec::new();
        for k in 0..self.rank.saturating_sub(1) {
            let faces = self.level(k)?.faces.clone();
            let gaps: Vec<(u64, f64, bool)> = faces
                .par_iter()
                .map(|&f| {
                    let walk = self.local_walk(f)?;
                    let g = gap(&reversible_spectrum(&walk.kernel)?);
                    Ok((f, if g.reducible { 0.0 } else { g.gamma }, g.reducible))
                })
                .collect::<Result<_>>()?;
            let mut best = (faces[0], f64::INFINITY);
            let mut reducible = Vec::new();
            for &(f, g, red) in &gaps {
                if red {
                    reducible.push(f);
                }
                if g < best.1 {
                    best = (f, g);
                }
            }
            out.push(LevelGap {
                k,
                gamma: best.1,
                witness: best.0,
                witness_label: self.face_label(best.0),
                reducible,
            });
        }
        Ok(out)
    }

    /// Spectral gap of the down-up walk at level k.
    pub fn down_up_gap(&self, k: usize) -> Result<f64> {
        Ok(gap(&reversible_spectrum(&self.down_up(k)?)?).gamma)
    }

    /// JSON list of the state labels of level `k`, in kernel row order.
    pub fn state_index_json(&self, k: usize) -> Result<String> {
        let labels: Vec<String> = self.level(k)?.faces.iter().map(|&f| self.face_label(f)).collect();
        Ok(serde_json::to_string(&labels).expect("labels serialize"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalWalk {
    pub face: u64,
    /// Elements indexing the kernel rows.
    pub states: Vec<usize>,
    pub kernel: WalkKernel,
}

impl LocalWalk {
    pub fn spectrum(&self) -> Result<Spectrum> {
        reversible_spectrum(&self.kernel)
    }

    pub fn eigen(&self) -> Result<SymmetricEigen> {
        reversible_eigen(&self.kernel)
    }

    /// f_τ(a) = f(τ∪a) for a function on the level above τ.
    pub fn restrict(&self, level_above: &LevelSpace, f: &[f64]) -> Vec<f64> {
        self.states
            .iter()
            .map(|&a| {
                let i = level_above
                    .index_of(self.face | 1 << a)
                    .expect("local states extend the face");
                f[i]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelGap {
    pub k: usize,
    pub gamma: f64,
    #[serde(skip)]
    pub witness: u64,
    pub witness_label: String,
    /// Faces whose local walk has a repeated top eigenvalue.
    #[serde(skip)]
    pub reducible: Vec<u64>,
}

pub fn config_face(config: SpinConfig, n: usize) -> u64 {
    (0..n).fold(0u64, |acc, v| acc | 1 << (2 * v + config.spin(v) as usize))
}

pub fn pinning_face(pinning: &Pinning) -> u64 {
    pinning
        .pairs()
        .iter()
        .fold(0u64, |acc, &(v, s)| acc | 1 << (2 * v + s as usize))
}

/// Inverse of [`pinning_face`]. Faces never hold both spins of a vertex.
pub fn face_pinning(face: u64) -> Pinning {
    elements_of(face)
        .into_iter()
        .fold(Pinning::empty(), |p, e| p.with(e / 2, (e % 2) as u8))
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub fn expectation(pi: &[f64], f: &[f64]) -> Result<f64> {
    check_len(pi.len(), f.len())?;
    Ok(pi.iter().zip(f).map(|(p, x)| p * x).sum())
}

/// Var_π(f) = Σ π(x)(f(x) − E f)².
pub fn variance(pi: &[f64], f: &[f64]) -> Result<f64> {
    let mean = expectation(pi, f)?;
    Ok(pi.iter().zip(f).map(|(p, x)| p * (x - mean) * (x - mean)).sum())
}

/// Var_π(f) = ½ Σ_{x,y} π(x)π(y)(f(x) − f(y))².
pub fn variance_pairwise(pi: &[f64], f: &[f64]) -> Result<f64> {
    check_len(pi.len(), f.len())?;
    let mut acc = 0.0;
    for (i, (&px, &fx)) in pi.iter().zip(f).enumerate() {
        for (&py, &fy) in pi[i + 1..].iter().zip(&f[i + 1..]) {
            acc += px * py * (fx - fy) * (fx - fy);
        }
    }
    Ok(acc)
}

/// E_P(f) = ½ Σ_{x,y} π(x)P(x,y)(f(x) − f(y))².
pub fn dirichlet(kernel: &WalkKernel, f: &[f64]) -> Result<f64> {
    let pi = kernel
        .stationary
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("Dirichlet form needs a stationary distribution".into()))?;
    check_len(kernel.dim(), f.len())?;
    let n = kernel.dim();
    let mut acc = 0.0;
    for x in 0..n {
        for y in 0..n {
            let d = f[x] - f[y];
            acc += pi[x] * kernel.matrix[(x, y)] * d * d;
        }
    }
    Ok(acc / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::Graph;
    use num_rational::BigRational;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn complex(g: &Graph, lambda: BigRational) -> WeightedComplex {
        let sys = SpinSystem::build_hardcore(g, &lambda, &Caps::default()).unwrap();
        WeightedComplex::from_spin_system(&sys, &Caps::default()).unwrap()
    }

    fn face(pairs: &[(usize, u8)]) -> u64 {
        pinning_face(&Pinning::from_pairs(pairs).unwrap())
    }

    #[test]
    fn level_spaces() {
        let sys = SpinSystem::build_hardcore(&Graph::path(3), &q(1, 1), &Caps::default()).unwrap();
        let c = WeightedComplex::from_spin_system(&sys, &Caps::default()).unwrap();
        let top = c.level(3).unwrap();
        assert_eq!(top.pi, sys.probs());
        let top_faces: Vec<u64> = sys.support().iter().map(|&s| config_face(s, 3)).collect();
        assert_eq!(top.faces, top_faces);
        assert_eq!(c.level(0).unwrap().pi, vec![1.0]);

        let e = complex(&Graph::path(2), q(1, 1));
        let l1 = e.level(1).unwrap();
        let a1 = l1.index_of(face(&[(0, 1)])).unwrap();
        let a0 = l1.index_of(face(&[(0, 0)])).unwrap();
        assert!((l1.pi[a1] - 1.0 / 6.0).abs() < 1e-15);
        assert!((l1.pi[a0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((l1.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let pins: Vec<Pinning> = l1.faces.iter().map(|&f| face_pinning(f)).collect();
        assert_eq!(pins, sys_pinnings(&Graph::path(2), 1));
    }

    fn sys_pinnings(g: &Graph, k: usize) -> Vec<Pinning> {
        SpinSystem::build_hardcore(g, &q(1, 1), &Caps::default())
            .unwrap()
            .enumerate_pinnings(k, &Caps::default())
            .unwrap()
    }

    #[test]
    fn down_operator() {
        let c = complex(&Graph::path(2), q(1, 1));
        let d1 = c.down(1).unwrap();
        assert!(d1.matrix.as_slice().iter().all(|&x| x == 1.0));
        let d2 = c.down(2).unwrap();
        for r in 0..d2.matrix.rows() {
            let row = d2.matrix.row(r);
            assert_eq!(row.iter().filter(|&&x| x == 0.5).count(), 2);
        }
        for k in 1..=2 {
            let pushed = c.down(k).unwrap().matrix.vec_mul(&c.level(k).unwrap().pi).unwrap();
            let below = &c.level(k - 1).unwrap().pi;
            for (a, b) in pushed.iter().zip(below) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn up_operator() {
        let c = complex(&Graph::path(2), q(1, 1));
        let up0 = c.up(0).unwrap();
        let a1 = c.level(1).unwrap().index_of(face(&[(0, 1)])).unwrap();
        assert!((up0.matrix[(0, a1)] - 1.0 / 6.0).abs() < 1e-15);
        for k in 0..2 {
            let up = c.up(k).unwrap();
            let down = c.down(k + 1).unwrap();
            assert!(up.stochasticity_residual() < 1e-12);
            let lo = &c.level(k).unwrap().pi;
            let hi = &c.level(k + 1).unwrap().pi;
            for x in 0..lo.len() {
                for y in 0..hi.len() {
                    let lhs = lo[x] * up.matrix[(x, y)];
                    let rhs = hi[y] * down.matrix[(y, x)];
                    assert!((lhs - rhs).abs() < 1e-12);
                }
            }
        }
        // from a level-1 face the only extensions are those consistent with Ω
        let up1 = c.up(1).unwrap();
        let l1 = c.level(1).unwrap();
        let l2 = c.level(2).unwrap();
        let b1 = l1.index_of(face(&[(1, 1)])).unwrap();
        let only = l2.index_of(face(&[(0, 0), (1, 1)])).unwrap();
        assert_eq!(up1.matrix[(b1, only)], 1.0);
    }

    #[test]
    fn walks_and_identities() {
        let c = complex(&Graph::path(2), q(1, 1));
        let q0 = c.local_walk(0).unwrap();
        let ud1 = c.up_down(1).unwrap();
        let lazy = q0.kernel.matrix.add(&DenseMatrix::identity(4)).unwrap().scale(0.5);
        assert!(ud1.matrix.max_abs_diff(&lazy) < 1e-12);
        assert!(c.down_up_multi(2, 1).unwrap().matrix.max_abs_diff(&c.down_up(2).unwrap().matrix) < 1e-15);
        for k in 0..2 {
            let direct = c.up_down_direct(k).unwrap();
            assert!(direct.matrix.max_abs_diff(&c.up_down(k).unwrap().matrix) < 1e-12);
        }
    }

    #[test]
    fn local_walk_examples() {
        let c = complex(&Graph::path(2), q(1, 1));
        let w = c.local_walk(0).unwrap();
        assert_eq!(w.states, vec![0, 1, 2, 3]);
        let m = &w.kernel.matrix;
        // states: (a,0)=0, (a,1)=1, (b,0)=2, (b,1)=3
        assert!((m[(1, 2)] - 1.0).abs() < 1e-15);
        assert!((m[(0, 2)] - 0.5).abs() < 1e-15);
        assert!((m[(0, 3)] - 0.5).abs() < 1e-15);
        assert_eq!(m[(0, 1)], 0.0);
        let spec = w.spectrum().unwrap();
        let expected = [1.0, 0.5, -0.5, -1.0];
        for (a, b) in spec.eigenvalues.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(c.local_walk(face(&[(0, 0)])).is_err());
    }

    #[test]
    fn scaled_embedding() {
        let c = complex(&Graph::cycle(4), q(1, 1));
        for k in 0..=1 {
            let ud = c.up_down(k + 1).unwrap();
            let above = c.level(k + 1).unwrap();
            for &eta in &c.level(k).unwrap().faces {
                let w = c.local_walk(eta).unwrap();
                for (x, &a) in w.states.iter().enumerate() {
                    for (y, &b) in w.states.iter().enumerate() {
                        if a / 2 == b / 2 {
                            continue;
                        }
                        let i = above.index_of(eta | 1 << a).unwrap();
                        let j = above.index_of(eta | 1 << b).unwrap();
                        let lhs = ud.matrix[(i, j)];
                        let rhs = w.kernel.matrix[(x, y)] / (k + 2) as f64;
                        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
                    }
                }
            }
        }
    }

    #[test]
    fn product_local_walk() {
        let c = complex(&Graph::empty(3), q(1, 1));
        let w = c.local_walk(0).unwrap();
        for x in 0..6 {
            for y in 0..6 {
                let expected = if x / 2 == y / 2 { 0.0 } else { 0.25 };
                assert!((w.kernel.matrix[(x, y)] - expected).abs() < 1e-15);
            }
        }
        let spec = w.spectrum().unwrap();
        assert!(spec.eigenvalues[1].abs() < 1e-12);
        let gaps = c.local_gaps().unwrap();
        assert_eq!(gaps.len(), 2);
        assert!(gaps.iter().all(|g| (g.gamma - 1.0).abs() < 1e-12));
    }

    #[test]
    fn edge_local_gap() {
        let c = complex(&Graph::path(2), q(1, 1));
        let gaps = c.local_gaps().unwrap();
        assert_eq!(gaps.len(), 1);
        assert!((gaps[0].gamma - 0.5).abs() < 1e-12);
        assert!(gaps[0].reducible.is_empty());
    }

    #[test]
    fn dirichlet_and_variance() {
        let pi = vec![0.5, 0.5];
        let swap = WalkKernel::square(
            DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            pi.clone(),
        );
        let f = [0.0, 1.0];
        assert!((variance(&pi, &f).unwrap() - 0.25).abs() < 1e-15);
        assert!((variance_pairwise(&pi, &f).unwrap() - 0.25).abs() < 1e-15);
        assert!((dirichlet(&swap, &f).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(dirichlet(&swap, &[3.0, 3.0]).unwrap(), 0.0);
        let id = WalkKernel::square(DenseMatrix::identity(2), pi.clone());
        assert_eq!(dirichlet(&id, &f).unwrap(), 0.0);
        assert!(dirichlet(&id, &[1.0]).is_err());
    }

    #[test]
    fn projection() {
        let c = complex(&Graph::path(2), q(1, 1));
        let top = c.level(2).unwrap();
        let target = face(&[(0, 1), (1, 0)]);
        let f: Vec<f64> = top.faces.iter().map(|&x| if x == target { 1.0 } else { 0.0 }).collect();
        let g = c.project(1, &f).unwrap();
        let l1 = c.level(1).unwrap();
        let at = |pairs: &[(usize, u8)]| g[l1.index_of(face(pairs)).unwrap()];
        assert!((at(&[(0, 1)]) - 1.0).abs() < 1e-15);
        assert!((at(&[(1, 0)]) - 0.5).abs() < 1e-15);
        assert_eq!(at(&[(0, 0)]), 0.0);
        assert_eq!(at(&[(1, 1)]), 0.0);
        let mean_top = expectation(&top.pi, &f).unwrap();
        let mean_one = expectation(&l1.pi, &g).unwrap();
        assert!((mean_top - mean_one).abs() < 1e-12);
        let constant = c.project(1, &[2.0; 3]).unwrap();
        assert!(constant.iter().all(|x| (x - 2.0).abs() < 1e-15));
    }

    #[test]
    fn conditional_levels() {
        let c = complex(&Graph::path(3), q(1, 1));
        for &eta in &c.level(1).unwrap().faces {
            let (rho, probs) = c.conditional_level(eta, 1).unwrap();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let w = c.local_walk(eta).unwrap();
            let pi = w.kernel.stationary.as_ref().unwrap();
            let elements: Vec<usize> = rho.iter().map(|r| r.trailing_zeros() as usize).collect();
            assert_eq!(elements, w.states);
            for (a, b) in probs.iter().zip(pi) {
                assert!((a - b).abs() < 1e-15);
            }
            let (_, p2) = c.conditional_level(eta, 2).unwrap();
            assert!((p2.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn state_labels() {
        let c = complex(&Graph::path(2), q(1, 1));
        assert_eq!(
            c.state_index_json(2).unwrap(),
            r#"["{0=0,1=0}","{0=0,1=1}","{0=1,1=0}"]"#
        );
    }
}
