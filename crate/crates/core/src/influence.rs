//! Influence and covariance matrices under a pinning, and the
//! spectral-independence constant η.

use num_rational::BigRational;
use num_traits::{Num, One};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::{rational_to_f64, Caps, Pinning, SpinConfig, SpinSystem};
use crate::numerics::{sym_eigen, DenseMatrix, Spectrum};

/// Ψ_τ restricted to the free vertices of τ, together with the covariance
/// and single-site marginals it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    pub pinning: Pinning,
    pub free_vertices: Vec<usize>,
    /// Ψ_τ(i→j), indexed by positions in `free_vertices`.
    pub entries: DenseMatrix,
    pub covariance: DenseMatrix,
    /// μ_τ(σ(i)=1) for each free vertex.
    pub marginals: Vec<f64>,
    pub exact: Option<ExactInfluence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactInfluence {
    pub entries: Vec<Vec<BigRational>>,
    pub covariance: Vec<Vec<BigRational>>,
    pub marginals: Vec<BigRational>,
}

impl InfluenceMatrix {
    /// No free vertices: the matrix is empty and carries no information.
    pub fn is_degenerate(&self) -> bool {
        self.free_vertices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.free_vertices.len()
    }

    /// ‖Ψ_τ − D⁻¹Cov_τ‖_max in floating point.
    pub fn factorization_residual(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            let p = self.marginals[i];
            let di = p * (1.0 - p);
            for j in 0..d {
                let r = (self.entries[(i, j)] - self.covariance[(i, j)] / di).abs();
                worst = worst.max(r);
            }
        }
        worst
    }

    /// Exact check of Ψ_τ = D⁻¹Cov_τ; `None` when there is no exact data.
    pub fn factorization_exact(&self) -> Option<bool> {
        let ex = self.exact.as_ref()?;
        let one = BigRational::one();
        Some(ex.marginals.iter().enumerate().all(|(i, p)| {
            let di = p * (&one - p);
            (0..self.dim()).all(|j| ex.entries[i][j] == &ex.covariance[i][j] / &di)
        }))
    }

    /// The symmetric matrix D^{-1/2} Cov D^{-1/2}, similar to Ψ_τ.
    pub fn symmetrized(&self) -> Result<DenseMatrix> {
        let d = self.dim();
        let mut scale = Vec::with_capacity(d);
        for (i, &p) in self.marginals.iter().enumerate() {
            let di = p * (1.0 - p);
            if !(di > 0.0) {
                return Err(Error::Degenerate(format!(
                    "free vertex {} has a deterministic marginal",
                    self.free_vertices[i]
                )));
            }
            scale.push(di.sqrt());
        }
        let mut s = DenseMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                s[(i, j)] = self.covariance[(i, j)] / (scale[i] * scale[j]);
            }
        }
        Ok(s)
    }

    /// D⁻¹Cov as a plain (non-symmetric) matrix.
    pub fn normalized_covariance(&self) -> DenseMatrix {
        let d = self.dim();
        let mut m = DenseMatrix::zeros(d, d);
        for i in 0..d {
            let p = self.marginals[i];
            for j in 0..d {
                m[(i, j)] = self.covariance[(i, j)] / (p * (1.0 - p));
            }
        }
        m
    }
}

/// Masses accumulated over the configurations extending a pinning:
/// total, per-vertex ones, and pairwise joint ones.
fn accumulate<T: Clone + Num>(
    support: &[SpinConfig],
    weights: &[T],
    pinning: &Pinning,
    free: &[usize],
) -> (T, Vec<T>, Vec<Vec<T>>) {
    let d = free.len();
    let mut total = T::zero();
    let mut ones = vec![T::zero(); d];
    let mut both = vec![vec![T::zero(); d]; d];
    for (c, w) in support.iter().zip(weights) {
        if !pinning.is_extended_by(*c) {
            continue;
        }
        total = total + w.clone();
        for (i, &vi) in free.iter().enumerate() {
            if c.spin(vi) == 0 {
                continue;
            }
            ones[i] = ones[i].clone() + w.clone();
            for (j, &vj) in free.iter().enumerate() {
                if c.spin(vj) == 1 {
                    both[i][j] = both[i][j].clone() + w.clone();
                }
            }
        }
    }
    (total, ones, both)
}

type Parts<T> = (Vec<Vec<T>>, Vec<Vec<T>>, Vec<T>);

/// Ψ, Cov and marginals over any exact or floating scalar type.
fn influence_parts<T: Clone + Num>(
    support: &[SpinConfig],
    weights: &[T],
    pinning: &Pinning,
    free: &[usize],
) -> Parts<T> {
    let (total, ones, both) = accumulate(support, weights, pinning, free);
    let d = free.len();
    let marginals: Vec<T> = ones.iter().map(|o| o.clone() / total.clone()).collect();
    let mut psi = vec![vec![T::zero(); d]; d];
    let mut cov = vec![vec![T::zero(); d]; d];
    for i in 0..d {
        let zeros_i = total.clone() - ones[i].clone();
        for j in 0..d {
            let given_one = both[i][j].clone() / ones[i].clone();
            let given_zero = (ones[j].clone() - both[i][j].clone()) / zeros_i.clone();
            psi[i][j] = if i == j { T::one() } else { given_one - given_zero };
            cov[i][j] = both[i][j].clone() / total.clone()
                - marginals[i].clone() * marginals[j].clone();
        }
    }
    (psi, cov, marginals)
}

fn to_dense(rows: &[Vec<f64>]) -> DenseMatrix {
    let d = rows.len();
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    DenseMatrix::from_vec(d, d, data).unwrap_or_else(|_| DenseMatrix::zeros(d, d))
}

/// Ψ_τ over the free vertices of τ. Frozen vertices are dropped, one row and
/// column each. Exact rational entries are computed when the system has them.
pub fn influence_matrix(system: &SpinSystem, pinning: &Pinning) -> Result<InfluenceMatrix> {
    let (free, _) = system.free_frozen_split(pinning)?;
    let (entries, covariance, marginals, exact) = match system.exact_probs() {
        Some(weights) => {
            let (psi, cov, marg) = influence_parts(system.support(), weights, pinning, &free);
            let conv = |m: &Vec<Vec<BigRational>>| -> Vec<Vec<f64>> {
                m.iter().map(|r| r.iter().map(rational_to_f64).collect()).collect()
            };
            (
                to_dense(&conv(&psi)),
                to_dense(&conv(&cov)),
                marg.iter().map(rational_to_f64).collect(),
                Some(ExactInfluence {
                    entries: psi,
                    covariance: cov,
                    marginals: marg,
                }),
            )
        }
        None => {
            let (psi, cov, marg) =
                influence_parts(system.support(), system.probs(), pinning, &free);
            (to_dense(&psi), to_dense(&cov), marg, None)
        }
    };
    Ok(InfluenceMatrix {
        pinning: *pinning,
        free_vertices: free,
        entries,
        covariance,
        marginals,
        exact,
    })
}

/// Cov_τ over the free vertices of τ.
pub fn covariance_matrix(system: &SpinSystem, pinning: &Pinning) -> Result<DenseMatrix> {
    Ok(influence_matrix(system, pinning)?.covariance)
}

/// Real spectrum of Ψ_τ via the symmetric similarity D^{-1/2} Cov D^{-1/2}.
pub fn influence_spectrum(psi: &InfluenceMatrix) -> Result<Spectrum> {
    if psi.is_degenerate() {
        return Ok(Spectrum::new(Vec::new(), 0.0));
    }
    sym_eigen(&psi.symmetrized()?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PinningEigen {
    pub pinning: Pinning,
    pub free: usize,
    pub lambda_max: f64,
    pub lambda_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SIReport {
    pub eta: f64,
    pub b: f64,
    pub witness_pinning: Option<Pinning>,
    /// Largest λ_max(Ψ_τ) at each level, `None` when no pinning of that level
    /// has two free vertices.
    pub per_level_max: Vec<Option<f64>>,
    pub per_pinning: Vec<PinningEigen>,
}

impl SIReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// η = max over valid pinnings with at least two free vertices of
/// λ_max(Ψ_τ) − 1, clamped at 0, together with the marginal bound b.
pub fn spectral_independence(system: &SpinSystem, caps: &Caps) -> Result<SIReport> {
    let mut per_pinning = Vec::new();
    let mut per_level_max = Vec::with_capacity(system.n() + 1);
    for k in 0..=system.n() {
        let pinnings = system.enumerate_pinnings(k, caps)?;
        let level: Vec<PinningEigen> = pinnings
            .par_iter()
            .map(|p| {
                let psi = influence_matrix(system, p)?;
                let spec = influence_spectrum(&psi)?;
                Ok(PinningEigen {
                    pinning: *p,
                    free: psi.dim(),
                    lambda_max: spec.max().unwrap_or(1.0),
                    lambda_min: spec.min().unwrap_or(1.0),
                })
            })
            .collect::<Result<_>>()?;
        per_level_max.push(
            level
                .iter()
                .filter(|e| e.free >= 2)
                .map(|e| e.lambda_max)
                .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x)))),
        );
        per_pinning.extend(level);
    }
    let mut eta = 0.0;
    let mut witness = None;
    for e in per_pinning.iter().filter(|e| e.free >= 2) {
        if e.lambda_max - 1.0 > eta || witness.is_none() && e.lambda_max - 1.0 >= eta {
            eta = (e.lambda_max - 1.0).max(0.0);
            witness = Some(e.pinning);
        }
    }
    Ok(SIReport {
        eta,
        b: system.marginal_bound(caps)?,
        witness_pinning: witness,
        per_level_max,
        per_pinning,
    })
}

/// Checks that a rational square matrix has exactly 1 on its diagonal.
pub fn unit_diagonal(entries: &[Vec<BigRational>]) -> bool {
    entries.iter().enumerate().all(|(i, r)| r[i].is_one())
}

/// Checks that every rational entry lies in [−1, 1].
pub fn entries_bounded(entries: &[Vec<BigRational>]) -> bool {
    let one = BigRational::one();
    let minus_one = -one.clone();
    entries.iter().flatten().all(|x| x <= &one && x >= &minus_one)
}
