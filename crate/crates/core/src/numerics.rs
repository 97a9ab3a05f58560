//! Dense linear algebra: a row-major matrix type, a cyclic Jacobi
//! eigensolver for symmetric matrices, and spectra/gaps of reversible
//! kernels obtained through the `D^{1/2} P D^{-1/2}` similarity.

use std::fmt::Write as _;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Off-diagonal Frobenius threshold for the Jacobi iteration.
pub const JACOBI_TOLERANCE: f64 = 1e-13;
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Largest asymmetry accepted by [`sym_eigen`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;
/// Largest detailed-balance residual accepted by [`reversible_spectrum`].
pub const REVERSIBILITY_TOLERANCE: f64 = 1e-10;
/// Eigenvalues this close to 1 count as a repeated top eigenvalue.
pub const REDUCIBILITY_TOLERANCE: f64 = 1e-8;
const SNAP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    expected: c,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(r, c, data)
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite entry {bad}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: v.len(),
            });
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Row vector times matrix.
    pub fn vec_mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: v.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (r, &x) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += x * a;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                got: other.rows * other.cols,
            });
        }
        Ok(())
    }

    /// Entrywise max |a - b|; infinite when shapes differ.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn symmetry_residual(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().sum()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let line: Vec<String> = self.row(r).iter().map(|x| format!("{x:e}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Real spectrum sorted descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Asymmetry removed before decomposing (zero for exactly symmetric input).
    pub max_imag_residual: f64,
}

impl Spectrum {
    pub fn new(mut eigenvalues: Vec<f64>, max_imag_residual: f64) -> Self {
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Self {
            eigenvalues,
            max_imag_residual,
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max(&self) -> Option<f64> {
        self.eigenvalues.first().copied()
    }

    pub fn min(&self) -> Option<f64> {
        self.eigenvalues.last().copied()
    }

    pub fn sum(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.eigenvalues).expect("finite floats serialize")
    }
}

/// Eigenvalues (descending) and orthonormal eigenvectors stored as matrix columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl SymmetricEigen {
    pub fn vector(&self, idx: usize) -> Vec<f64> {
        (0..self.vectors.rows()).map(|r| self.vectors[(r, idx)]).collect()
    }
}

/// Cyclic Jacobi eigendecomposition of the symmetric part `(A + Aᵀ)/2`.
pub fn sym_eigen_full(matrix: &DenseMatrix) -> Result<SymmetricEigen> {
    if !matrix.is_square() {
        return Err(Error::DimensionMismatch {
            expected: matrix.rows(),
            got: matrix.cols(),
        });
    }
    let residual = matrix.symmetry_residual();
    if residual >= SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric { residual });
    }
    let n = matrix.rows();
    let mut a = matrix.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
    let mut v = DenseMatrix::identity(n);
    let scale = frobenius(&a).max(1.0);

    let mut converged = off_diagonal(&a) <= JACOBI_TOLERANCE * scale;
    let mut sweeps = 0;
    while !converged {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
        converged = off_diagonal(&a) <= JACOBI_TOLERANCE * scale;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(y, y)].total_cmp(&a[(x, x)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, new_col)] = v[(r, old_col)];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

fn rotate(a: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let n = a.rows();
    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

fn off_diagonal(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

fn frobenius(a: &DenseMatrix) -> f64 {
    a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sym_eigen(matrix: &DenseMatrix) -> Result<Spectrum> {
    let residual = matrix.symmetry_residual();
    let eig = sym_eigen_full(matrix)?;
    Ok(Spectrum::new(eig.values, if residual.is_finite() { residual } else { 0.0 }))
}

/// A row-stochastic matrix, possibly rectangular (level-changing operators),
/// with its stationary distribution when square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkKernel {
    pub matrix: DenseMatrix,
    pub stationary: Option<Vec<f64>>,
    pub reversible: bool,
}

impl WalkKernel {
    /// Wraps a square kernel; `reversible` is set from the detailed-balance residual.
    pub fn square(matrix: DenseMatrix, stationary: Vec<f64>) -> Self {
        let mut k = Self {
            matrix,
            stationary: Some(stationary),
            reversible: false,
        };
        k.reversible = k.detailed_balance_residual() <= REVERSIBILITY_TOLERANCE;
        k
    }

    pub fn operator(matrix: DenseMatrix) -> Self {
        Self {
            matrix,
            stationary: None,
            reversible: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Largest |row sum − 1|.
    pub fn stochasticity_residual(&self) -> f64 {
        self.matrix
            .row_sums()
            .iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.matrix.as_slice().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// max |π(x)P(x,y) − π(y)P(y,x)|; infinite for rectangular or unannotated kernels.
    pub fn detailed_balance_residual(&self) -> f64 {
        let Some(pi) = &self.stationary else {
            return f64::INFINITY;
        };
        if !self.matrix.is_square() || pi.len() != self.dim() {
            return f64::INFINITY;
        }
        let n = self.dim();
        let mut worst = 0.0f64;
        for x in 0..n {
            for y in (x + 1)..n {
                let d = (pi[x] * self.matrix[(x, y)] - pi[y] * self.matrix[(y, x)]).abs();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// max |πP − π|.
    pub fn stationarity_residual(&self) -> f64 {
        let Some(pi) = &self.stationary else {
            return f64::INFINITY;
        };
        match self.matrix.vec_mul(pi) {
            Ok(next) => next
                .iter()
                .zip(pi)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Symmetrized form `D^{1/2} P D^{-1/2}` of a reversible kernel.
fn symmetrize(kernel: &WalkKernel) -> Result<(DenseMatrix, Vec<f64>)> {
    let pi = kernel
        .stationary
        .as_ref()
        .ok_or(Error::NotReversible {
            residual: f64::INFINITY,
        })?;
    let residual = kernel.detailed_balance_residual();
    if residual > REVERSIBILITY_TOLERANCE {
        return Err(Error::NotReversible { residual });
    }
    if let Some(i) = pi.iter().position(|&p| p <= 0.0) {
        return Err(Error::ZeroStationaryMass(i));
    }
    let sq: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
    let n = kernel.dim();
    let mut s = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = sq[i] * kernel.matrix[(i, j)] / sq[j];
        }
    }
    Ok((s, sq))
}

pub fn reversible_spectrum(kernel: &WalkKernel) -> Result<Spectrum> {
    let (s, _) = symmetrize(kernel)?;
    sym_eigen(&s)
}

/// Eigenvalues of a reversible kernel with right eigenvectors `f = D^{-1/2} u`,
/// each normalized to unit variance under the stationary distribution.
pub fn reversible_eigen(kernel: &WalkKernel) -> Result<SymmetricEigen> {
    let (s, sq) = symmetrize(kernel)?;
    let eig = sym_eigen_full(&s)?;
    let n = kernel.dim();
    let mut vectors = DenseMatrix::zeros(n, n);
    for c in 0..n {
        for r in 0..n {
            vectors[(r, c)] = eig.vectors[(r, c)] / sq[r];
        }
    }
    Ok(SymmetricEigen {
        values: eig.values,
        vectors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    /// 1 − λ₂
    pub gamma: f64,
    /// 1 − λ_*
    pub absolute_gap: f64,
    /// max(λ₂, |λ_N|)
    pub lambda_star: f64,
    /// More than one eigenvalue within tolerance of 1.
    pub reducible: bool,
}

/// Gap quantities of a spectrum whose top eigenvalue is 1. A one-state
/// spectrum has no λ₂; its gap is reported as 1.
pub fn gap(spectrum: &Spectrum) -> Gap {
    let ev = &spectrum.eigenvalues;
    let lambda2 = ev.get(1).copied().unwrap_or(0.0);
    let lambda_min = ev.last().copied().unwrap_or(1.0);
    let lambda_star = if ev.len() < 2 {
        0.0
    } else {
        lambda2.max(lambda_min.abs())
    };
    let ones = ev
        .iter()
        .filter(|&&x| (x - 1.0).abs() <= REDUCIBILITY_TOLERANCE)
        .count();
    Gap {
        gamma: 1.0 - lambda2,
        absolute_gap: 1.0 - lambda_star,
        lambda_star,
        reducible: ones > 1,
    }
}

/// Rounds values within 1e-9 of 0 or ±1 onto those points. Only used for
/// classification decisions, never for reported numbers.
pub fn snap(x: f64) -> f64 {
    for target in [0.0, 1.0, -1.0] {
        if (x - target).abs() <= SNAP_TOLERANCE {
            return target;
        }
    }
    x
}

/// Max per-element deviation between two multisets after sorting, or `None`
/// when the sizes differ.
pub fn multiset_deviation(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    Some(
        x.iter()
            .zip(&y)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max),
    )
}

/// Dominant eigenvalue by power iteration. Used for cross-checks only.
pub fn power_iteration(matrix: &DenseMatrix, iterations: usize) -> f64 {
    let n = matrix.rows();
    if n == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * i as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let w = matrix.mul_vec(&v).expect("square matrix");
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
            / v.iter().map(|x| x * x).sum::<f64>();
        v = w.into_iter().map(|x| x / norm).collect();
    }
    lambda
}
