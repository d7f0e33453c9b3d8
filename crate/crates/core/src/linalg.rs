//! Dense and sparse matrix kernels.
//!
//! Everything is `f64`. Dense matrices are row-major; sparse matrices are a
//! coordinate list kept in canonical `(row, col)` order with a row index on
//! the side so products can walk rows directly.
//!
//! Parallel kernels split work by output row only, so every output entry is
//! accumulated by one thread in a fixed order and results do not depend on
//! the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Work (multiply-adds) below which products stay on the calling thread.
const PAR_THRESHOLD: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenseRepr")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct DenseRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<DenseRepr> for DenseMatrix {
    type Error = Error;

    fn try_from(r: DenseRepr) -> Result<Self> {
        DenseMatrix::from_vec(r.rows, r.cols, r.data)
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "buffer of length {} cannot hold a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite matrix entry {bad}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for (j, &v) in self.row(i).iter().enumerate() {
                out.data[j * self.rows + i] = v;
            }
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(shape_mismatch("matmul", self.shape(), other.shape()));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        gemm(self.rows, self.cols, other.cols, &self.data, &other.data, &mut out.data);
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn matmul_tn(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows {
            return Err(shape_mismatch("matmul_tn", self.shape(), other.shape()));
        }
        self.transpose().matmul(other)
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.cols {
            return Err(shape_mismatch("matmul_nt", self.shape(), other.shape()));
        }
        self.matmul(&other.transpose())
    }

    pub fn frobenius_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    /// Entrywise inner product `Σ a_ij b_ij`.
    pub fn frobenius_dot(&self, other: &DenseMatrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(shape_mismatch("frobenius_dot", self.shape(), other.shape()));
        }
        Ok(dot(&self.data, &other.data))
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &DenseMatrix, scale: f64) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_mismatch("add_scaled", self.shape(), other.shape()));
        }
        axpy(&mut self.data, scale, &other.data);
        Ok(())
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = self.clone();
        out.add_scaled(other, -1.0)?;
        Ok(out)
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    /// Index of the largest entry in column `j`; ties resolve to the lowest row.
    pub fn column_argmax(&self, j: usize) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for i in 0..self.rows {
            let v = self.get(i, j);
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        best
    }
}

/// Product of a non-empty chain of matrices, evaluated right to left.
pub fn chain_product(factors: &[&DenseMatrix]) -> Result<DenseMatrix> {
    let (last, rest) = factors
        .split_last()
        .ok_or_else(|| Error::Shape("empty matrix chain".into()))?;
    let mut acc = (*last).clone();
    for f in rest.iter().rev() {
        acc = f.matmul(&acc)?;
    }
    Ok(acc)
}

pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    a.matmul(b)
}

pub fn frobenius_sq(m: &DenseMatrix) -> f64 {
    m.frobenius_sq()
}

pub fn spmm(a: &SparseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    a.spmm(b)
}

/// `tr(V L Vᵀ)` for `V` of shape r×n and a square sparse `L` of size n.
///
/// Evaluated as `Σ_{(i,j,l)∈L} l·⟨V(:,i), V(:,j)⟩`, so memory stays O(n·r).
pub fn trace_quadratic(v: &DenseMatrix, l: &SparseMatrix) -> Result<f64> {
    if l.rows != l.cols || v.cols != l.rows {
        return Err(shape_mismatch("trace_quadratic", v.shape(), l.shape()));
    }
    let vt = v.transpose();
    let mut total = 0.0;
    for i in 0..l.rows {
        let vi = vt.row(i);
        let mut row_acc = 0.0;
        for &(_, j, w) in l.row_entries(i) {
            row_acc += w * dot(vi, vt.row(j));
        }
        total += row_acc;
    }
    Ok(total)
}

/// Sparse matrix in canonical coordinate form.
///
/// Entries are sorted by `(row, col)`, unique, in range, and nonzero.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "SparseRepr", into = "SparseRepr")]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
    row_ptr: Vec<usize>,
}

impl PartialEq for SparseMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.entries == other.entries
    }
}

#[derive(Serialize, Deserialize)]
struct SparseRepr {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TryFrom<SparseRepr> for SparseMatrix {
    type Error = Error;

    fn try_from(r: SparseRepr) -> Result<Self> {
        SparseMatrix::from_triplets(r.rows, r.cols, r.entries)
    }
}

impl From<SparseMatrix> for SparseRepr {
    fn from(m: SparseMatrix) -> Self {
        SparseRepr {
            rows: m.rows,
            cols: m.cols,
            entries: m.entries,
        }
    }
}

impl SparseMatrix {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
            row_ptr: vec![0; rows + 1],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
            .expect("identity triplets are valid")
    }

    /// Builds the canonical form. Duplicate coordinates are summed and
    /// entries that end up exactly zero are dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(i, j, v) in &triplets {
            if i >= rows || j >= cols {
                return Err(Error::Shape(format!(
                    "entry ({i}, {j}) outside a {rows}x{cols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Domain(format!("non-finite entry at ({i}, {j})")));
            }
        }
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (i, j, v) in triplets {
            match entries.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => entries.push((i, j, v)),
            }
        }
        entries.retain(|e| e.2 != 0.0);
        let mut row_ptr = vec![0usize; rows + 1];
        for &(i, _, _) in &entries {
            row_ptr[i + 1] += 1;
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            rows,
            cols,
            entries,
            row_ptr,
        })
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut t = Vec::new();
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.rows(), m.cols(), t).expect("dense source is in range")
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn row_entries(&self, i: usize) -> &[(usize, usize, f64)] {
        &self.entries[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = self.row_entries(i);
        row.binary_search_by(|e| e.1.cmp(&j)).map_or(0.0, |k| row[k].2)
    }

    pub fn densify(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for &(i, j, v) in &self.entries {
            out.set(i, j, v);
        }
        out
    }

    pub fn transpose(&self) -> SparseMatrix {
        let t = self.entries.iter().map(|&(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.cols, self.rows, t).expect("transpose stays in range")
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && self.entries.iter().all(|&(i, j, v)| self.get(j, i) == v)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row_entries(i).iter().map(|e| e.2).sum())
            .collect()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|e| e.2 * e.2).sum()
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.entries.iter().all(|e| e.2 >= 0.0)
    }

    /// `self · b`.
    pub fn spmm(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != b.rows() {
            return Err(shape_mismatch("spmm", self.shape(), b.shape()));
        }
        let n = b.cols();
        let mut out = DenseMatrix::zeros(self.rows, n);
        if n == 0 {
            return Ok(out);
        }
        let kernel = |(i, out_row): (usize, &mut [f64])| {
            for &(_, j, v) in self.row_entries(i) {
                axpy(out_row, v, b.row(j));
            }
        };
        if self.nnz() * n >= PAR_THRESHOLD {
            out.as_mut_slice().par_chunks_mut(n).enumerate().for_each(kernel);
        } else {
            out.as_mut_slice().chunks_mut(n).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// `selfᵀ · b`.
    pub fn t_spmm(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != b.rows() {
            return Err(shape_mismatch("t_spmm", self.shape(), b.shape()));
        }
        let mut out = DenseMatrix::zeros(self.cols, b.cols());
        for &(i, j, v) in &self.entries {
            axpy(out.row_mut(j), v, b.row(i));
        }
        Ok(out)
    }
}

/// A data matrix that is either dense or sparse. Factorization targets
/// (adjacency, attributes, intermediate representations) use this type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMatrix {
    Dense(DenseMatrix),
    Sparse(SparseMatrix),
}

impl From<DenseMatrix> for DataMatrix {
    fn from(m: DenseMatrix) -> Self {
        DataMatrix::Dense(m)
    }
}

impl From<SparseMatrix> for DataMatrix {
    fn from(m: SparseMatrix) -> Self {
        DataMatrix::Sparse(m)
    }
}

impl DataMatrix {
    pub fn rows(&self) -> usize {
        match self {
            DataMatrix::Dense(m) => m.rows(),
            DataMatrix::Sparse(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            DataMatrix::Dense(m) => m.cols(),
            DataMatrix::Sparse(m) => m.cols(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            DataMatrix::Dense(m) => m.clone(),
            DataMatrix::Sparse(m) => m.densify(),
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        match self {
            DataMatrix::Dense(m) => m.frobenius_sq(),
            DataMatrix::Sparse(m) => m.frobenius_sq(),
        }
    }

    pub fn mean(&self) -> f64 {
        let total = match self {
            DataMatrix::Dense(m) => m.sum(),
            DataMatrix::Sparse(m) => m.sum(),
        };
        let count = self.rows() * self.cols();
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            DataMatrix::Dense(m) => m.is_nonnegative(),
            DataMatrix::Sparse(m) => m.is_nonnegative(),
        }
    }

    /// `self · b`.
    pub fn mul(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            DataMatrix::Dense(m) => m.matmul(b),
            DataMatrix::Sparse(m) => m.spmm(b),
        }
    }

    /// `self · bᵀ`.
    pub fn mul_t(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            DataMatrix::Dense(m) => m.matmul_nt(b),
            DataMatrix::Sparse(m) => {
                if m.cols() != b.cols() {
                    return Err(shape_mismatch("mul_t", m.shape(), b.shape()));
                }
                m.spmm(&b.transpose())
            }
        }
    }

    /// `selfᵀ · b`.
    pub fn t_mul(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            DataMatrix::Dense(m) => m.matmul_tn(b),
            DataMatrix::Sparse(m) => m.t_spmm(b),
        }
    }

    /// `‖self − f·v‖²_F` for a tall basis `f` and a wide coefficient matrix `v`.
    ///
    /// Sparse targets never materialize the full residual: the error splits
    /// into the residual on the support plus `‖f·v‖²` off the support, and
    /// the latter is `⟨fᵀf, v·vᵀ⟩` minus the on-support squares.
    pub fn residual_sq(&self, f: &DenseMatrix, v: &DenseMatrix) -> Result<f64> {
        self.residual_sq_with(f, v, None)
    }

    /// `residual_sq` reusing precomputed `fᵀf` and `v·vᵀ` for sparse targets.
    pub(crate) fn residual_sq_with(
        &self,
        f: &DenseMatrix,
        v: &DenseMatrix,
        grams: Option<(&DenseMatrix, &DenseMatrix)>,
    ) -> Result<f64> {
        if f.rows() != self.rows() || v.cols() != self.cols() || f.cols() != v.rows() {
            return Err(Error::Shape(format!(
                "residual of {:?} against {:?}·{:?}",
                self.shape(),
                f.shape(),
                v.shape()
            )));
        }
        match self {
            DataMatrix::Dense(m) => {
                let recon = f.matmul(v)?;
                Ok(m.sub(&recon)?.frobenius_sq())
            }
            DataMatrix::Sparse(m) => {
                let vt = v.transpose();
                let mut on_support = 0.0;
                let mut recon_on_support = 0.0;
                for &(i, j, t) in m.entries() {
                    let p = dot(f.row(i), vt.row(j));
                    on_support += (t - p) * (t - p);
                    recon_on_support += p * p;
                }
                let recon_total = match grams {
                    Some((gram_f, gram_v)) => gram_f.frobenius_dot(gram_v)?,
                    None => f.matmul_tn(f)?.frobenius_dot(&v.matmul_nt(v)?)?,
                };
                Ok(on_support + (recon_total - recon_on_support).max(0.0))
            }
        }
    }
}

const MR: usize = 4;
const NR: usize = 4;
const KC: usize = 256;
const NC: usize = 256;

/// `out += a · b` for row-major `a` (m×k), `b` (k×n) and `out` (m×n).
///
/// `b` is packed panel by panel into NR-wide column strips; each MR×NR
/// output tile is accumulated in registers. Every output entry sums its
/// products in the same order regardless of threading.
fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let parallel = m * k * n >= PAR_THRESHOLD;
    let zeros = vec![0.0; KC.min(k)];
    let mut packed = Vec::new();
    for jc in (0..n).step_by(NC) {
        let nc = NC.min(n - jc);
        let strips = nc.div_ceil(NR);
        for pc in (0..k).step_by(KC) {
            let kc = KC.min(k - pc);
            packed.clear();
            packed.resize(strips * kc * NR, 0.0);
            for kk in 0..kc {
                let row = &b[(pc + kk) * n + jc..(pc + kk) * n + jc + nc];
                for (c, &v) in row.iter().enumerate() {
                    packed[((c / NR) * kc + kk) * NR + c % NR] = v;
                }
            }
            let packed = &packed;
            let zeros = &zeros[..kc];
            let block = |(ib, out_block): (usize, &mut [f64])| {
                let i0 = ib * MR;
                let rows = out_block.len() / n;
                let a_rows: [&[f64]; MR] = std::array::from_fn(|r| {
                    if r < rows {
                        &a[(i0 + r) * k + pc..(i0 + r) * k + pc + kc]
                    } else {
                        zeros
                    }
                });
                for s in 0..strips {
                    let bp = &packed[s * kc * NR..(s + 1) * kc * NR];
                    let mut acc = [[0.0f64; NR]; MR];
                    for (kk, bv) in bp.chunks_exact(NR).enumerate() {
                        for r in 0..MR {
                            let av = a_rows[r][kk];
                            for c in 0..NR {
                                acc[r][c] += av * bv[c];
                            }
                        }
                    }
                    let j = jc + s * NR;
                    let w = NR.min(jc + nc - j);
                    for (r, acc_row) in acc.iter().enumerate().take(rows) {
                        for (o, &v) in out_block[r * n + j..r * n + j + w].iter_mut().zip(acc_row) {
                            *o += v;
                        }
                    }
                }
            };
            if parallel {
                out.par_chunks_mut(MR * n).enumerate().for_each(block);
            } else {
                out.chunks_mut(MR * n).enumerate().for_each(block);
            }
        }
    }
}

pub(crate) fn shape_mismatch(op: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Shape(format!(
        "{op}: left operand is {}x{}, right operand is {}x{}",
        a.0, a.1, b.0, b.1
    ))
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let k = c * 4;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in chunks * 4..n {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
