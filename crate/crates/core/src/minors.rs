//! Second-order minor matrices of a tensor and their factor form.
//!
//! Two pair enumerations are used everywhere:
//!
//! * strict pairs `n1 < n2` are ordered `(0,1), (0,2), (1,2), (0,3), ...`,
//!   index `n1 + n2 (n2 - 1) / 2`; they index rows of `Q2`/`R2`, wedge
//!   products and compound matrices;
//! * symmetric pairs `k1 <= k2` are ordered row by row through the upper
//!   triangle, `(0,0), (0,1), ..., (0,n-1), (1,1), ...`; they index columns
//!   of `Q2`, `P_K`, `D`, `S2` and symmetric products.
//!
//! With these orders `R2 = Q2 P_K^T` and the factor identity `Q2 = Phi S2^T`
//! hold entry for entry.

use nalgebra::DMatrix;

use crate::decomposition::BlockTermDecomposition;
use crate::error::{invalid, Result};
use crate::linalg::{self, binom};
use crate::scalar::{Ring, Scalar};
use crate::tensor::Tensor3;

/// Position of the strict pair `n1 < n2`.
#[inline]
pub fn pair_index(n1: usize, n2: usize) -> usize {
    debug_assert!(n1 < n2);
    n1 + n2 * (n2 - 1) / 2
}

/// All strict pairs of `0..n` in [`pair_index`] order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (1..n).flat_map(|n2| (0..n2).map(move |n1| (n1, n2))).collect()
}

/// Position of the symmetric pair `k1 <= k2` among the pairs of `0..n`.
#[inline]
pub fn sym_pair_index(n: usize, k1: usize, k2: usize) -> usize {
    debug_assert!(k1 <= k2 && k2 < n);
    k1 * (2 * n - k1 + 1) / 2 + (k2 - k1)
}

/// All symmetric pairs of `0..n` in [`sym_pair_index`] order.
pub fn sym_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|k1| (k1..n).map(move |k2| (k1, k2))).collect()
}

/// `x ^ y`: the 2x2 minors of `[x y]`.
pub fn wedge<T: Ring>(x: &[T], y: &[T]) -> Result<Vec<T>> {
    if x.len() != y.len() {
        return Err(invalid("wedge product of vectors of different length"));
    }
    Ok(pairs(x.len()).into_iter().map(|(a, b)| x[a] * y[b] - x[b] * y[a]).collect())
}

/// Symmetric product: the 2x2 permanents of `[x y]`, doubled on the diagonal.
pub fn symprod<T: Ring>(x: &[T], y: &[T]) -> Result<Vec<T>> {
    if x.len() != y.len() {
        return Err(invalid("symmetric product of vectors of different length"));
    }
    Ok(sym_pairs(x.len()).into_iter().map(|(a, b)| x[a] * y[b] + x[b] * y[a]).collect())
}

fn column_products<T: Ring>(
    x: &DMatrix<T>,
    y: &DMatrix<T>,
    rows: usize,
    f: fn(&[T], &[T]) -> Result<Vec<T>>,
) -> Result<DMatrix<T>> {
    if x.nrows() != y.nrows() {
        return Err(invalid("block products need matrices with the same number of rows"));
    }
    let mut out = DMatrix::zeros(rows, x.ncols() * y.ncols());
    for l1 in 0..x.ncols() {
        let xc: Vec<T> = x.column(l1).iter().copied().collect();
        for l2 in 0..y.ncols() {
            let yc: Vec<T> = y.column(l2).iter().copied().collect();
            let v = f(&xc, &yc)?;
            out.column_mut(l1 * y.ncols() + l2).copy_from_slice(&v);
        }
    }
    Ok(out)
}

/// `[x_1 ^ y_1, x_1 ^ y_2, ..., x_m ^ y_n]`.
pub fn wedge_block<T: Ring>(x: &DMatrix<T>, y: &DMatrix<T>) -> Result<DMatrix<T>> {
    column_products(x, y, binom(x.nrows(), 2), wedge)
}

/// `[x_1 . y_1, x_1 . y_2, ..., x_m . y_n]` with `.` the symmetric product.
pub fn symprod_block<T: Ring>(x: &DMatrix<T>, y: &DMatrix<T>) -> Result<DMatrix<T>> {
    column_products(x, y, binom(x.nrows() + 1, 2), symprod)
}

/// Second compound matrix: all 2x2 minors, rows and columns in strict-pair order.
pub fn compound2<T: Ring>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    if m.nrows() < 2 || m.ncols() < 2 {
        return Err(invalid("second compound needs at least two rows and two columns"));
    }
    let rp = pairs(m.nrows());
    let cp = pairs(m.ncols());
    Ok(DMatrix::from_fn(rp.len(), cp.len(), |r, c| {
        let ((i1, i2), (j1, j2)) = (rp[r], cp[c]);
        m[(i1, j1)] * m[(i2, j2)] - m[(i1, j2)] * m[(i2, j1)]
    }))
}

/// `P_n`: the `n^2 x C(n+1,2)` 0/1 matrix with `P_n (x . y) = x (x) y + y (x) x`.
pub fn build_pk<T: Ring>(n: usize) -> DMatrix<T> {
    let mut p = DMatrix::zeros(n * n, binom(n + 1, 2));
    for k1 in 0..n {
        for k2 in 0..n {
            p[(k2 * n + k1, sym_pair_index(n, k1.min(k2), k1.max(k2)))] = T::one();
        }
    }
    p
}

/// `D = P_n (P_n^T P_n)^{-1}`: entries 1 for diagonal pairs and 1/2 otherwise.
pub fn build_d<T: Scalar>(n: usize) -> DMatrix<T> {
    let mut d = DMatrix::zeros(n * n, binom(n + 1, 2));
    for k1 in 0..n {
        for k2 in 0..n {
            let w = if k1 == k2 { 1.0 } else { 0.5 };
            d[(k2 * n + k1, sym_pair_index(n, k1.min(k2), k1.max(k2)))] = T::from_real(w);
        }
    }
    d
}

fn check_minor_dims(dims: [usize; 3]) -> Result<()> {
    if dims[0] < 2 || dims[1] < 2 {
        return Err(invalid(format!("minor matrices need I >= 2 and J >= 2, got {}x{}", dims[0], dims[1])));
    }
    Ok(())
}

/// `Q2` of the tensor with entries `get(i, j, k)`, over any ring.
///
/// Row `(i1<i2, j1<j2)` at `pair_index(i1,i2) * C(J,2) + pair_index(j1,j2)`,
/// column `(k1<=k2)`, entry
/// `t[i1j1k1] t[i2j2k2] + t[i1j1k2] t[i2j2k1] - t[i1j2k1] t[i2j1k2] - t[i1j2k2] t[i2j1k1]`.
pub fn build_q2_from_fn<T: Ring>(dims: [usize; 3], get: impl Fn(usize, usize, usize) -> T) -> Result<DMatrix<T>> {
    check_minor_dims(dims)?;
    let [ni, nj, nk] = dims;
    let ip = pairs(ni);
    let jp = pairs(nj);
    let kp = sym_pairs(nk);
    let njp = jp.len();
    let mut q = DMatrix::zeros(ip.len() * njp, kp.len());
    for (a, &(i1, i2)) in ip.iter().enumerate() {
        for (b, &(j1, j2)) in jp.iter().enumerate() {
            let row = a * njp + b;
            for (c, &(k1, k2)) in kp.iter().enumerate() {
                q[(row, c)] = get(i1, j1, k1) * get(i2, j2, k2) + get(i1, j1, k2) * get(i2, j2, k1)
                    - get(i1, j2, k1) * get(i2, j1, k2)
                    - get(i1, j2, k2) * get(i2, j1, k1);
            }
        }
    }
    Ok(q)
}

pub fn build_q2<T: Scalar>(t: &Tensor3<T>) -> Result<DMatrix<T>> {
    build_q2_from_fn(t.dims(), |i, j, k| t.get(i, j, k))
}

/// `R2`, whose column `k2*K + k1` holds the same symmetric 4-product form
/// as `Q2` so that `R2 (f (x) f)` is twice the vector of 2x2 minors of
/// `sum_k f_k T_k`.
pub fn build_r2_from_fn<T: Ring>(dims: [usize; 3], get: impl Fn(usize, usize, usize) -> T) -> Result<DMatrix<T>> {
    let q = build_q2_from_fn(dims, get)?;
    let nk = dims[2];
    // Column selection equivalent to Q2 P_K^T.
    Ok(DMatrix::from_fn(q.nrows(), nk * nk, |row, c| q[(row, sym_pair_index(nk, (c % nk).min(c / nk), (c % nk).max(c / nk)))]))
}

pub fn build_r2<T: Scalar>(t: &Tensor3<T>) -> Result<DMatrix<T>> {
    build_r2_from_fn(t.dims(), |i, j, k| t.get(i, j, k))
}

/// `Q2(T)` together with its companions.
#[derive(Debug, Clone)]
pub struct MinorMatrixSet<T: Scalar> {
    pub q2: DMatrix<T>,
    pub r2: Option<DMatrix<T>>,
    pub pk: DMatrix<T>,
    pub d: DMatrix<T>,
}

impl<T: Scalar> MinorMatrixSet<T> {
    pub fn new(t: &Tensor3<T>, with_r2: bool) -> Result<Self> {
        let q2 = build_q2(t)?;
        let nk = t.dims()[2];
        let pk = build_pk::<T>(nk);
        let r2 = with_r2.then(|| &q2 * pk.transpose());
        Ok(MinorMatrixSet { q2, r2, pk, d: build_d(nk) })
    }

    /// Orthonormal basis of `null(Q2)`.
    pub fn q2_null_space(&self, tol: f64) -> DMatrix<T> {
        linalg::null_space(&self.q2, tol)
    }

    /// Symmetric null vectors of `R2`: `D` times a null-space basis of `Q2`.
    pub fn r2_symmetric_null_space(&self, tol: f64) -> DMatrix<T> {
        &self.d * self.q2_null_space(tol)
    }
}

/// `Phi(A,B)` and `S2(C)` with `Q2(T) = Phi S2^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMinorForm<T: nalgebra::Scalar> {
    pub phi: DMatrix<T>,
    pub s2: DMatrix<T>,
}

/// Column block `(r1<r2)` of `Phi` is `(a_r1 ^ a_r2) (x) (B_r1 ^ B_r2)` and
/// of `S2` is `C_r1 . C_r2`; blocks are ordered `(0,1), (0,2), ..., (1,2), ...`.
pub fn phi_s2_from_factors<T: Ring>(a: &DMatrix<T>, bs: &[DMatrix<T>], cs: &[DMatrix<T>]) -> Result<FactorMinorForm<T>> {
    let r = a.ncols();
    if bs.len() != r || cs.len() != r {
        return Err(invalid("one B block and one C block per column of A are required"));
    }
    let (ni, nj, nk) = (a.nrows(), bs.first().map_or(0, |b| b.nrows()), cs.first().map_or(0, |c| c.nrows()));
    let mut phis = Vec::new();
    let mut s2s = Vec::new();
    for r1 in 0..r {
        for r2 in r1 + 1..r {
            let aw: Vec<T> = wedge(
                &a.column(r1).iter().copied().collect::<Vec<_>>(),
                &a.column(r2).iter().copied().collect::<Vec<_>>(),
            )?;
            let aw = DMatrix::from_column_slice(aw.len(), 1, &aw);
            phis.push(linalg::kron(&aw, &wedge_block(&bs[r1], &bs[r2])?));
            s2s.push(symprod_block(&cs[r1], &cs[r2])?);
        }
    }
    Ok(FactorMinorForm {
        phi: hstack_ring(binom(ni, 2) * binom(nj, 2), &phis),
        s2: hstack_ring(binom(nk + 1, 2), &s2s),
    })
}

pub fn build_phi_s2<T: Scalar>(d: &BlockTermDecomposition<T>) -> Result<FactorMinorForm<T>> {
    let bs: Vec<_> = d.terms.iter().map(|t| t.b.clone()).collect();
    let cs: Vec<_> = d.terms.iter().map(|t| t.c.clone()).collect();
    phi_s2_from_factors(&d.a, &bs, &cs)
}

fn hstack_ring<T: Ring>(rows: usize, blocks: &[DMatrix<T>]) -> DMatrix<T> {
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut off = 0;
    for b in blocks {
        out.columns_mut(off, b.ncols()).copy_from(b);
        off += b.ncols();
    }
    out
}

/// `sum_k f_k T_k` with `T_k` the `I x J` frontal slices.
pub fn slice_combination<T: Scalar>(t: &Tensor3<T>, f: &[T]) -> Result<DMatrix<T>> {
    let [ni, nj, nk] = t.dims();
    if f.len() != nk {
        return Err(invalid(format!("combination vector has length {}, expected {nk}", f.len())));
    }
    Ok(DMatrix::from_fn(ni, nj, |i, j| (0..nk).fold(T::zero(), |acc, k| acc + f[k] * t.get(i, j, k))))
}

/// Whether `sum_k f_k T_k` has rank at most one, judged by `sigma_2 <= tol * sigma_1`.
pub fn rank1_membership<T: Scalar>(t: &Tensor3<T>, f: &[T], tol: f64) -> Result<bool> {
    let m = slice_combination(t, f)?;
    let s = linalg::svd(&m).s;
    let s1 = s.first().copied().unwrap_or(0.0);
    Ok(s.get(1).is_none_or(|&s2| s2 <= tol * s1))
}

/// Same question answered through `R2(T) (f (x) f)`, i.e. through all 2x2
/// minors of the combination: `|R2 (f (x) f)| / 2 <= tol * |sum_k f_k T_k|^2`.
pub fn rank1_membership_via_minors<T: Scalar>(t: &Tensor3<T>, f: &[T], tol: f64) -> Result<bool> {
    let [_, _, nk] = t.dims();
    if f.len() != nk {
        return Err(invalid(format!("combination vector has length {}, expected {nk}", f.len())));
    }
    let r2 = build_r2(t)?;
    let fv = nalgebra::DVector::from_column_slice(f);
    let ff = linalg::kron(&fv, &fv);
    let minors = (r2 * ff).norm() / 2.0;
    let scale = slice_combination(t, f)?.norm_squared();
    Ok(minors <= tol * scale)
}
