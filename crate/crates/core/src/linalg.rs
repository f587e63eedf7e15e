//! Dense linear-algebra helpers built on nalgebra's SVD, plus a small
//! complex QR eigenvalue solver.
//!
//! Numerical rank always means the number of singular values above
//! `tol * sigma_max`.

use nalgebra::storage::RawStorage;
use nalgebra::{DMatrix, DVector, Dim, Hessenberg, Matrix};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::scalar::{Ring, Scalar};

/// Default relative threshold for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Deterministic generator used by every stochastic routine (ChaCha20).
pub type Rng = ChaCha20Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Derives an independent seed for a sub-stream (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn binom(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Thin SVD with singular values sorted in decreasing order.
///
/// `m = u * diag(s) * v^H` with `u` of size `rows x p`, `v` of size `cols x p`,
/// `p = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct Svd<T: Scalar> {
    pub u: DMatrix<T>,
    pub s: Vec<f64>,
    pub v: DMatrix<T>,
}

pub fn svd<T: Scalar>(m: &DMatrix<T>) -> Svd<T> {
    let (rows, cols) = m.shape();
    let p = rows.min(cols);
    if p == 0 {
        return Svd {
            u: DMatrix::zeros(rows, 0),
            s: Vec::new(),
            v: DMatrix::zeros(cols, 0),
        };
    }
    let dec = m.clone().svd(true, true);
    let u = dec.u.expect("u requested");
    let v = dec.v_t.expect("v_t requested").adjoint();
    let fast = sorted_svd(u, dec.singular_values.as_slice().to_vec(), v);
    if svd_is_accurate(m, &fast) {
        return fast;
    }
    // nalgebra's bidiagonal QR occasionally returns inconsistent factors
    // for rank-deficient input; Jacobi is slower but always accurate.
    jacobi_svd(m)
}

fn sorted_svd<T: Scalar>(u: DMatrix<T>, s: Vec<f64>, v: DMatrix<T>) -> Svd<T> {
    let p = s.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    Svd {
        u: DMatrix::from_fn(u.nrows(), p, |i, j| u[(i, order[j])]),
        s: order.iter().map(|&j| s[j]).collect(),
        v: DMatrix::from_fn(v.nrows(), p, |i, j| v[(i, order[j])]),
    }
}

const SVD_CHECK_TOL: f64 = 1e-11;

fn svd_is_accurate<T: Scalar>(m: &DMatrix<T>, dec: &Svd<T>) -> bool {
    let p = dec.s.len();
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let mut us = dec.u.clone();
    for k in 0..p {
        us.column_mut(k).scale_mut(dec.s[k]);
    }
    let recon = (m - us * dec.v.adjoint()).norm() / scale;
    let eye = DMatrix::<T>::identity(p, p);
    let ortho_u = (dec.u.adjoint() * &dec.u - &eye).norm();
    let ortho_v = (dec.v.adjoint() * &dec.v - &eye).norm();
    let tol = SVD_CHECK_TOL * (p as f64).sqrt().max(1.0) * 10.0;
    recon.is_finite() && recon <= tol && ortho_u <= tol && ortho_v <= tol
}

/// One-sided (Hestenes) Jacobi SVD.
fn jacobi_svd<T: Scalar>(m: &DMatrix<T>) -> Svd<T> {
    let (rows, cols) = m.shape();
    if rows < cols {
        let t = jacobi_svd(&m.adjoint());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    let mut u = m.clone();
    let mut v = DMatrix::<T>::identity(cols, cols);
    let eps = f64::EPSILON;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dotc(&u.column(q));
                let g = gamma.modulus();
                if g == 0.0 || g <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Rotate column q by the phase of gamma so the problem is real.
                let phase = gamma.conjugate() / T::from_real(g);
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut u, &mut v] {
                    for i in 0..mat.nrows() {
                        let xp = mat[(i, p)];
                        let xq = mat[(i, q)] * phase;
                        mat[(i, p)] = xp * T::from_real(c) - xq * T::from_real(s);
                        mat[(i, q)] = xp * T::from_real(s) + xq * T::from_real(c);
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let s: Vec<f64> = (0..cols).map(|k| u.column(k).norm()).collect();
    let smax = s.iter().cloned().fold(0.0, f64::max);
    // Normalise the columns with nonzero norm; complete the rest below.
    let mut basis: Vec<DVector<T>> = Vec::with_capacity(cols);
    let mut missing = Vec::new();
    for (k, &sk) in s.iter().enumerate().take(cols) {
        if sk > 0.0 && sk > smax * f64::EPSILON * 1e-3 {
            basis.push(u.column(k).unscale(sk));
        } else {
            basis.push(DVector::zeros(rows));
            missing.push(k);
        }
    }
    let mut e = 0;
    for k in missing {
        while e < rows {
            let mut cand = DVector::<T>::zeros(rows);
            cand[e] = T::one();
            e += 1;
            for (j, b) in basis.iter().enumerate() {
                if j != k && b.norm() > 0.0 {
                    let proj = b.dotc(&cand);
                    cand -= b * proj;
                }
            }
            let n = cand.norm();
            if n > 1e-8 {
                basis[k] = cand.unscale(n);
                break;
            }
        }
    }
    let u = DMatrix::from_columns(&basis);
    sorted_svd(u, s, v)
}

/// Singular values (padded with zeros to `cols`) and a complete orthonormal
/// basis of right singular vectors, ordered by decreasing singular value.
pub fn right_singular_basis<T: Scalar>(m: &DMatrix<T>) -> (Vec<f64>, DMatrix<T>) {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let padded;
    let target = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        padded = p;
        &padded
    } else {
        m
    };
    let dec = svd(target);
    (dec.s, dec.v)
}

pub fn rank_from_values(s: &[f64], tol: f64) -> usize {
    let max = s.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > tol * max).count()
}

pub fn rank<T: Scalar>(m: &DMatrix<T>, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    rank_from_values(&svd(m).s, tol)
}

/// Orthonormal basis of the null space of `m`.
pub fn null_space<T: Scalar>(m: &DMatrix<T>, tol: f64) -> DMatrix<T> {
    let cols = m.ncols();
    let (s, v) = right_singular_basis(m);
    let r = rank_from_values(&s, tol);
    v.columns(r, cols - r).into_owned()
}

/// The `count` right singular vectors with the smallest singular values.
pub fn smallest_right_singular_vectors<T: Scalar>(m: &DMatrix<T>, count: usize) -> DMatrix<T> {
    let cols = m.ncols();
    let count = count.min(cols);
    let (_, v) = right_singular_basis(m);
    v.columns(cols - count, count).into_owned()
}

/// Orthonormal basis of the column space of `m`.
pub fn orth<T: Scalar>(m: &DMatrix<T>, tol: f64) -> DMatrix<T> {
    let dec = svd(m);
    let r = rank_from_values(&dec.s, tol);
    dec.u.columns(0, r).into_owned()
}

/// The leading `count` left singular vectors of `m`.
pub fn leading_left_singular_vectors<T: Scalar>(m: &DMatrix<T>, count: usize) -> DMatrix<T> {
    let dec = svd(m);
    let count = count.min(dec.u.ncols());
    dec.u.columns(0, count).into_owned()
}

/// Moore-Penrose pseudo-inverse with relative singular-value cutoff.
pub fn pinv<T: Scalar>(m: &DMatrix<T>, tol: f64) -> DMatrix<T> {
    let (rows, cols) = m.shape();
    let dec = svd(m);
    let r = rank_from_values(&dec.s, tol);
    let mut out = DMatrix::zeros(cols, rows);
    for k in 0..r {
        let inv = T::from_real(1.0 / dec.s[k]);
        out += dec.v.column(k) * dec.u.column(k).adjoint() * inv;
    }
    out
}

/// Best rank-1 approximation `m ~ x * y^T` (plain transpose), returned as
/// `(x, y)` with `x` scaled by the leading singular value.
pub fn rank_one_factors<T: Scalar>(m: &DMatrix<T>) -> (DVector<T>, DVector<T>) {
    let dec = svd(m);
    let sigma = T::from_real(dec.s.first().copied().unwrap_or(0.0));
    let x = dec.u.column(0).into_owned() * sigma;
    let y = dec.v.column(0).map(|z| z.conjugate());
    (x, y)
}

/// Best rank-`r` factorisation `m ~ x * y^T` with `x = U_r S_r`, `y = conj(V_r)`.
pub fn truncated_factors<T: Scalar>(m: &DMatrix<T>, r: usize) -> (DMatrix<T>, DMatrix<T>) {
    let dec = svd(m);
    let r = r.min(dec.s.len());
    let mut x = dec.u.columns(0, r).into_owned();
    for k in 0..r {
        x.column_mut(k).scale_mut(dec.s[k]);
    }
    let y = dec.v.columns(0, r).map(|z| z.conjugate());
    (x, y)
}

/// Kronecker product of any two matrices or vectors.
pub fn kron<T, R1, C1, S1, R2, C2, S2>(a: &Matrix<T, R1, C1, S1>, b: &Matrix<T, R2, C2, S2>) -> DMatrix<T>
where
    T: Ring,
    R1: Dim,
    C1: Dim,
    S1: RawStorage<T, R1, C1>,
    R2: Dim,
    C2: Dim,
    S2: RawStorage<T, R2, C2>,
{
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Column-major vectorisation.
pub fn vec_of<T: Scalar>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec<T: Scalar>(v: &[T], rows: usize, cols: usize) -> DMatrix<T> {
    DMatrix::from_column_slice(rows, cols, v)
}

/// Sine of the largest principal angle between the column spaces of `a` and `b`.
///
/// Both inputs are orthonormalised first; if the dimensions differ the result is 1.
pub fn subspace_distance<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>, tol: f64) -> f64 {
    let qa = orth(a, tol);
    let qb = orth(b, tol);
    if qa.ncols() != qb.ncols() {
        return 1.0;
    }
    if qa.ncols() == 0 {
        return 0.0;
    }
    // Residual of projecting qb onto span(qa): its norm is the sine of the largest angle.
    let resid = &qb - &qa * (qa.adjoint() * &qb);
    svd(&resid).s.first().copied().unwrap_or(0.0).min(1.0)
}

/// Eigenvalues of a general complex square matrix.
///
/// Hessenberg reduction followed by single-shift complex QR with Wilkinson
/// shifts and an exceptional shift after ten steps without deflation.
/// Returns `None` if the iteration budget is exhausted.
pub fn eigenvalues(z: &DMatrix<Complex64>) -> Option<Vec<Complex64>> {
    let n = z.nrows();
    if n == 0 {
        return Some(Vec::new());
    }
    let scale = z.norm();
    if scale == 0.0 {
        return Some(vec![Complex64::new(0.0, 0.0); n]);
    }
    let mut h = Hessenberg::new(z.unscale(scale)).unpack_h();
    let tiny = f64::EPSILON;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let mut hi = n - 1;
    let mut stalled = 0usize;
    let mut budget = 100 * n;
    loop {
        // Deflate converged trailing eigenvalues.
        while hi > 0 {
            let sub = h[(hi, hi - 1)].norm();
            if sub <= tiny * (h[(hi, hi)].norm() + h[(hi - 1, hi - 1)].norm()) || sub < 1e-300 {
                h[(hi, hi - 1)] = Complex64::new(0.0, 0.0);
                out[hi] = h[(hi, hi)];
                hi -= 1;
                stalled = 0;
            } else {
                break;
            }
        }
        if hi == 0 {
            out[0] = h[(0, 0)];
            break;
        }
        let mut lo = hi - 1;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            if sub <= tiny * (h[(lo, lo)].norm() + h[(lo - 1, lo - 1)].norm()) {
                h[(lo, lo - 1)] = Complex64::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if budget == 0 {
            return None;
        }
        budget -= 1;
        stalled += 1;
        let mu = if stalled % 11 == 10 {
            h[(hi, hi)] + Complex64::new(0.75, 0.5) * h[(hi, hi - 1)].norm()
        } else {
            wilkinson_shift(h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)])
        };
        qr_step(&mut h, lo, hi, mu);
    }
    Some(out.into_iter().map(|x| x * scale).collect())
}

/// Eigenvalue of `[[a, b], [c, d]]` closest to `d`.
fn wilkinson_shift(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    let half_tr = (a + d) * 0.5;
    let det = a * d - b * c;
    let disc = (half_tr * half_tr - det).sqrt();
    let (l1, l2) = (half_tr + disc, half_tr - disc);
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// One explicit shifted QR step `H - mu I = QR`, `H <- RQ + mu I` on the
/// window `lo..=hi` of an upper Hessenberg matrix.
fn qr_step(h: &mut DMatrix<Complex64>, lo: usize, hi: usize, mu: Complex64) {
    for k in lo..=hi {
        h[(k, k)] -= mu;
    }
    let mut rots = Vec::with_capacity(hi - lo);
    for k in lo..hi {
        let (c, s) = givens(h[(k, k)], h[(k + 1, k)]);
        for j in k..=hi {
            let (x, y) = (h[(k, j)], h[(k + 1, j)]);
            h[(k, j)] = x * c + s * y;
            h[(k + 1, j)] = -s.conj() * x + y * c;
        }
        rots.push((c, s));
    }
    for (idx, k) in (lo..hi).enumerate() {
        let (c, s) = rots[idx];
        for i in lo..=(k + 1).min(hi) {
            let (x, y) = (h[(i, k)], h[(i, k + 1)]);
            h[(i, k)] = x * c + y * s.conj();
            h[(i, k + 1)] = -x * s + y * c;
        }
    }
    for k in lo..=hi {
        h[(k, k)] += mu;
    }
}

/// Rotation `[[c, s], [-conj(s), c]]` (real `c`) mapping `(x, y)` to `(r, 0)`.
fn givens(x: Complex64, y: Complex64) -> (f64, Complex64) {
    let (ax, ay) = (x.norm(), y.norm());
    if ay == 0.0 {
        return (1.0, Complex64::new(0.0, 0.0));
    }
    if ax == 0.0 {
        return (0.0, y.conj() / ay);
    }
    let r = ax.hypot(ay);
    (ax / r, (x / ax) * y.conj() / r)
}

pub fn to_complex_matrix<T: Scalar>(m: &DMatrix<T>) -> DMatrix<Complex64> {
    m.map(|x| x.to_complex())
}

pub fn frobenius<T: Scalar>(m: &DMatrix<T>) -> f64 {
    m.norm()
}

/// Horizontal concatenation of equally tall matrices.
pub fn hstack<T: Scalar>(blocks: &[DMatrix<T>]) -> DMatrix<T> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut off = 0;
    for b in blocks {
        out.view_mut((0, off), b.shape()).copy_from(b);
        off += b.ncols();
    }
    out
}

/// Vertical concatenation of equally wide matrices.
pub fn vstack<T: Scalar>(blocks: &[DMatrix<T>]) -> DMatrix<T> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, 0), b.shape()).copy_from(b);
        off += b.nrows();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_svd_matches_definition() {
        let mut rng = rng_from_seed(3);
        for (r, c) in [(7, 3), (3, 7), (5, 5)] {
            let x = DMatrix::<Complex64>::from_fn(r, 2, |_, _| Complex64::sample_normal(&mut rng));
            let y = DMatrix::<Complex64>::from_fn(2, c, |_, _| Complex64::sample_normal(&mut rng));
            let m = x * y;
            let dec = jacobi_svd(&m);
            assert!(svd_is_accurate(&m, &dec));
            assert!(dec.s[1] > 1e-3 && dec.s[2] < 1e-12);
        }
    }
    use approx::assert_relative_eq;

    #[test]
    fn binomials() {
        assert_eq!(binom(5, 2), 10);
        assert_eq!(binom(16, 2), 120);
        assert_eq!(binom(3, 4), 0);
        assert_eq!(binom(0, 0), 1);
    }

    #[test]
    fn svd_is_sorted_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 4, &[1.0, 2.0, 0.0, 3.0, 0.5, -1.0, 4.0, 0.0, 2.0, 2.0, 2.0, 2.0]);
        let d = svd(&m);
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        let rec = &d.u * DMatrix::from_diagonal(&DVector::from_vec(d.s.clone())) * d.v.adjoint();
        assert_relative_eq!(rec, m, epsilon = 1e-12);
    }

    #[test]
    fn null_space_of_wide_matrix_is_complete() {
        let m = DMatrix::from_row_slice(2, 5, &[1.0, 0.0, 1.0, 0.0, 2.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        let n = null_space(&m, 1e-12);
        assert_eq!(n.ncols(), 3);
        assert!((&m * &n).norm() < 1e-12);
        assert_relative_eq!(n.adjoint() * &n, DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn complex_svd_and_pinv() {
        let m = DMatrix::from_fn(4, 3, |i, j| Complex64::new((i + 2 * j) as f64, (i as f64) - (j as f64) * 0.5));
        let p = pinv(&m, 1e-12);
        assert_eq!(rank(&m, 1e-12), 2);
        let back = &m * &p * &m;
        assert!((back - &m).norm() < 1e-10);
    }

    #[test]
    fn eigenvalues_with_multiplicity_and_random_matrices() {
        let mut rng = rng_from_seed(3);
        for n in [1usize, 2, 5, 9, 14] {
            let m = DMatrix::from_fn(n, n, |_, _| Complex64::sample_normal(&mut rng));
            let ev = eigenvalues(&m).unwrap();
            let trace: Complex64 = (0..n).map(|i| m[(i, i)]).sum();
            assert!((ev.iter().sum::<Complex64>() - trace).norm() < 1e-9 * m.norm());
            for l in ev {
                let shifted = &m - DMatrix::identity(n, n) * l;
                assert!(*svd(&shifted).s.last().unwrap() < 1e-9 * m.norm());
            }
        }
        // Similarity transform of diag(2, 2, 2, -1, -1, 0.5i).
        let diag = [2.0, 2.0, 2.0, -1.0, -1.0].map(|x| Complex64::new(x, 0.0));
        let mut dv = diag.to_vec();
        dv.push(Complex64::new(0.0, 0.5));
        let s = DMatrix::from_fn(6, 6, |_, _| Complex64::sample_normal(&mut rng));
        let z = &s * DMatrix::from_diagonal(&DVector::from_vec(dv)) * s.clone().try_inverse().unwrap();
        let mut ev = eigenvalues(&z).unwrap();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!(ev[0..2].iter().all(|x| (x + 1.0).norm() < 1e-6));
        assert!((ev[2] - Complex64::new(0.0, 0.5)).norm() < 1e-9);
        assert!(ev[3..].iter().all(|x| (x - 2.0).norm() < 1e-5));
    }

    #[test]
    fn eigenvalues_of_diagonalisable_matrix() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(-2.0, 0.5),
        ]));
        let s = DMatrix::from_fn(3, 3, |i, j| Complex64::new(1.0 + (i * j * j) as f64 + if i == j { 2.0 } else { 0.0 }, (i + 2 * j) as f64 * 0.1));
        let z = &s * d * s.clone().try_inverse().unwrap();
        let mut ev = eigenvalues(&z).unwrap();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((ev[0] - Complex64::new(-2.0, 0.5)).norm() < 1e-9);
        assert!((ev[1] - Complex64::new(1.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn subspace_distance_detects_equal_spans() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, -1.0, 0.0, 0.0]);
        assert!(subspace_distance(&a, &b, 1e-12) < 1e-14);
        let c = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_relative_eq!(subspace_distance(&a, &c, 1e-12), 1.0, epsilon = 1e-12);
    }
}
