//! Symmetric joint block diagonalisation: given symmetric `V_q`, find `N`
//! and block-diagonal symmetric `D_q` with `V_q = N D_q N^T`.
//!
//! The block column spaces of `N` are the joint invariant subspaces of the
//! commutant `{U : U V_q = V_q U^T}`. Two ways of extracting them are
//! offered: the eigendecomposition of one random element of the commutant,
//! and a rank-1 tensor fit of a stacked commutant basis.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cluster::{self, Linkage};
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, binom, rng_from_seed, to_complex_matrix};
use crate::scalar::{Field, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SjbdMode {
    /// Data is assumed to admit an exact factorisation; ranks are numerical.
    Exact,
    /// Noisy data; subspace dimensions must be supplied.
    Approximate,
}

/// How the joint eigenvectors of the commutant are extracted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum EvdVariant {
    /// Eigendecomposition of a single random commutant element.
    Single,
    /// Rank-1 tensor fit of the stacked commutant basis, with the last slice
    /// replaced by `omega * I`.
    Cpd { omega: f64 },
}

#[derive(Debug, Clone)]
pub struct SjbdProblem<T: Scalar> {
    pub v: Vec<DMatrix<T>>,
    pub mode: SjbdMode,
    /// Number of blocks; required in approximate mode.
    pub hint_r: Option<usize>,
    /// Total block size; determines the compression in approximate mode.
    pub hint_sum_d: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct SjbdOptions {
    pub variant: EvdVariant,
    /// Relative threshold for numerical ranks.
    pub tol: f64,
    /// Relative gap below which eigenvalues are treated as one multiple eigenvalue.
    pub cluster_eps: f64,
    pub seed: u64,
    pub max_iter: usize,
    pub stop_tol: f64,
}

impl Default for SjbdOptions {
    fn default() -> Self {
        SjbdOptions {
            variant: EvdVariant::Single,
            tol: 1e-8,
            cluster_eps: 1e-6,
            seed: 0,
            max_iter: 500,
            stop_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AlsReport {
    pub iterations: usize,
    pub converged: bool,
    pub relative_change: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SjbdStatus {
    /// False when the block sizes fall outside the range where uniqueness is
    /// known (fewer than three matrices while every block has size >= 2).
    pub guaranteed: bool,
    pub als: Option<AlsReport>,
    /// `max_q |V_q - N D_q N^T| / |V_q|`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SjbdSolution<T: Scalar> {
    /// `K x sum(d)` matrix `[N_1 ... N_R]`.
    pub n: DMatrix<T>,
    pub d: Vec<usize>,
    /// Block-diagonal symmetric coefficient matrices, one per input matrix.
    pub coefficients: Vec<DMatrix<T>>,
    pub status: SjbdStatus,
}

impl<T: Scalar> SjbdSolution<T> {
    /// Columns of `N` belonging to block `r`.
    pub fn block(&self, r: usize) -> DMatrix<T> {
        let off: usize = self.d[..r].iter().sum();
        self.n.columns(off, self.d[r]).into_owned()
    }
}

/// Stacks `V_q^T (x) I - (I (x) V_q) P` over `q`; its null space is the
/// vectorised commutant.
pub fn build_commutant_matrix<T: Scalar>(v: &[DMatrix<T>]) -> DMatrix<T> {
    let n = v.first().map_or(0, |m| m.nrows());
    let nn = n * n;
    let mut m = DMatrix::zeros(nn * v.len(), nn);
    for (q, vq) in v.iter().enumerate() {
        // Column a + b n is vec(E_ab V - V E_ba) with E_ab = e_a e_b^T.
        for a in 0..n {
            for b in 0..n {
                let col = a + b * n;
                for j in 0..n {
                    m[(q * nn + a + j * n, col)] += vq[(b, j)];
                }
                for i in 0..n {
                    m[(q * nn + i + a * n, col)] -= vq[(i, b)];
                }
            }
        }
    }
    m
}

/// Basis of the commutant, as matrices. In exact mode its dimension is the
/// numerical nullity of the commutant matrix; otherwise the `r_target`
/// smallest right singular vectors are used.
pub fn commutant_basis<T: Scalar>(
    v: &[DMatrix<T>],
    mode: SjbdMode,
    r_target: Option<usize>,
    tol: f64,
) -> Result<Vec<DMatrix<T>>> {
    let n = v.first().map_or(0, |m| m.nrows());
    let m = build_commutant_matrix(v);
    let basis = match (mode, r_target) {
        (SjbdMode::Exact, _) => linalg::null_space(&m, tol),
        (SjbdMode::Approximate, Some(r)) => linalg::smallest_right_singular_vectors(&m, r),
        (SjbdMode::Approximate, None) => {
            return Err(invalid("approximate commutant needs the number of blocks"));
        }
    };
    Ok(basis.column_iter().map(|c| linalg::unvec(c.as_slice(), n, n)).collect())
}

/// Joint eigenvectors of a commuting family together with what is needed
/// to group them into blocks.
#[derive(Debug, Clone)]
pub struct JointEigen {
    /// Columns are (generalised) joint eigenvectors.
    pub vectors: DMatrix<Complex64>,
    /// Eigenvalue of the combination matrix attached to each column.
    pub eigenvalues: Vec<Complex64>,
    /// Random combination of the commutant basis that was diagonalised.
    pub z: DMatrix<Complex64>,
    /// First factor of the rank-1 fit, one column per eigenvector.
    pub cpd_signatures: Option<DMatrix<Complex64>>,
    pub als: Option<AlsReport>,
}

impl JointEigen {
    pub fn len(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.ncols() == 0
    }

    /// Groups columns into `r` blocks.
    pub fn cluster(&self, r: usize) -> Vec<usize> {
        match &self.cpd_signatures {
            Some(a) => cluster_directions(a, r),
            None => {
                let ev = &self.eigenvalues;
                cluster::agglomerate(ev.len(), r, Linkage::Single, |i, j| (ev[i] - ev[j]).norm())
            }
        }
    }

    /// Orthonormal basis of the invariant subspace spanned by `members`.
    pub fn subspace(&self, members: &[usize]) -> DMatrix<Complex64> {
        let d = members.len();
        if self.cpd_signatures.is_some() {
            let cols: Vec<_> = members.iter().map(|&k| self.vectors.column(k).into_owned()).collect();
            let m = DMatrix::from_columns(&cols);
            return linalg::leading_left_singular_vectors(&m, d);
        }
        invariant_subspace(&self.z, members.iter().map(|&k| self.eigenvalues[k]), d)
    }
}

/// Null space of `prod (Z - lambda I)`, taken as the `d` smallest right
/// singular vectors.
pub(crate) fn invariant_subspace(z: &DMatrix<Complex64>, lambdas: impl Iterator<Item = Complex64>, d: usize) -> DMatrix<Complex64> {
    let n = z.nrows();
    let scale = z.norm().max(f64::MIN_POSITIVE);
    let mut p = DMatrix::<Complex64>::identity(n, n);
    for l in lambdas {
        let shifted = z - DMatrix::<Complex64>::identity(n, n) * l;
        p = (shifted * p) / Complex64::new(scale, 0.0);
    }
    linalg::smallest_right_singular_vectors(&p, d)
}

/// Clusters columns modulo scaling by average-linkage on `1 - |cos|`.
pub fn cluster_directions(x: &DMatrix<Complex64>, r: usize) -> Vec<usize> {
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm().max(f64::MIN_POSITIVE)).collect();
    cluster::agglomerate(x.ncols(), r, Linkage::Average, |i, j| {
        1.0 - (x.column(i).dotc(&x.column(j)).norm() / (norms[i] * norms[j])).min(1.0)
    })
}

fn random_combination<T: Scalar>(us: &[DMatrix<T>], seed: u64) -> DMatrix<Complex64> {
    let mut rng = rng_from_seed(seed);
    let n = us[0].nrows();
    let mut z = DMatrix::<Complex64>::zeros(n, n);
    for u in us {
        let g = T::sample_normal(&mut rng).to_complex();
        z += to_complex_matrix(u) * g;
    }
    z
}

/// Eigendecomposition of a random element `Z` of the span of `us`.
///
/// Eigenvalues closer than `cluster_eps * |Z|` are treated as one multiple
/// eigenvalue whose eigenvectors are an orthonormal basis of the invariant
/// subspace.
pub fn simultaneous_evd_single<T: Scalar>(us: &[DMatrix<T>], cluster_eps: f64, seed: u64) -> Result<JointEigen> {
    if us.is_empty() || us[0].nrows() != us[0].ncols() {
        return Err(invalid("need at least one square matrix"));
    }
    let z = random_combination(us, seed);
    let ev = linalg::eigenvalues(&z).ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let thr = cluster_eps * z.norm().max(f64::MIN_POSITIVE);
    let labels = cluster::components_within(ev.len(), thr, |i, j| (ev[i] - ev[j]).norm());
    let n = z.nrows();
    let mut vectors = DMatrix::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    let mut off = 0;
    for members in cluster::groups(&labels) {
        let basis = invariant_subspace(&z, members.iter().map(|&k| ev[k]), members.len());
        vectors.columns_mut(off, members.len()).copy_from(&basis);
        eigenvalues.extend(members.iter().map(|&k| ev[k]));
        off += members.len();
    }
    Ok(JointEigen {
        vectors,
        eigenvalues,
        z,
        cpd_signatures: None,
        als: None,
    })
}

/// Rank-1 tensor fit `U_p = C diag(a_p) B^T` of the stacked commutant basis.
///
/// The identity direction is projected out of the basis and replaced by the
/// slice `omega * I`, which ties `B` to `C^{-T}`. Alternating least squares
/// starts from the single-matrix eigendecomposition grouped into `r` blocks.
pub fn simultaneous_evd_cpd<T: Scalar>(
    us: &[DMatrix<T>],
    r: usize,
    omega: f64,
    opts: &SjbdOptions,
) -> Result<JointEigen> {
    let single = simultaneous_evd_single(us, opts.cluster_eps, opts.seed)?;
    let n = single.z.nrows();
    let slices = cpd_slices(us, omega);

    // Initial C from block subspaces so that it is invertible even when
    // eigenvalues are repeated.
    let labels = single.cluster(r);
    let mut c = DMatrix::<Complex64>::zeros(n, n);
    let mut off = 0;
    for members in cluster::groups(&labels) {
        let s = single.subspace(&members);
        c.columns_mut(off, s.ncols()).copy_from(&s);
        off += s.ncols();
    }
    let c_inv = c.clone().try_inverse().ok_or_else(|| Error::Numerical("initial joint eigenvectors are singular".into()))?;
    let mut b = c_inv.transpose();
    let mut a = DMatrix::from_fn(slices.len(), n, |p, k| (&c_inv * &slices[p] * &c)[(k, k)]);

    let x_a = DMatrix::from_columns(&slices.iter().map(linalg::vec_of).collect::<Vec<_>>());
    let x_c = linalg::hstack(&slices);
    let x_b = linalg::hstack(&slices.iter().map(|u| u.transpose()).collect::<Vec<_>>());
    let fit = |a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, c: &DMatrix<Complex64>| {
        (&x_a - khatri_rao(b, c) * a.transpose()).norm()
    };
    let mut prev = fit(&a, &b, &c);
    let scale = x_a.norm().max(f64::MIN_POSITIVE);
    let mut report = AlsReport {
        iterations: 0,
        converged: prev <= opts.stop_tol * scale,
        relative_change: 0.0,
    };
    while !report.converged && report.iterations < opts.max_iter {
        a = (linalg::pinv(&khatri_rao(&b, &c), 1e-14) * &x_a).transpose();
        c = &x_c * linalg::pinv(&khatri_rao(&a, &b).transpose(), 1e-14);
        b = &x_b * linalg::pinv(&khatri_rao(&a, &c).transpose(), 1e-14);
        let cur = fit(&a, &b, &c);
        report.iterations += 1;
        report.relative_change = (prev - cur).abs() / scale;
        report.converged = report.relative_change <= opts.stop_tol || cur <= opts.stop_tol * scale;
        prev = cur;
    }
    Ok(JointEigen {
        vectors: c,
        eigenvalues: single.eigenvalues,
        z: single.z,
        cpd_signatures: Some(a),
        als: Some(report),
    })
}

/// Orthonormalised commutant basis without its identity component, followed
/// by `omega * I`.
fn cpd_slices<T: Scalar>(us: &[DMatrix<T>], omega: f64) -> Vec<DMatrix<Complex64>> {
    let n = us[0].nrows();
    let id = linalg::vec_of(&DMatrix::<Complex64>::identity(n, n)) .unscale((n as f64).sqrt());
    let cols: Vec<_> = us
        .iter()
        .map(|u| {
            let v = linalg::vec_of(&to_complex_matrix(u));
            let proj = id.dotc(&v);
            v - &id * proj
        })
        .collect();
    let mut out = Vec::with_capacity(us.len());
    if us.len() > 1 {
        let basis = linalg::leading_left_singular_vectors(&DMatrix::from_columns(&cols), us.len() - 1);
        out.extend(basis.column_iter().map(|c| linalg::unvec(c.as_slice(), n, n)));
    }
    out.push(DMatrix::<Complex64>::identity(n, n) * Complex64::new(omega, 0.0));
    out
}

/// Column-wise Kronecker product, column `k` is `x_k (x) y_k`.
fn khatri_rao(x: &DMatrix<Complex64>, y: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (xr, yr) = (x.nrows(), y.nrows());
    DMatrix::from_fn(xr * yr, x.ncols(), |i, k| x[(i / yr, k)] * y[(i % yr, k)])
}

/// Converts a complex basis of a conjugation-invariant subspace to a real
/// one for real scalars, or passes it through for complex scalars.
pub(crate) fn basis_in_field<T: Scalar>(x: &DMatrix<Complex64>) -> DMatrix<T> {
    match T::FIELD {
        Field::Complex => x.map(T::from_complex),
        Field::Real => {
            let d = x.ncols();
            let stacked = DMatrix::from_fn(x.nrows(), 2 * d, |i, j| if j < d { x[(i, j)].re } else { x[(i, j - d)].im });
            linalg::leading_left_singular_vectors(&stacked, d).map(T::from_real)
        }
    }
}

/// Compresses symmetric `V_q` to their common column space `W` (`K x s`):
/// `V_q = W V~_q W^T` with `V~_q = W^H V_q conj(W)`.
pub fn compress_symmetric<T: Scalar>(v: &[DMatrix<T>], size: usize) -> (DMatrix<T>, Vec<DMatrix<T>>) {
    let w = linalg::leading_left_singular_vectors(&linalg::hstack(v), size);
    let wc = w.map(|x| x.conjugate());
    let reduced = v.iter().map(|vq| w.adjoint() * vq * &wc).collect();
    (w, reduced)
}

/// Least-squares block-diagonal symmetric `D_q` with `N D_q N^T ~ V_q`.
pub fn block_coefficients<T: Scalar>(n: &DMatrix<T>, d: &[usize], v: &[DMatrix<T>], tol: f64) -> Vec<DMatrix<T>> {
    let p = linalg::pinv(n, tol);
    let total: usize = d.iter().sum();
    let mut block_of = Vec::with_capacity(total);
    for (r, &dr) in d.iter().enumerate() {
        block_of.extend(std::iter::repeat_n(r, dr));
    }
    v.iter()
        .map(|vq| {
            let full = &p * vq * p.transpose();
            DMatrix::from_fn(total, total, |i, j| {
                if block_of[i] == block_of[j] {
                    (full[(i, j)] + full[(j, i)]) * T::from_real(0.5)
                } else {
                    T::zero()
                }
            })
        })
        .collect()
}

pub fn reconstruction_residual<T: Scalar>(n: &DMatrix<T>, coeffs: &[DMatrix<T>], v: &[DMatrix<T>]) -> f64 {
    v.iter()
        .zip(coeffs)
        .map(|(vq, dq)| {
            let nv = vq.norm();
            let e = (vq - n * dq * n.transpose()).norm();
            if nv == 0.0 {
                e
            } else {
                e / nv
            }
        })
        .fold(0.0, f64::max)
}

/// Checks input shapes and symmetry, symmetrising in approximate mode.
fn prepare<T: Scalar>(problem: &SjbdProblem<T>) -> Result<Vec<DMatrix<T>>> {
    let v = &problem.v;
    if v.is_empty() {
        return Err(invalid("no matrices to block diagonalise"));
    }
    let k = v[0].nrows();
    for (q, m) in v.iter().enumerate() {
        if m.nrows() != k || m.ncols() != k {
            return Err(invalid(format!("matrix {q} is not {k}x{k}")));
        }
    }
    match problem.mode {
        SjbdMode::Exact => {
            for (q, m) in v.iter().enumerate() {
                if (m - m.transpose()).norm() > 1e-12 * m.norm().max(1.0) {
                    return Err(invalid(format!("matrix {q} is not symmetric")));
                }
            }
            Ok(v.clone())
        }
        SjbdMode::Approximate => Ok(v.iter().map(|m| (m + m.transpose()) * T::from_real(0.5)).collect()),
    }
}

/// Compressed problem and its commutant: the shared first steps.
struct Reduced<T: Scalar> {
    v: Vec<DMatrix<T>>,
    w: DMatrix<T>,
    commutant: Vec<DMatrix<T>>,
}

fn reduce<T: Scalar>(problem: &SjbdProblem<T>, tol: f64) -> Result<Reduced<T>> {
    let v = prepare(problem)?;
    let size = match (problem.hint_sum_d, problem.mode) {
        (Some(s), _) => s,
        (None, _) => linalg::rank(&linalg::hstack(&v), tol),
    };
    if size == 0 {
        return Err(Error::Precondition("all matrices are zero".into()));
    }
    let (w, reduced) = compress_symmetric(&v, size);
    let r_target = match problem.mode {
        SjbdMode::Exact => None,
        SjbdMode::Approximate => Some(problem.hint_r.ok_or_else(|| invalid("approximate mode needs the number of blocks"))?),
    };
    let commutant = commutant_basis(&reduced, problem.mode, r_target, tol)?;
    if commutant.is_empty() || commutant.len() > size {
        return Err(Error::Precondition(format!(
            "commutant has dimension {} for block size total {size}",
            commutant.len()
        )));
    }
    if let (SjbdMode::Exact, Some(r)) = (problem.mode, problem.hint_r) {
        if r != commutant.len() {
            return Err(Error::Precondition(format!("expected {r} blocks, commutant has dimension {}", commutant.len())));
        }
    }
    Ok(Reduced { v, w, commutant })
}

fn joint_eigen<T: Scalar>(us: &[DMatrix<T>], r: usize, opts: &SjbdOptions) -> Result<JointEigen> {
    match opts.variant {
        EvdVariant::Single => simultaneous_evd_single(us, opts.cluster_eps, opts.seed),
        EvdVariant::Cpd { omega } => simultaneous_evd_cpd(us, r, omega, opts),
    }
}

/// Joint eigenvectors mapped back to the original coordinates, without any
/// grouping: the caller decides the blocks (see [`SjbdEigenvectors::blocks`]).
#[derive(Debug, Clone)]
pub struct SjbdEigenvectors<T: Scalar> {
    pub eigen: JointEigen,
    pub w: DMatrix<T>,
    pub v: Vec<DMatrix<T>>,
}

impl<T: Scalar> SjbdEigenvectors<T> {
    /// `K x sum(d)` complex matrix of joint eigenvectors in original coordinates.
    pub fn columns(&self) -> DMatrix<Complex64> {
        to_complex_matrix(&self.w) * &self.eigen.vectors
    }

    /// Block bases in the scalar field for a given grouping of the columns.
    pub fn blocks(&self, labels: &[usize]) -> Vec<DMatrix<T>> {
        let wc = to_complex_matrix(&self.w);
        cluster::groups(labels)
            .iter()
            .map(|members| basis_in_field::<T>(&(&wc * self.eigen.subspace(members))))
            .collect()
    }
}

/// Steps up to the joint eigenvectors, leaving the grouping to the caller.
pub fn sjbd_eigenvectors<T: Scalar>(problem: &SjbdProblem<T>, opts: &SjbdOptions) -> Result<SjbdEigenvectors<T>> {
    let red = reduce(problem, opts.tol)?;
    let eigen = joint_eigen(&red.commutant, red.commutant.len(), opts)?;
    Ok(SjbdEigenvectors { eigen, w: red.w, v: red.v })
}

/// Assembles `N`, `d` and the coefficients from block bases, ordered by
/// increasing block size.
pub fn assemble<T: Scalar>(mut blocks: Vec<DMatrix<T>>, v: &[DMatrix<T>], tol: f64, als: Option<AlsReport>) -> SjbdSolution<T> {
    blocks.sort_by_key(|b| b.ncols());
    let d: Vec<usize> = blocks.iter().map(|b| b.ncols()).collect();
    let n = linalg::hstack(&blocks);
    let coefficients = block_coefficients(&n, &d, v, tol);
    let residual = reconstruction_residual(&n, &coefficients, v);
    let q_count = v.len();
    let guaranteed = !(q_count < 3 && d.iter().all(|&x| x >= 2));
    SjbdSolution {
        n,
        d,
        coefficients,
        status: SjbdStatus { guaranteed, als, residual },
    }
}

/// Full S-JBD: commutant, joint eigenvectors, grouping into blocks, coefficients.
pub fn solve_sjbd<T: Scalar>(problem: &SjbdProblem<T>, opts: &SjbdOptions) -> Result<SjbdSolution<T>> {
    let ev = sjbd_eigenvectors(problem, opts)?;
    let r = match problem.mode {
        SjbdMode::Exact => ev.eigen.z.nrows().min(commutant_dim(&ev)),
        SjbdMode::Approximate => problem.hint_r.unwrap_or(1),
    };
    let labels = ev.eigen.cluster(r);
    let blocks = ev.blocks(&labels);
    Ok(assemble(blocks, &ev.v, opts.tol, ev.eigen.als.clone()))
}

fn commutant_dim<T: Scalar>(ev: &SjbdEigenvectors<T>) -> usize {
    // Distinct joint eigenvalues of Z equal the commutant dimension in exact mode.
    let thr = 1e-6 * ev.eigen.z.norm().max(f64::MIN_POSITIVE);
    let e = &ev.eigen.eigenvalues;
    let labels = cluster::components_within(e.len(), thr, |i, j| (e[i] - e[j]).norm());
    labels.iter().copied().max().map_or(0, |m| m + 1)
}

/// `sum_r C(d_r + 1, 2)`: the number of free parameters in the `D_q`.
pub fn symmetric_block_dim(d: &[usize]) -> usize {
    d.iter().map(|&x| binom(x + 1, 2)).sum()
}
