//! Algebraic computation of a decomposition into multilinear rank-(1, L_r, L_r)
//! terms.
//!
//! Phase I recovers the first factor: the null space of `Q2(T)` yields
//! symmetric matrices whose joint block diagonalisation exposes, for every
//! term, a basis `N_r` of the vectors annihilating the other terms' third
//! factors; projecting the tensor on `N_r` isolates `a_r`.
//!
//! Phase II recovers the terms in one of three ways, tried in this order:
//! 1. `K = sum(d)`: the second factors come with `a_r`; solve for `C`.
//! 2. `A` has full column rank: solve `unfold1(T) = [vec E_r] A^T`.
//! 3. otherwise: project the tensor onto two-dimensional subspaces that
//!    remove all but `R - r_A + 2` terms, solve each projection by a
//!    generalised eigenvalue decomposition and fix the scales globally.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cluster::{self, Linkage};
use crate::decomposition::{
    best_assignment, compress_third_mode, relative_residual, third_factor_from_first_two, BlockTermDecomposition, Term,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, derive_seed, rng_from_seed, to_complex_matrix};
use crate::minors::{build_d, build_q2};
use crate::scalar::Scalar;
use crate::sjbd::{self, EvdVariant, SjbdMode, SjbdOptions, SjbdProblem};
use crate::tensor::{Mode, Tensor3};

/// Default relative threshold for numerical ranks inside the solver.
pub const SOLVER_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    /// Exact data: every dimension is a numerical rank.
    Exact,
    /// Mild noise: ranks are still read off with `rank_tol`, then all
    /// linear systems are solved in the least-squares sense.
    Scenario1,
    /// Strong noise: only `R` and `sum(L)` are known; the block sizes come
    /// from clustering.
    Scenario2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseChoice {
    Auto,
    One,
    Two,
    Three,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub case: CaseChoice,
    pub mode: SolveMode,
    pub known_r: Option<usize>,
    pub known_sum_l: Option<usize>,
    pub rank_tol: f64,
    pub evd_variant: EvdVariant,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            case: CaseChoice::Auto,
            mode: SolveMode::Exact,
            known_r: None,
            known_sum_l: None,
            rank_tol: SOLVER_RANK_TOL,
            evd_variant: EvdVariant::Single,
            seed: 0,
        }
    }
}

/// Output of Phase I.
#[derive(Debug, Clone)]
pub struct PhaseOne<T: Scalar> {
    pub a: DMatrix<T>,
    /// `N_r`, one `K x d_r` block per term.
    pub n_blocks: Vec<DMatrix<T>>,
    pub d: Vec<usize>,
    /// Second factors `B_r` (`J x d_r`) obtained together with `a_r`.
    pub b_blocks: Vec<DMatrix<T>>,
    /// Number of null vectors of `Q2` that were used.
    pub q_used: usize,
    /// Relative residual of the block diagonalisation, when computed.
    pub sjbd_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub compressed_k: usize,
    pub q_used: usize,
    pub sum_d: usize,
    pub rank_a: usize,
    pub subsets: Vec<Vec<usize>>,
    pub sjbd_residual: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SolveReport<T: Scalar> {
    pub decomposition: BlockTermDecomposition<T>,
    pub detected_r: usize,
    pub detected_d: Vec<usize>,
    pub detected_l: Vec<usize>,
    pub case_used: u8,
    pub residual: f64,
    pub diagnostics: SolveDiagnostics,
}

/// `sum(d) = R K - (R - 1) sum(L)`, the generic total block size.
pub fn generic_sum_d(r: usize, k: usize, sum_l: usize) -> Result<usize> {
    (r * k).checked_sub((r - 1) * sum_l).filter(|&s| s >= r).ok_or_else(|| {
        Error::Precondition(format!("R = {r}, K = {k}, sum L = {sum_l} leave no room for {r} positive blocks"))
    })
}

/// Nondecreasing tuples of `parts` positive integers summing to `total`.
pub fn candidate_tuples(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(rem: usize, parts: usize, min: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 0 {
            if rem == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let mut v = min;
        while v * parts <= rem {
            cur.push(v);
            rec(rem - v, parts - 1, v, cur, out);
            cur.pop();
            v += 1;
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(total, parts, 1, &mut Vec::new(), &mut out);
    }
    out
}

/// Smallest `sum C(d_r + 1, 2)` over positive `d` with the given sum.
pub fn q_min(sum_d: usize, r: usize) -> usize {
    candidate_tuples(sum_d, r).iter().map(|d| sjbd::symmetric_block_dim(d)).min().unwrap_or(0)
}

/// `L_r = d_r + (K - sum d) / (R - 1)`, rounded when within 0.25 of an integer.
pub fn estimate_l_from_d(d: &[usize], k: usize, r: usize) -> Result<Vec<usize>> {
    let sum_d: usize = d.iter().sum();
    if d.len() != r || r == 0 {
        return Err(invalid("one block size per term is required"));
    }
    if r == 1 {
        return if sum_d == k {
            Ok(d.to_vec())
        } else {
            Err(Error::Precondition("a single term leaves the block size undetermined".into()))
        };
    }
    let shift = (k as f64 - sum_d as f64) / (r as f64 - 1.0);
    let rounded = shift.round();
    if (shift - rounded).abs() > 0.25 || rounded < 0.0 {
        return Err(Error::Precondition(format!("(K - sum d)/(R - 1) = {shift:.3} is not a nonnegative integer")));
    }
    Ok(d.iter().map(|&x| x + rounded as usize).collect())
}

/// Least-squares solution of `sum_{r in Omega_m} L_r = rank_m`, rounded to
/// positive integers.
pub fn estimate_l_from_rank_system(subset_ranks: &[(Vec<usize>, usize)], r: usize) -> Result<Vec<usize>> {
    let m = DMatrix::from_fn(subset_ranks.len(), r, |i, j| if subset_ranks[i].0.contains(&j) { 1.0 } else { 0.0 });
    if linalg::rank(&m, 1e-10) < r {
        return Err(Error::Precondition("subset incidence matrix is rank deficient".into()));
    }
    let b = DMatrix::from_fn(subset_ranks.len(), 1, |i, _| subset_ranks[i].1 as f64);
    let x = linalg::pinv(&m, 1e-12) * b;
    x.iter()
        .map(|&v| {
            let rv = v.round();
            if (v - rv).abs() > 0.25 || rv < 1.0 {
                Err(Error::Precondition(format!("size estimate {v:.3} is not a positive integer")))
            } else {
                Ok(rv as usize)
            }
        })
        .collect()
}

/// `[vec(N_r^T H_1^T) ... vec(N_r^T H_I^T)]`, which equals `vec(N_r^T E_r^T) a_r^T`.
pub fn projected_slices<T: Scalar>(t: &Tensor3<T>, n_r: &DMatrix<T>) -> DMatrix<T> {
    let [ni, _, _] = t.dims();
    let cols: Vec<DMatrix<T>> = (0..ni)
        .map(|i| {
            let p = n_r.transpose() * t.horizontal_slice(i).transpose();
            DMatrix::from_column_slice(p.len(), 1, p.as_slice())
        })
        .collect();
    linalg::hstack(&cols)
}

/// `a_r` and `B_r` from the best rank-1 approximation of [`projected_slices`].
fn first_and_second_factor<T: Scalar>(t: &Tensor3<T>, n_r: &DMatrix<T>) -> (nalgebra::DVector<T>, DMatrix<T>) {
    let [_, nj, _] = t.dims();
    let m = projected_slices(t, n_r);
    let (x, a) = linalg::rank_one_factors(&m);
    let b = linalg::unvec(x.as_slice(), n_r.ncols(), nj).transpose();
    (a, b)
}

/// Symmetric matrices `V_q = unvec(D g_q)` from null vectors of `Q2`.
fn symmetric_matrices<T: Scalar>(g: &DMatrix<T>, k: usize) -> Vec<DMatrix<T>> {
    let dm = build_d::<T>(k);
    g.column_iter()
        .map(|c| {
            let v = &dm * c;
            let m = linalg::unvec(v.as_slice(), k, k);
            (&m + m.transpose()) * T::from_real(0.5)
        })
        .collect()
}

/// Phase I: first factor, joint block structure and second factors.
pub fn phase1_recover_a<T: Scalar>(t: &Tensor3<T>, opts: &SolverOptions) -> Result<PhaseOne<T>> {
    let [_, _, k] = t.dims();
    let q2 = build_q2(t)?;
    let sjbd_opts = SjbdOptions {
        variant: opts.evd_variant,
        tol: opts.rank_tol,
        seed: derive_seed(opts.seed, 1),
        ..SjbdOptions::default()
    };
    let (blocks, q_used, sjbd_residual) = match opts.mode {
        SolveMode::Exact | SolveMode::Scenario1 => {
            let g = linalg::null_space(&q2, opts.rank_tol);
            if g.ncols() == 0 {
                return Err(Error::Precondition("Q2 has a trivial null space".into()));
            }
            let q = g.ncols();
            let problem = SjbdProblem {
                v: symmetric_matrices(&g, k),
                mode: if opts.known_r.is_some() && opts.mode == SolveMode::Scenario1 {
                    SjbdMode::Approximate
                } else {
                    SjbdMode::Exact
                },
                hint_r: opts.known_r,
                hint_sum_d: None,
            };
            let sol = sjbd::solve_sjbd(&problem, &sjbd_opts)?;
            if opts.mode == SolveMode::Exact && sjbd::symmetric_block_dim(&sol.d) != q {
                return Err(Error::Precondition(format!(
                    "null space of Q2 has dimension {q} but the blocks {:?} account for {}",
                    sol.d,
                    sjbd::symmetric_block_dim(&sol.d)
                )));
            }
            let blocks = (0..sol.d.len()).map(|r| sol.block(r)).collect::<Vec<_>>();
            (blocks, q, Some(sol.status.residual))
        }
        SolveMode::Scenario2 => {
            let (r, sum_l) = match (opts.known_r, opts.known_sum_l) {
                (Some(r), Some(s)) => (r, s),
                _ => return Err(invalid("the second noisy scenario needs R and sum(L)")),
            };
            let sum_d = generic_sum_d(r, k, sum_l)?;
            let q = q_min(sum_d, r);
            let g = linalg::smallest_right_singular_vectors(&q2, q);
            let problem = SjbdProblem {
                v: symmetric_matrices(&g, k),
                mode: SjbdMode::Approximate,
                hint_r: Some(r),
                hint_sum_d: Some(sum_d),
            };
            let ev = sjbd::sjbd_eigenvectors(&problem, &sjbd_opts)?;
            let labels = cluster_by_first_factor(t, &ev.columns(), r);
            (ev.blocks(&labels), q, None)
        }
    };
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by_key(|&r| blocks[r].ncols());
    let n_blocks: Vec<DMatrix<T>> = order.into_iter().map(|r| blocks[r].clone()).collect();
    let d: Vec<usize> = n_blocks.iter().map(|b| b.ncols()).collect();
    let mut a = DMatrix::zeros(t.dims()[0], n_blocks.len());
    let mut b_blocks = Vec::with_capacity(n_blocks.len());
    for (r, n_r) in n_blocks.iter().enumerate() {
        let (ar, br) = first_and_second_factor(t, n_r);
        a.set_column(r, &ar);
        b_blocks.push(br);
    }
    Ok(PhaseOne { a, n_blocks, d, b_blocks, q_used, sjbd_residual })
}

/// Groups joint eigenvectors by the first-factor direction of `unfold3(T) n`.
///
/// Each column `n` of `N` maps to `a_r (x) (E_r n)`; reshaped to `I x J` this
/// is rank one with column space `a_r`.
fn cluster_by_first_factor<T: Scalar>(t: &Tensor3<T>, columns: &DMatrix<Complex64>, r: usize) -> Vec<usize> {
    let [ni, nj, _] = t.dims();
    let t3 = to_complex_matrix(&t.unfold(Mode::Three));
    let mut dirs = DMatrix::<Complex64>::zeros(ni, columns.ncols());
    for (c, n) in columns.column_iter().enumerate() {
        let y = &t3 * n;
        let m = DMatrix::from_fn(ni, nj, |i, j| y[i * nj + j]);
        dirs.set_column(c, &linalg::leading_left_singular_vectors(&m, 1).column(0));
    }
    sjbd::cluster_directions(&dirs, r)
}

/// Case 1: `C` from `unfold3(T) = [a_r (x) B_r] C^T`, `E_r = B_r C_r^T`.
pub fn phase2_case1<T: Scalar>(t: &Tensor3<T>, p1: &PhaseOne<T>, tol: f64) -> Result<BlockTermDecomposition<T>> {
    let k = t.dims()[2];
    let sum_d: usize = p1.d.iter().sum();
    if k != sum_d {
        return Err(Error::Precondition(format!("first case needs K = sum(d), got K = {k}, sum(d) = {sum_d}")));
    }
    let c = third_factor_from_first_two(t, &p1.a, &p1.b_blocks, tol);
    let mut off = 0;
    let terms = p1
        .b_blocks
        .iter()
        .map(|b| {
            let l = b.ncols();
            let term = Term { b: b.clone(), c: c.columns(off, l).into_owned() };
            off += l;
            term
        })
        .collect();
    BlockTermDecomposition::new(p1.a.clone(), terms)
}

/// Case 2: `[vec E_1 ... vec E_R] = unfold1(T) (A^T)^+`, each `E_r`
/// truncated to `sizes[r]` or to its numerical rank.
pub fn phase2_case2<T: Scalar>(
    t: &Tensor3<T>,
    a: &DMatrix<T>,
    sizes: Option<&[usize]>,
    tol: f64,
) -> Result<BlockTermDecomposition<T>> {
    let [_, nj, nk] = t.dims();
    let r = a.ncols();
    if linalg::rank(a, tol) < r {
        return Err(Error::Precondition("second case needs A with full column rank".into()));
    }
    let e = t.unfold(Mode::One) * linalg::pinv(&a.transpose(), tol);
    let es: Vec<DMatrix<T>> = (0..r).map(|c| linalg::unvec(e.column(c).as_slice(), nj, nk)).collect();
    let ls: Vec<usize> = match sizes {
        Some(s) => s.to_vec(),
        None => es.iter().map(|m| linalg::rank(m, tol).max(1)).collect(),
    };
    BlockTermDecomposition::from_term_matrices(a.clone(), &es, &ls)
}

/// Subsets of size `R - r_A + 2` covering `0..R`: consecutive blocks, the
/// last one aligned to the end.
pub fn default_subsets(r: usize, rank_a: usize) -> Result<Vec<Vec<usize>>> {
    if rank_a < 2 || rank_a > r {
        return Err(Error::Precondition(format!("third case needs 2 <= r_A <= R, got r_A = {rank_a}, R = {r}")));
    }
    let s = r - rank_a + 2;
    let m = r.div_ceil(s);
    Ok((0..m)
        .map(|i| {
            let start = if i + 1 == m { r - s } else { i * s };
            (start..start + s).collect()
        })
        .collect())
}

/// Orthonormal `h_1, h_2` in the column space of `A` with `a_p^T h = 0` for
/// every `p` outside `subset`.
pub fn projection_pair<T: Scalar>(a: &DMatrix<T>, subset: &[usize], tol: f64) -> Result<DMatrix<T>> {
    let ua = linalg::orth(a, tol);
    let excluded: Vec<usize> = (0..a.ncols()).filter(|p| !subset.contains(p)).collect();
    let h = if excluded.is_empty() {
        ua
    } else {
        let cons = DMatrix::from_fn(excluded.len(), a.nrows(), |i, j| a[(j, excluded[i])]);
        let y = linalg::null_space(&(cons * &ua), tol);
        &ua * y
    };
    if h.ncols() != 2 {
        return Err(Error::Precondition(format!(
            "projection for subset {subset:?} has dimension {} instead of 2",
            h.ncols()
        )));
    }
    Ok(h)
}

/// Decomposition of a `2 x J x K` tensor whose second and third factors have
/// full column rank, by the eigendecomposition of a pencil of two random
/// slice mixtures. Equal eigenvalues reveal the term sizes. With
/// `terms = None` the number of terms is the number of distinct eigenvalues.
pub fn gevd_two_slice_btd<T: Scalar>(
    q: &Tensor3<T>,
    terms: Option<usize>,
    tol: f64,
    seed: u64,
) -> Result<BlockTermDecomposition<T>> {
    let [ni, nj, nk] = q.dims();
    if ni != 2 {
        return Err(invalid("pencil decomposition needs exactly two horizontal slices"));
    }
    let h = [q.horizontal_slice(0), q.horizontal_slice(1)];
    let s = linalg::rank(&linalg::hstack(&[h[0].clone(), h[1].clone()]), tol);
    if s == 0 {
        return Err(Error::Precondition("both slices vanish".into()));
    }
    let u = linalg::leading_left_singular_vectors(&linalg::hstack(&[h[0].clone(), h[1].clone()]), s);
    let w = linalg::leading_left_singular_vectors(&linalg::hstack(&[h[0].transpose(), h[1].transpose()]), s);
    let wc = w.map(|x| x.conjugate());
    let hr: Vec<DMatrix<Complex64>> = h.iter().map(|hp| to_complex_matrix(&(u.adjoint() * hp * &wc))).collect();

    let mut rng = rng_from_seed(seed);
    let mut mix = || {
        let (x, y) = (Complex64::sample_normal(&mut rng), Complex64::sample_normal(&mut rng));
        &hr[0] * x + &hr[1] * y
    };
    let m1 = mix();
    let m2 = mix();
    let m2_inv = m2
        .try_inverse()
        .ok_or_else(|| Error::Numerical("pencil mixture is singular; second and third factors may be rank deficient".into()))?;
    let z = m1 * m2_inv;
    let ev = linalg::eigenvalues(&z).ok_or_else(|| Error::Numerical("pencil eigenvalues did not converge".into()))?;
    let labels = match terms {
        Some(count) => cluster::agglomerate(ev.len(), count, Linkage::Single, |i, j| (ev[i] - ev[j]).norm()),
        None => {
            let thr = 1e-6 * z.norm();
            cluster::components_within(ev.len(), thr, |i, j| (ev[i] - ev[j]).norm())
        }
    };
    let groups = cluster::groups(&labels);
    let xs: Vec<DMatrix<Complex64>> =
        groups.iter().map(|g| sjbd::invariant_subspace(&z, g.iter().map(|&i| ev[i]), g.len())).collect();
    let x = linalg::hstack(&xs);
    let p = x.clone().try_inverse().ok_or_else(|| Error::Numerical("eigenvector blocks are dependent".into()))?;

    let uc = to_complex_matrix(&u);
    let wt = to_complex_matrix(&w.transpose());
    let mut a = DMatrix::<T>::zeros(2, groups.len());
    let mut es = Vec::with_capacity(groups.len());
    let mut sizes = Vec::with_capacity(groups.len());
    let mut off = 0;
    for (r, xr) in xs.iter().enumerate() {
        let l = xr.ncols();
        let proj = xr * p.rows(off, l);
        off += l;
        let cols: Vec<DMatrix<Complex64>> = hr
            .iter()
            .map(|hp| {
                let s_rp = &uc * &proj * hp * &wt;
                DMatrix::from_column_slice(nj * nk, 1, s_rp.as_slice())
            })
            .collect();
        let (e_vec, a_r) = linalg::rank_one_factors(&linalg::hstack(&cols));
        let e_c = linalg::unvec(e_vec.as_slice(), nj, nk);
        // Fix the arbitrary complex scale so that real data stays real.
        let phase = if a_r[0].norm() >= a_r[1].norm() { a_r[0] } else { a_r[1] };
        let unit = phase / phase.norm();
        let a_fixed = a_r.map(|v| v / unit);
        let e_fixed = e_c.map(|v| v * unit);
        a.set_column(r, &a_fixed.map(T::from_complex));
        es.push(e_fixed.map(T::from_complex));
        sizes.push(l);
    }
    BlockTermDecomposition::from_term_matrices(a, &es, &sizes)
}

/// Case 3: per-subset pencil decompositions of two-dimensional projections,
/// then the scales from `[a_r (x) vec(E^_r)] x = vec(unfold1(T))`.
pub fn phase2_case3<T: Scalar>(
    t: &Tensor3<T>,
    a: &DMatrix<T>,
    subsets: &[Vec<usize>],
    tol: f64,
    seed: u64,
) -> Result<BlockTermDecomposition<T>> {
    let [_, nj, nk] = t.dims();
    let r = a.ncols();
    let covered: std::collections::BTreeSet<usize> = subsets.iter().flatten().copied().collect();
    if covered.len() != r || covered.iter().any(|&x| x >= r) {
        return Err(invalid("subsets must cover every term exactly by index"));
    }
    let t1 = t.unfold(Mode::One);
    let mut e_hat: Vec<Option<(DMatrix<T>, usize)>> = vec![None; r];
    for (m, subset) in subsets.iter().enumerate() {
        let h = projection_pair(a, subset, tol)?;
        let qm = Tensor3::from_unfold1(nj, nk, &(&t1 * &h))?;
        let dec = gevd_two_slice_btd(&qm, Some(subset.len()), tol, derive_seed(seed, 100 + m as u64))
            .map_err(|e| Error::Precondition(format!("subset {subset:?}: {e}")))?;
        // Expected first-factor columns h^T a_r, matched by direction.
        let expected = h.transpose() * a.select_columns(subset.iter());
        let score = DMatrix::from_fn(subset.len(), subset.len(), |i, j| {
            let (x, y) = (expected.column(i), dec.a.column(j));
            x.dotc(&y).modulus() / (x.norm() * y.norm()).max(f64::MIN_POSITIVE)
        });
        let perm = best_assignment(&score);
        for (i, &rr) in subset.iter().enumerate() {
            if e_hat[rr].is_none() {
                let term = &dec.terms[perm[i]];
                e_hat[rr] = Some((term.matrix(), term.size()));
            }
        }
    }
    let (e_hat, sizes): (Vec<DMatrix<T>>, Vec<usize>) = e_hat.into_iter().map(|e| e.expect("covered")).unzip();
    let cols: Vec<DMatrix<T>> = (0..r)
        .map(|c| linalg::kron(&a.column(c), &linalg::vec_of(&e_hat[c])))
        .collect();
    let sys = linalg::hstack(&cols);
    let rhs = DMatrix::from_column_slice(t1.len(), 1, t1.as_slice());
    let x = linalg::pinv(&sys, 1e-14) * rhs;
    let es: Vec<DMatrix<T>> = e_hat.iter().enumerate().map(|(c, e)| e * x[c]).collect();
    BlockTermDecomposition::from_term_matrices(a.clone(), &es, &sizes)
}

/// Full pipeline with third-mode compression, Phase I and case selection.
pub fn decompose<T: Scalar>(t: &Tensor3<T>, opts: &SolverOptions) -> Result<SolveReport<T>> {
    let [ni, nj, nk] = t.dims();
    if ni < 2 || nj < 2 || nk < 1 {
        return Err(invalid("tensor must have at least two horizontal and two lateral slices"));
    }
    if t.norm() == 0.0 {
        return Err(invalid("the zero tensor has no terms to recover"));
    }
    let tol = opts.rank_tol;
    let mut notes = Vec::new();
    let comp = compress_third_mode(t, tol);
    let compressed = opts.mode == SolveMode::Exact && comp.original_rank < nk;
    let work = if compressed {
        notes.push(format!("third mode compressed from {nk} to {}", comp.original_rank));
        comp.tensor.clone()
    } else {
        t.clone()
    };
    let k = work.dims()[2];

    let p1 = phase1_recover_a(&work, opts)?;
    let r = p1.a.ncols();
    let sum_d: usize = p1.d.iter().sum();
    let rank_a = linalg::rank(&p1.a, tol);
    let noisy_sizes = match opts.mode {
        SolveMode::Exact => None,
        _ => Some(estimate_l_from_d(&p1.d, k, r)?),
    };

    let case1_ok = k == sum_d;
    let case2_ok = r <= ni && rank_a == r;
    let case = match opts.case {
        CaseChoice::Auto if case1_ok => 1,
        CaseChoice::Auto if case2_ok => 2,
        CaseChoice::Auto => 3,
        CaseChoice::One => 1,
        CaseChoice::Two => 2,
        CaseChoice::Three => 3,
    };
    let mut subsets = Vec::new();
    let dec = match case {
        1 => phase2_case1(&work, &p1, tol)?,
        2 => phase2_case2(&work, &p1.a, noisy_sizes.as_deref(), tol)?,
        _ => {
            subsets = default_subsets(r, rank_a)?;
            phase2_case3(&work, &p1.a, &subsets, tol, opts.seed)?
        }
    };
    let dec = if compressed { comp.expand(&dec)? } else { dec };
    let detected_l = dec.sizes();
    let residual = relative_residual(t, &dec);
    if opts.mode == SolveMode::Exact && residual > 1e-6 {
        notes.push(format!("exact-mode residual {residual:.3e} is large; assumptions may not hold"));
    }
    Ok(SolveReport {
        detected_r: r,
        detected_d: p1.d.clone(),
        detected_l,
        case_used: case,
        residual,
        diagnostics: SolveDiagnostics {
            compressed_k: k,
            q_used: p1.q_used,
            sum_d,
            rank_a,
            subsets,
            sjbd_residual: p1.sjbd_residual,
            notes,
        },
        decomposition: dec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{match_decompositions, random_btd};

    #[test]
    fn tuple_enumeration_and_q_min() {
        assert_eq!(candidate_tuples(6, 3), vec![vec![1, 1, 4], vec![1, 2, 3], vec![2, 2, 2]]);
        assert_eq!(candidate_tuples(10, 4).len(), 9);
        assert_eq!(q_min(6, 3), 9);
        assert_eq!(q_min(10, 4), 18);
        assert_eq!(generic_sum_d(3, 8, 9).unwrap(), 6);
    }

    #[test]
    fn sizes_from_block_sizes() {
        assert_eq!(estimate_l_from_d(&[1, 2, 3], 8, 3).unwrap(), vec![2, 3, 4]);
        assert_eq!(estimate_l_from_d(&[1, 2, 3, 4], 10, 4).unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(estimate_l_from_d(&[2, 2], 4, 2).unwrap(), vec![2, 2]);
        assert!(estimate_l_from_d(&[1, 2, 2], 8, 3).is_err());
    }

    #[test]
    fn sizes_from_subset_ranks() {
        let l = [2usize, 2, 2, 3, 3, 4];
        let mut sys: Vec<(Vec<usize>, usize)> = Vec::new();
        // Leave-one-out subsets give an invertible incidence matrix.
        for left_out in 0..6 {
            let s: Vec<usize> = (0..6).filter(|&i| i != left_out).collect();
            let b = s.iter().map(|&i| l[i]).sum();
            sys.push((s, b));
        }
        assert_eq!(estimate_l_from_rank_system(&sys, 6).unwrap(), l.to_vec());
        sys.pop();
        assert!(estimate_l_from_rank_system(&sys, 6).is_err());
    }

    #[test]
    fn subsets_cover_all_terms() {
        assert_eq!(default_subsets(6, 3).unwrap(), vec![vec![0, 1, 2, 3, 4], vec![1, 2, 3, 4, 5]]);
        assert_eq!(default_subsets(7, 5).unwrap(), vec![vec![0, 1, 2, 3], vec![3, 4, 5, 6]]);
        assert!(default_subsets(3, 1).is_err());
    }

    fn check_exact(dims: [usize; 3], sizes: &[usize], seed: u64, case: u8) {
        let truth = random_btd::<f64>(dims, sizes, seed).unwrap();
        let rep = decompose(&truth.compose(), &SolverOptions::default()).unwrap();
        assert_eq!(rep.case_used, case);
        let mut l = rep.detected_l.clone();
        l.sort();
        let mut expected = sizes.to_vec();
        expected.sort();
        assert_eq!(l, expected);
        let m = match_decompositions(&truth, &rep.decomposition).unwrap();
        assert!(m.err_a < 1e-6 && m.err_terms < 1e-6, "{m:?} {:?} {:?}", rep.residual, rep.diagnostics);
        assert!(rep.residual < 1e-8);
    }

    #[test]
    fn exact_first_case() {
        check_exact([3, 9, 10], &[1, 2, 3, 4], 1, 1);
    }

    #[test]
    fn exact_second_case() {
        check_exact([3, 8, 8], &[2, 3, 4], 2, 2);
    }

    #[test]
    fn exact_third_case() {
        check_exact([3, 14, 15], &[2, 2, 2, 3, 3, 4], 3, 3);
    }

    #[test]
    fn pencil_recovers_sizes() {
        let truth = random_btd::<f64>([2, 6, 6], &[1, 2, 3], 4).unwrap();
        let dec = gevd_two_slice_btd(&truth.compose(), None, 1e-10, 1).unwrap();
        let mut sizes = dec.sizes();
        sizes.sort();
        assert_eq!(sizes, vec![1, 2, 3]);
        let m = match_decompositions(&truth, &dec).unwrap();
        assert!(m.err_terms < 1e-8);
    }
}
