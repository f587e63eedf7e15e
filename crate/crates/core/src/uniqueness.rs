//! Deterministic and generic uniqueness checks, k-rank computations and
//! explicit nonuniqueness witnesses.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::decomposition::{BlockTermDecomposition, Term};
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, binom, rng_from_seed};
use crate::minors::build_q2;
use crate::scalar::Scalar;
use crate::tensor::{Mode, Tensor3};

/// Largest number of subsets any single enumeration may test.
pub const SUBSET_CAP: usize = 1_000_000;

/// Default relative rank threshold for the deterministic checks.
pub const UNIQUENESS_RANK_TOL: f64 = 1e-8;

/// Result of a subset-enumerating rank computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KRank {
    pub value: usize,
    /// `false` when the subset cap stopped the search; `value` is then a lower bound.
    pub exact: bool,
}

fn has_full_column_rank<T: Scalar>(m: &DMatrix<T>, tol: f64) -> bool {
    m.ncols() == 0 || (m.nrows() >= m.ncols() && linalg::rank(m, tol) == m.ncols())
}

/// Largest `k` such that every group of `k` blocks has linearly independent
/// columns jointly.
pub fn k_prime_rank<T: Scalar>(blocks: &[DMatrix<T>], tol: f64) -> KRank {
    let n = blocks.len();
    let mut tested = 0usize;
    for k in 1..=n {
        let count = binom(n, k);
        if tested.saturating_add(count) > SUBSET_CAP {
            return KRank { value: k - 1, exact: false };
        }
        tested += count;
        let all_independent = (0..n).combinations(k).all(|s| {
            let parts: Vec<DMatrix<T>> = s.iter().map(|&i| blocks[i].clone()).collect();
            has_full_column_rank(&linalg::hstack(&parts), tol)
        });
        if !all_independent {
            return KRank { value: k - 1, exact: true };
        }
    }
    KRank { value: n, exact: true }
}

/// Largest `k` such that every `k` columns of `a` are linearly independent.
pub fn k_rank<T: Scalar>(a: &DMatrix<T>, tol: f64) -> KRank {
    let cols: Vec<DMatrix<T>> = a.column_iter().map(|c| DMatrix::from_column_slice(c.len(), 1, c.into_owned().as_slice())).collect();
    k_prime_rank(&cols, tol)
}

/// Whether every `size`-subset of `mats`, joined by `join`, has rank equal to
/// the sum of the corresponding `sizes`. `None` when the cap is exceeded.
fn all_subset_ranks<T: Scalar>(
    mats: &[DMatrix<T>],
    sizes: &[usize],
    size: usize,
    tol: f64,
    join: impl Fn(&[DMatrix<T>]) -> DMatrix<T>,
) -> Option<bool> {
    let n = mats.len();
    if size > n {
        return Some(true);
    }
    if binom(n, size) > SUBSET_CAP {
        return None;
    }
    Some((0..n).combinations(size).all(|s| {
        let parts: Vec<DMatrix<T>> = s.iter().map(|&i| mats[i].clone()).collect();
        let want: usize = s.iter().map(|&i| sizes[i]).sum();
        linalg::rank(&join(&parts), tol) == want
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NecessaryChecks {
    /// `[vec(E_1) ... vec(E_R)]` has full column rank.
    pub vec_e_fcr: bool,
    /// `[a_1 (x) B_1 ... a_R (x) B_R]` has full column rank.
    pub a_b_fcr: bool,
    /// `[a_1 (x) C_1 ... a_R (x) C_R]` has full column rank.
    pub a_c_fcr: bool,
}

impl NecessaryChecks {
    pub fn all(&self) -> bool {
        self.vec_e_fcr && self.a_b_fcr && self.a_c_fcr
    }
}

/// Full-column-rank conditions that every unique decomposition satisfies.
pub fn check_necessary<T: Scalar>(d: &BlockTermDecomposition<T>, tol: f64) -> NecessaryChecks {
    let vec_e = linalg::hstack(&d.term_matrices().iter().map(|e| DMatrix::from_column_slice(e.len(), 1, e.as_slice())).collect::<Vec<_>>());
    NecessaryChecks {
        vec_e_fcr: has_full_column_rank(&vec_e, tol),
        a_b_fcr: has_full_column_rank(&d.a_kron_b(), tol),
        a_c_fcr: has_full_column_rank(&d.a_kron_c(), tol),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assumptions {
    /// `rank(unfold3(T)) = K`.
    pub t3_full_rank: bool,
    /// `d_r = dim null(Z_r)` with `Z_r` the vertical stack of the other term matrices.
    pub d: Vec<usize>,
    pub d_r_positive: Vec<bool>,
    /// `k_A >= 2` and every `R - r_A + 2` term matrices side by side have rank equal to their sizes' sum.
    pub f_rank_ok: bool,
    /// `dim null Q2(T) = Q`.
    pub q2_dim_ok: bool,
    pub q2_null_dim: usize,
    /// `Q = sum_r C(d_r + 1, 2)`.
    pub q: usize,
}

impl Assumptions {
    pub fn hold(&self) -> bool {
        self.t3_full_rank && self.d_r_positive.iter().all(|&x| x) && (self.f_rank_ok || self.q2_dim_ok)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conditions {
    /// `K >= sum(L) - min(L) + 1` and `k_A >= 2`.
    pub a: bool,
    /// `r_A = R`.
    pub b: bool,
    /// `k_A = r_A < R` with the subset rank tests on both term-matrix orientations.
    pub c: bool,
    /// The vertical stack of all term matrices has rank `sum(L)`.
    pub d: bool,
    /// `C(K+1, 2) - Q > sum_{r1<r2} L_r1 L_r2 - L~1 L~2` for the two smallest sizes.
    pub e: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statements {
    /// `A` is computable by (simultaneous) EVD.
    pub s1_a_by_evd: bool,
    /// The whole decomposition is computable by (simultaneous) EVD.
    pub s2_overall_by_evd: bool,
    /// The first factor of any decomposition selects columns of `A`.
    pub s3_first_factor_selection: bool,
    /// The first factor matrix is unique.
    pub s4_first_factor_unique: bool,
    /// The decomposition is unique.
    pub s5_overall_unique: bool,
}

impl Statements {
    pub fn derive(assumptions_hold: bool, c: &Conditions) -> Self {
        let h = assumptions_hold;
        Statements {
            s1_a_by_evd: h,
            s2_overall_by_evd: h && (c.b || c.c),
            s3_first_factor_selection: h && c.a,
            s4_first_factor_unique: h && c.a && c.e,
            s5_overall_unique: h && ((c.a && c.b) || (c.a && c.c) || c.d),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub dims: [usize; 3],
    pub sizes: Vec<usize>,
    pub necessary: NecessaryChecks,
    pub rank_a: usize,
    pub k_a: KRank,
    pub assumptions: Assumptions,
    pub conditions: Conditions,
    pub statements: Statements,
    pub generic: GenericBounds,
    pub parameter_count: Option<ParameterCount>,
    /// Checks skipped because a subset enumeration exceeded [`SUBSET_CAP`];
    /// they are reported as failing.
    pub not_evaluated: Vec<String>,
}

fn pair_product_sum(sizes: &[usize]) -> usize {
    sizes.iter().tuple_combinations().map(|(a, b)| a * b).sum()
}

/// Evaluates the deterministic uniqueness theorem for a given decomposition.
/// `Q2` is built from `t` when given and from the composed tensor otherwise.
pub fn check_main_theorem<T: Scalar>(
    d: &BlockTermDecomposition<T>,
    t: Option<&Tensor3<T>>,
    tol: f64,
) -> Result<UniquenessReport> {
    let dims = d.dims();
    let [_, _, nk] = dims;
    let sizes = d.sizes();
    let r = sizes.len();
    let sum_l: usize = sizes.iter().sum();
    let min_l = *sizes.iter().min().ok_or_else(|| invalid("decomposition has no terms"))?;
    let composed;
    let t = match t {
        Some(t) if t.dims() != dims => return Err(invalid("tensor and decomposition dimensions differ")),
        Some(t) => t,
        None => {
            composed = d.compose();
            &composed
        }
    };
    let es = d.term_matrices();
    let mut not_evaluated = Vec::new();

    let rank_a = linalg::rank(&d.a, tol);
    let k_a = k_rank(&d.a, tol);
    if !k_a.exact {
        not_evaluated.push("k-rank of A (lower bound used)".to_string());
    }

    // Assumptions.
    let t3_full_rank = linalg::rank(&t.unfold(Mode::Three), tol) == nk;
    let dr: Vec<usize> = (0..r)
        .map(|skip| {
            let others: Vec<DMatrix<T>> = es.iter().enumerate().filter(|&(s, _)| s != skip).map(|(_, e)| e.clone()).collect();
            if others.is_empty() {
                nk
            } else {
                nk - linalg::rank(&linalg::vstack(&others), tol)
            }
        })
        .collect();
    let q: usize = dr.iter().map(|&x| binom(x + 1, 2)).sum();
    let subset_size = (r + 2).saturating_sub(rank_a);
    let f_subsets = if k_a.value >= 2 { all_subset_ranks(&es, &sizes, subset_size, tol, linalg::hstack) } else { Some(false) };
    if f_subsets.is_none() {
        not_evaluated.push(format!("side-by-side ranks of all {subset_size}-subsets of term matrices"));
    }
    let f_rank_ok = k_a.value >= 2 && f_subsets == Some(true);
    let q2 = build_q2(t)?;
    let q2_null_dim = q2.ncols() - linalg::rank(&q2, tol);
    let assumptions = Assumptions {
        t3_full_rank,
        d_r_positive: dr.iter().map(|&x| x >= 1).collect(),
        d: dr,
        f_rank_ok,
        q2_dim_ok: q2_null_dim == q,
        q2_null_dim,
        q,
    };

    // Conditions.
    let cond_a = nk + min_l > sum_l && k_a.value >= 2;
    let cond_b = rank_a == r;
    let cond_c = if k_a.value == rank_a && rank_a < r && f_rank_ok {
        let transposed: Vec<DMatrix<T>> = es.iter().map(|e| e.transpose()).collect();
        match all_subset_ranks(&transposed, &sizes, subset_size, tol, linalg::hstack) {
            Some(ok) => ok,
            None => {
                not_evaluated.push(format!("side-by-side ranks of all {subset_size}-subsets of transposed term matrices"));
                false
            }
        }
    } else {
        false
    };
    let cond_d = linalg::rank(&linalg::vstack(&es), tol) == sum_l;
    let mut sorted = sizes.clone();
    sorted.sort_unstable();
    let two_smallest = if r >= 2 { sorted[0] * sorted[1] } else { 0 };
    let cond_e = binom(nk + 1, 2) as i128 - q as i128 > pair_product_sum(&sizes) as i128 - two_smallest as i128;
    let conditions = Conditions { a: cond_a, b: cond_b, c: cond_c, d: cond_d, e: cond_e };

    Ok(UniquenessReport {
        dims,
        necessary: check_necessary(d, tol),
        rank_a,
        k_a,
        statements: Statements::derive(assumptions.hold(), &conditions),
        assumptions,
        conditions,
        generic: generic_bounds(dims, &sizes),
        parameter_count: parameter_count_s(dims, &sizes).ok(),
        sizes,
        not_evaluated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorollaryVerdict {
    pub holds: bool,
    /// Reached through `r_A = R`.
    pub via_full_rank_a: bool,
    /// Reached through `k_A = r_A < R` and the k'-rank of `C`.
    pub via_k_rank: bool,
    /// `false` when a capped k'-rank left the verdict open.
    pub exact: bool,
}

/// Sufficient condition for uniqueness stated in terms of ranks, k-ranks
/// and k'-ranks of the factor matrices.
pub fn check_factor_rank_corollary<T: Scalar>(d: &BlockTermDecomposition<T>, tol: f64) -> CorollaryVerdict {
    let sizes = d.sizes();
    let r = sizes.len();
    let sum_l: usize = sizes.iter().sum();
    let min_l = sizes.iter().copied().min().unwrap_or(0);
    let r_a = linalg::rank(&d.a, tol);
    let k_a = k_rank(&d.a, tol);
    let r_c = linalg::rank(&d.c_full(), tol);
    let need = (r + 2).saturating_sub(r_a);
    let bs: Vec<DMatrix<T>> = d.terms.iter().map(|t| t.b.clone()).collect();
    let cs: Vec<DMatrix<T>> = d.terms.iter().map(|t| t.c.clone()).collect();
    let kb = k_prime_rank(&bs, tol);
    let base = r_c + min_l > sum_l && kb.value >= need && k_a.value >= 2;
    let via_full_rank_a = base && r_a == r;
    let mut exact = k_a.exact && kb.exact;
    let via_k_rank = base && k_a.value == r_a && r_a < r && {
        let kc = k_prime_rank(&cs, tol);
        exact &= kc.exact;
        kc.value >= need
    };
    CorollaryVerdict { holds: via_full_rank_a || via_k_rank, via_full_rank_a, via_k_rank, exact }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCount {
    /// `S = sum_r (I - 1 + (J + K - L_r) L_r)`.
    pub s: u128,
    pub ijk: u128,
    /// `S < IJK`, necessary for generic uniqueness.
    pub passes: bool,
}

/// Number of free parameters of the decomposition against the tensor size.
pub fn parameter_count_s(dims: [usize; 3], sizes: &[usize]) -> Result<ParameterCount> {
    let [i, j, k] = dims.map(|x| x as u128);
    if sizes.iter().any(|&l| l as u128 > j.min(k)) {
        return Err(Error::Precondition("every L_r must satisfy L_r <= min(J, K)".into()));
    }
    if i == 0 {
        return Err(invalid("I must be positive"));
    }
    let s = sizes.iter().map(|&l| l as u128).map(|l| i - 1 + (j + k - l) * l).sum();
    let ijk = i * j * k;
    Ok(ParameterCount { s, ijk, passes: s < ijk })
}

/// Verdicts of the generic uniqueness bounds. Rows that admit a `J`/`K`
/// swap hold when either orientation holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenericBounds {
    /// `max{p : L_(R-p+1) + ... + L_R <= J}`.
    pub kappa_b: usize,
    /// `max{q : L_(R-q+1) + ... + L_R <= K}`.
    pub kappa_c: usize,
    /// `I >= 2`, `J >= sum L`, `K >= sum L`.
    pub row1: bool,
    /// `I >= R`, `J >= sum L`, `K >= L_R + 1`.
    pub row2: bool,
    /// `I >= R` and `kappa_b + kappa_c >= R + 2`.
    pub row3: bool,
    /// Equal sizes only: `I >= R` and `C(J, L+1) C(K, L+1) >= C(R+L, L+1) - R`; needs a rank verification.
    pub row4: Option<bool>,
    /// `K >= L_2 + ... + L_R + 1`, `J >= L_(min(I,R)-1) + ... + L_R`, `I >= 2`.
    pub row5: bool,
    /// `K >= sum L`, `J >= L_(R-1) + L_R`, `C(I,2) C(J,2) >= sum_{r1<r2} L_r1 L_r2`; needs a rank verification.
    pub row6: bool,
    /// Equal sizes only: `I >= R` and `(J - L)(K - L) >= R`.
    pub row7: Option<bool>,
    /// `K >= sum L`, `J >= L_(R-1) + L_R`, `(I-1)(J-1) >= sum L`.
    pub row8: bool,
    pub main_generic: MainGenericChecks,
}

/// Generic form of the main theorem, evaluated with `K` replaced by
/// `min(K, sum L)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MainGenericChecks {
    pub k_used: usize,
    /// `IJ >= sum L` and `d_1 = K - sum L + L_1 >= 1`.
    pub assumptions: bool,
    /// First factor matrix is generically unique.
    pub first_factor_inequality: bool,
    /// `I >= R` or `K = sum L`.
    pub overall: bool,
}

impl GenericBounds {
    pub fn any_unconditional(&self) -> bool {
        self.row1 || self.row2 || self.row3 || self.row5 || self.row7 == Some(true) || self.row8
    }
}

fn tail_sum(sorted: &[usize], count: usize) -> usize {
    sorted.iter().rev().take(count).sum()
}

fn kappa(sorted: &[usize], bound: usize) -> usize {
    (0..=sorted.len()).take_while(|&p| tail_sum(sorted, p) <= bound).last().unwrap_or(0)
}

pub fn generic_bounds(dims: [usize; 3], sizes: &[usize]) -> GenericBounds {
    let [i, j, k] = dims;
    let mut l = sizes.to_vec();
    l.sort_unstable();
    let r = l.len();
    let sum: usize = l.iter().sum();
    let largest = l.last().copied().unwrap_or(0);
    let top_two = tail_sum(&l, 2);
    let pairs = pair_product_sum(&l);
    let equal = l.windows(2).all(|w| w[0] == w[1]);
    let kappa_b = kappa(&l, j);
    let kappa_c = kappa(&l, k);

    let row2 = |jj: usize, kk: usize| i >= r && jj >= sum && kk > largest;
    let row5 = |jj: usize, kk: usize| {
        let first_part = kk > sum - l.first().copied().unwrap_or(0);
        let span = r + 2 - i.min(r).max(1);
        first_part && jj >= tail_sum(&l, span) && i >= 2
    };
    let row6 = |jj: usize, kk: usize| kk >= sum && jj >= top_two && binom(i, 2) * binom(jj, 2) >= pairs;
    let row8 = |jj: usize, kk: usize| kk >= sum && jj >= top_two && (i.saturating_sub(1)) * (jj.saturating_sub(1)) >= sum;
    let lf = l.first().copied().unwrap_or(0);
    let row4 = equal.then(|| i >= r && binom(j, lf + 1) * binom(k, lf + 1) + r >= binom(r + lf, lf + 1));
    let row7 = equal.then(|| i >= r && j.saturating_sub(lf) * k.saturating_sub(lf) >= r);

    let k_used = k.min(sum);
    let m = sum - k_used;
    let first_factor_inequality = if r < 2 {
        true
    } else {
        // Integer form of K >= -1/2 - sqrt(1/4 + 2 L1 L2 / (R-1)) + sum L.
        m == 0 || (m * m - m) * (r - 1) <= 2 * l[0] * l[1]
    };
    let main_generic = MainGenericChecks {
        k_used,
        assumptions: i * j >= sum && k_used + lf > sum,
        first_factor_inequality,
        overall: i >= r || k_used == sum,
    };

    GenericBounds {
        kappa_b,
        kappa_c,
        row1: i >= 2 && j >= sum && k >= sum,
        row2: row2(j, k) || row2(k, j),
        row3: i >= r && kappa_b + kappa_c >= r + 2,
        row4,
        row5: row5(j, k) || row5(k, j),
        row6: row6(j, k) || row6(k, j),
        row7,
        row8: row8(j, k) || row8(k, j),
        main_generic,
    }
}

/// Free parameters of the canonical `2 x 8 x 7` tensor with three
/// rank-`(1, 3, 3)` terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Canonical287Params {
    pub d: [f64; 2],
    pub f: [f64; 8],
    pub g: [f64; 7],
    pub h: [f64; 7],
}

impl Canonical287Params {
    pub fn random(seed: u64) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rng_from_seed(seed);
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        Canonical287Params {
            d: std::array::from_fn(|_| draw()),
            f: std::array::from_fn(|_| draw()),
            g: std::array::from_fn(|_| draw()),
            h: std::array::from_fn(|_| draw()),
        }
    }

    /// The decomposition `A = [d e_1 e_2]`, `B = [f I_8]`,
    /// `C = [e_1 .. e_5 g e_6 e_7 h]` split into three blocks of three.
    pub fn decomposition(&self) -> BlockTermDecomposition<f64> {
        let a = DMatrix::from_row_slice(2, 3, &[self.d[0], 1.0, 0.0, self.d[1], 0.0, 1.0]);
        let unit = |n: usize, i: usize| DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 });
        let f = DVector::from_column_slice(&self.f);
        let g = DVector::from_column_slice(&self.g);
        let h = DVector::from_column_slice(&self.h);
        let b_cols = [f, unit(8, 0), unit(8, 1), unit(8, 2), unit(8, 3), unit(8, 4), unit(8, 5), unit(8, 6), unit(8, 7)];
        let c_cols = [unit(7, 0), unit(7, 1), unit(7, 2), unit(7, 3), unit(7, 4), g, unit(7, 5), unit(7, 6), h];
        let terms = (0..3)
            .map(|t| Term {
                b: DMatrix::from_columns(&b_cols[3 * t..3 * t + 3]),
                c: DMatrix::from_columns(&c_cols[3 * t..3 * t + 3]),
            })
            .collect();
        BlockTermDecomposition::new(a, terms).expect("canonical factors are consistent")
    }
}

/// One member of the two-parameter family of alternative decompositions
/// of the canonical `2 x 8 x 7` tensor.
#[derive(Debug, Clone)]
pub struct AlternativeMember {
    pub alpha: f64,
    pub delta: f64,
    /// First factor matrix, identical to that of the canonical decomposition.
    pub a: DMatrix<f64>,
    /// Term matrices `E~_1, E~_2, E~_3`, each of rank at most three.
    pub e: [DMatrix<f64>; 3],
}

impl AlternativeMember {
    pub fn compose(&self) -> Tensor3<f64> {
        Tensor3::from_fn([2, 8, 7], |i, j, k| (0..3).map(|r| self.a[(i, r)] * self.e[r][(j, k)]).sum())
    }
}

/// Alternative decomposition of the canonical `2 x 8 x 7` tensor for the
/// parameters `(p1, p2)`.
pub fn canonical_2x8x7_alternative(p1: f64, p2: f64, params: &Canonical287Params) -> Result<AlternativeMember> {
    // One-based accessors keep the closed forms readable.
    let d = |i: usize| params.d[i - 1];
    let f = |i: usize| params.f[i - 1];
    let g = |i: usize| params.g[i - 1];
    let h = |i: usize| params.h[i - 1];

    let alpha = (f(1) * g(2) - g(1) + f(2) * g(3)) * p1 + (f(1) * h(2) - h(1) + f(2) * h(3)) * p2 + 1.0;
    let beta = (f(3) * g(4) - f(5) + f(4) * g(5)) * d(1) * p1 + (f(3) * h(4) + f(4) * h(5)) * d(1) * p2;
    let gamma = (f(6) * g(6) + f(7) * g(7)) * d(2) * p1 + (f(6) * h(6) - f(8) + f(7) * h(7)) * d(2) * p2;
    let delta = beta + alpha - gamma * alpha;
    if alpha == 0.0 || delta == 0.0 {
        return Err(Error::Precondition(format!("alpha = {alpha} and delta = {delta} must both be nonzero")));
    }
    let tau1 = -p1 * gamma / delta;
    let tau2 = -p2 * beta / delta;
    let tau3 = (p2 + tau2) / alpha;
    let tau4 = alpha * tau1 - p1;
    let q = [h(1) * tau3 + g(1) * tau1 + 1.0, h(1) * tau2 + g(1) * tau4 + 1.0];
    let rr = [h(2) * tau3 + g(2) * tau1, h(2) * tau2 + g(2) * tau4];
    let s = [h(3) * tau3 + g(3) * tau1, h(3) * tau2 + g(3) * tau4];
    let tail = [h(4) * p2 / delta, h(5) * p2 / delta, -g(6) * p1 / delta, -g(7) * p1 / delta];

    let mut e1 = DMatrix::zeros(8, 7);
    e1[(0, 0)] = f(1);
    e1[(0, 1)] = 1.0;
    e1[(1, 0)] = f(2);
    e1[(1, 2)] = 1.0;
    for row in 2..8 {
        let (block, scale) = if row < 5 { (0, 1.0) } else { (1, alpha) };
        let coeffs = [q[block], rr[block], s[block], tail[0] * scale, tail[1] * scale, tail[2] * scale, tail[3] * scale];
        for (col, c) in coeffs.iter().enumerate() {
            e1[(row, col)] = f(row + 1) * c;
        }
    }

    let t = params.decomposition().compose();
    let e2 = t.horizontal_slice(0) - &e1 * d(1);
    let e3 = t.horizontal_slice(1) - &e1 * d(2);
    let a = DMatrix::from_row_slice(2, 3, &[d(1), 1.0, 0.0, d(2), 0.0, 1.0]);
    Ok(AlternativeMember { alpha, delta, a, e: [e1, e2, e3] })
}

/// Largest absolute `order x order` minor of `m`.
pub fn max_abs_minor(m: &DMatrix<f64>, order: usize) -> f64 {
    let mut best: f64 = 0.0;
    for rows in (0..m.nrows()).combinations(order) {
        for cols in (0..m.ncols()).combinations(order) {
            let sub = DMatrix::from_fn(order, order, |a, b| m[(rows[a], cols[b])]);
            best = best.max(sub.determinant().abs());
        }
    }
    best
}

/// Random factors of the tensor whose first two terms share two rank-one
/// components: `E_1 = [b1 b2 b3][c1 c2 c3]^T`, `E_2 = [b1 b2 b4][c1 c2 c4]^T`
/// and `E_r = [b_(3r-4) b_(3r-3) b_(3r-2)][c1 c2 c_(r+2)]^T` for `r >= 3`.
/// The tensor is `R x (R+2) x (R+2)`.
pub fn shared_component_instance(r: usize, seed: u64) -> Result<BlockTermDecomposition<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    if r < 2 {
        return Err(invalid("at least two terms are required"));
    }
    let n = r + 2;
    let mut rng = rng_from_seed(seed);
    let mut draw = |rows: usize, cols: usize| DMatrix::from_fn(rows, cols, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    let a = draw(r, r);
    let b = draw(n, 3 * r - 2);
    let c = draw(n, r + 2);
    // Zero-based column indices into `b` and `c` for each term.
    let b_idx = |t: usize| if t == 0 { [0, 1, 2] } else if t == 1 { [0, 1, 3] } else { [3 * t - 2, 3 * t - 1, 3 * t] };
    let c_idx = |t: usize| [0, 1, t + 2];
    let terms = (0..r)
        .map(|t| Term {
            b: DMatrix::from_columns(&b_idx(t).map(|x| b.column(x).into_owned())),
            c: DMatrix::from_columns(&c_idx(t).map(|x| c.column(x).into_owned())),
        })
        .collect();
    BlockTermDecomposition::new(a, terms)
}

/// The three decompositions of the two-term tensor
/// `a1 o (b1c1' + b2c2' + b3c3') + a2 o (b1c1' + b2c2' + b4c4')`.
#[derive(Debug, Clone)]
pub struct SharedComponentDecompositions {
    pub original: BlockTermDecomposition<f64>,
    /// `a1 o (b3c3' - b4c4') + (a1 + a2) o (b1c1' + b2c2' + b4c4')`.
    pub first_alternative: BlockTermDecomposition<f64>,
    /// `(a1 + a2) o (b1c1' + b2c2' + b3c3') - a2 o (b3c3' - b4c4')`.
    pub second_alternative: BlockTermDecomposition<f64>,
}

pub fn shared_component_alternatives(
    a: [&DVector<f64>; 2],
    b: [&DVector<f64>; 4],
    c: [&DVector<f64>; 4],
) -> Result<SharedComponentDecompositions> {
    let cols = |v: &[&DVector<f64>]| DMatrix::from_columns(&v.iter().map(|x| (*x).clone()).collect::<Vec<_>>());
    let term = |bs: &[&DVector<f64>], cs: &[&DVector<f64>]| Term { b: cols(bs), c: cols(cs) };
    let [a1, a2] = a;
    let [b1, b2, b3, b4] = b;
    let [c1, c2, c3, c4] = c;
    let neg_c4 = -c4;
    let a12 = a1 + a2;
    let first_term = term(&[b1, b2, b3], &[c1, c2, c3]);
    let second_term = term(&[b1, b2, b4], &[c1, c2, c4]);
    let difference = term(&[b3, b4], &[c3, &neg_c4]);
    let neg_a2 = -a2;
    Ok(SharedComponentDecompositions {
        original: BlockTermDecomposition::new(cols(&[a1, a2]), vec![first_term.clone(), second_term.clone()])?,
        first_alternative: BlockTermDecomposition::new(cols(&[a1, &a12]), vec![difference.clone(), second_term])?,
        second_alternative: BlockTermDecomposition::new(cols(&[&a12, &neg_a2]), vec![first_term, difference])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::random_btd;

    const TOL: f64 = UNIQUENESS_RANK_TOL;

    #[test]
    fn k_rank_basics() {
        assert_eq!(k_rank(&DMatrix::<f64>::identity(4, 4), TOL), KRank { value: 4, exact: true });
        let mut m = DMatrix::<f64>::identity(4, 4);
        m.set_column(3, &(m.column(0) * 2.0));
        assert_eq!(k_rank(&m, TOL).value, 1);
        let r = random_btd::<f64>([3, 4, 4], &[1, 1, 1, 1, 1], 1).unwrap();
        assert_eq!(k_rank(&r.a, TOL).value, 3);
        assert!(k_rank(&r.a, TOL).value <= linalg::rank(&r.a, TOL));
    }

    #[test]
    fn k_prime_rank_of_tall_blocks() {
        let d = random_btd::<f64>([3, 9, 9], &[2, 3, 4], 2).unwrap();
        let bs: Vec<_> = d.terms.iter().map(|t| t.b.clone()).collect();
        assert_eq!(k_prime_rank(&bs, TOL).value, 3);
        let d = random_btd::<f64>([3, 6, 9], &[2, 3, 4], 2).unwrap();
        let bs: Vec<_> = d.terms.iter().map(|t| t.b.clone()).collect();
        assert_eq!(k_prime_rank(&bs, TOL).value, 1);
    }

    #[test]
    fn necessary_checks_detect_duplicates() {
        let d = random_btd::<f64>([3, 5, 5], &[2, 2, 2], 3).unwrap();
        assert!(check_necessary(&d, TOL).all());
        let mut dup = d.clone();
        dup.terms[1] = dup.terms[0].clone();
        assert!(!check_necessary(&dup, TOL).vec_e_fcr);
    }

    #[test]
    fn parameter_count_values() {
        let p = parameter_count_s([2, 8, 7], &[3, 3, 3]).unwrap();
        assert_eq!((p.s, p.ijk, p.passes), (111, 112, true));
        let p = parameter_count_s([2, 3, 4], &[1]).unwrap();
        assert_eq!(p.s, 2 - 1 + 3 + 4 - 1);
        assert!(!parameter_count_s([2, 8, 7], &[3, 3, 4]).unwrap().passes);
        assert!(parameter_count_s([2, 3, 4], &[4]).is_err());
    }

    #[test]
    fn bounds_for_tall_third_mode() {
        let sizes = |r: usize| {
            let mut v = vec![1; r - 1];
            v.push(2);
            v
        };
        assert!(generic_bounds([8, 8, 50], &sizes(48)).row8);
        assert!(!generic_bounds([8, 8, 50], &sizes(49)).row8);
        assert!(generic_bounds([8, 8, 50], &sizes(8)).row3);
        assert!(!generic_bounds([8, 8, 50], &sizes(9)).row3);
        assert!(generic_bounds([8, 8, 50], &sizes(39)).row6);
        assert!(!generic_bounds([8, 8, 50], &sizes(40)).row6);
        let small = generic_bounds([3, 3, 5], &[1, 1, 1, 2]);
        assert_eq!(small.row7, None);
        // K >= L_2 + ... + L_R + 1 = 5 holds but J = 3 < L_2 + L_3 + L_4.
        assert!(!small.row5);
    }

    #[test]
    fn generic_first_factor_inequality_matches_real_form() {
        for (dims, sizes) in [([3, 9, 15], vec![2, 2, 2, 3, 3, 4]), ([2, 8, 7], vec![3, 3, 3]), ([3, 8, 8], vec![2, 3, 4])] {
            let g = generic_bounds(dims, &sizes);
            let mut l = sizes.clone();
            l.sort_unstable();
            let sum: usize = l.iter().sum();
            let r = l.len() as f64;
            let rhs = -0.5 - (0.25 + 2.0 * (l[0] * l[1]) as f64 / (r - 1.0)).sqrt() + sum as f64;
            assert_eq!(g.main_generic.first_factor_inequality, g.main_generic.k_used as f64 >= rhs);
        }
    }

    #[test]
    fn main_theorem_on_generic_instances() {
        let d = random_btd::<f64>([3, 9, 15], &[2, 2, 2, 3, 3, 4], 4).unwrap();
        let rep = check_main_theorem(&d, None, TOL).unwrap();
        assert!(rep.conditions.a && rep.conditions.e && !rep.conditions.c);
        assert!(rep.statements.s4_first_factor_unique && !rep.statements.s5_overall_unique);
        let d = random_btd::<f64>([3, 14, 15], &[2, 2, 2, 3, 3, 4], 4).unwrap();
        let rep = check_main_theorem(&d, None, TOL).unwrap();
        assert!(rep.conditions.c && rep.statements.s5_overall_unique);
    }

    #[test]
    fn corollary_branches() {
        let d = random_btd::<f64>([3, 8, 8], &[2, 3, 3], 5).unwrap();
        let v = check_factor_rank_corollary(&d, TOL);
        assert!(v.holds && v.via_full_rank_a);
        let mut bad = d.clone();
        let c0 = bad.a.column(0) * 3.0;
        bad.a.set_column(1, &c0);
        assert!(!check_factor_rank_corollary(&bad, TOL).holds);
        let d = random_btd::<f64>([3, 14, 15], &[2, 2, 2, 3, 3, 4], 6).unwrap();
        let v = check_factor_rank_corollary(&d, TOL);
        assert!(v.holds && v.via_k_rank);
    }

    #[test]
    fn canonical_family_members_have_low_rank_terms() {
        let params = Canonical287Params::random(7);
        let t = params.decomposition().compose();
        for (p1, p2) in [(0.0, 0.0), (0.3, -0.7), (1.1, 0.4)] {
            let m = canonical_2x8x7_alternative(p1, p2, &params).unwrap();
            assert!(m.compose().sub(&t).unwrap().norm() <= 1e-10 * t.norm());
            for e in &m.e {
                assert!(max_abs_minor(e, 4) < 1e-10);
            }
        }
        let m = canonical_2x8x7_alternative(0.0, 0.0, &params).unwrap();
        assert_eq!((m.alpha, m.delta), (1.0, 1.0));
    }

    #[test]
    fn shared_component_decompositions_agree() {
        let d = random_btd::<f64>([3, 5, 5], &[1, 1, 1, 1], 8).unwrap();
        let b: Vec<DVector<f64>> = d.terms.iter().map(|t| t.b.column(0).into_owned()).collect();
        let c: Vec<DVector<f64>> = d.terms.iter().map(|t| t.c.column(0).into_owned()).collect();
        let a0 = d.a.column(0).into_owned();
        let a1 = d.a.column(1).into_owned();
        let set = shared_component_alternatives([&a0, &a1], [&b[0], &b[1], &b[2], &b[3]], [&c[0], &c[1], &c[2], &c[3]]).unwrap();
        let t = set.original.compose();
        for alt in [&set.first_alternative, &set.second_alternative] {
            assert!(alt.compose().sub(&t).unwrap().norm() <= 1e-12 * t.norm());
        }
        assert_eq!(linalg::rank(&set.first_alternative.terms[0].matrix(), TOL), 2);
    }

    #[test]
    fn shared_component_tensor_fails_minimal_null_dimension() {
        let d = random_btd::<f64>([3, 5, 4], &[1, 1, 1, 1], 9).unwrap();
        let b: Vec<DVector<f64>> = d.terms.iter().map(|t| t.b.column(0).into_owned()).collect();
        let c: Vec<DVector<f64>> = d.terms.iter().map(|t| t.c.column(0).into_owned()).collect();
        let a0 = d.a.column(0).into_owned();
        let a1 = d.a.column(1).into_owned();
        let set = shared_component_alternatives([&a0, &a1], [&b[0], &b[1], &b[2], &b[3]], [&c[0], &c[1], &c[2], &c[3]]).unwrap();
        let rep = check_main_theorem(&set.original, None, TOL).unwrap();
        assert!(rep.assumptions.q <= 4);
        assert_eq!(rep.assumptions.q2_null_dim, 5);
        assert!(!rep.assumptions.q2_dim_ok);
    }

    #[test]
    fn shared_component_instance_null_dimension() {
        for r in 3..=5 {
            let d = shared_component_instance(r, r as u64).unwrap();
            let q2 = build_q2(&d.compose()).unwrap();
            assert_eq!(q2.ncols() - linalg::rank(&q2, TOL), r);
        }
    }
}
