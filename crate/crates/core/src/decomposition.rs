//! Block-term decompositions `T = sum_r a_r o (B_r C_r^T)`, synthetic
//! generation, noise injection, third-mode compression and comparison of
//! decompositions up to permutation and scaling.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{self, rng_from_seed};
use crate::scalar::Scalar;
use crate::tensor::{Mode, Tensor3};

/// One multilinear rank-(1, L, L) term without its first-mode vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Term<T: Scalar> {
    /// `J x L` factor.
    pub b: DMatrix<T>,
    /// `K x L` factor.
    pub c: DMatrix<T>,
}

impl<T: Scalar> Term<T> {
    /// `E = B C^T`.
    pub fn matrix(&self) -> DMatrix<T> {
        &self.b * self.c.transpose()
    }

    pub fn size(&self) -> usize {
        self.b.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTermDecomposition<T: Scalar> {
    /// `I x R` first factor.
    pub a: DMatrix<T>,
    pub terms: Vec<Term<T>>,
}

impl<T: Scalar> BlockTermDecomposition<T> {
    pub fn new(a: DMatrix<T>, terms: Vec<Term<T>>) -> Result<Self> {
        if a.ncols() != terms.len() {
            return Err(invalid(format!("A has {} columns but there are {} terms", a.ncols(), terms.len())));
        }
        let (j, k) = terms.first().map_or((0, 0), |t| (t.b.nrows(), t.c.nrows()));
        for (r, t) in terms.iter().enumerate() {
            if t.b.ncols() != t.c.ncols() || t.b.ncols() == 0 {
                return Err(invalid(format!("term {r}: B and C need the same positive number of columns")));
            }
            if t.b.nrows() != j || t.c.nrows() != k {
                return Err(invalid(format!("term {r}: inconsistent B/C row counts")));
            }
            if a.column(r).norm() == 0.0 {
                return Err(invalid(format!("column {r} of A is zero")));
            }
        }
        Ok(BlockTermDecomposition { a, terms })
    }

    /// Builds a decomposition from full matrices `E_r`, factoring each by a
    /// truncated SVD of the given rank.
    pub fn from_term_matrices(a: DMatrix<T>, es: &[DMatrix<T>], sizes: &[usize]) -> Result<Self> {
        if es.len() != sizes.len() {
            return Err(invalid("one size per term matrix is required"));
        }
        let terms = es
            .iter()
            .zip(sizes)
            .map(|(e, &l)| {
                let (b, c) = linalg::truncated_factors(e, l);
                Term { b, c }
            })
            .collect();
        Self::new(a, terms)
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.terms.iter().map(Term::size).collect()
    }

    pub fn dims(&self) -> [usize; 3] {
        let (j, k) = self.terms.first().map_or((0, 0), |t| (t.b.nrows(), t.c.nrows()));
        [self.a.nrows(), j, k]
    }

    pub fn term_matrices(&self) -> Vec<DMatrix<T>> {
        self.terms.iter().map(Term::matrix).collect()
    }

    /// `[B_1 ... B_R]`.
    pub fn b_full(&self) -> DMatrix<T> {
        linalg::hstack(&self.terms.iter().map(|t| t.b.clone()).collect::<Vec<_>>())
    }

    /// `[C_1 ... C_R]`.
    pub fn c_full(&self) -> DMatrix<T> {
        linalg::hstack(&self.terms.iter().map(|t| t.c.clone()).collect::<Vec<_>>())
    }

    /// `[a_1 (x) vec(E_1) ... a_R (x) vec(E_R)]`, invariant to term scaling.
    pub fn term_vectors(&self) -> DMatrix<T> {
        let cols: Vec<DMatrix<T>> = self
            .terms
            .iter()
            .enumerate()
            .map(|(r, t)| {
                let e = linalg::vec_of(&t.matrix());
                linalg::kron(&self.a.column(r).into_owned(), &e)
            })
            .collect();
        linalg::hstack(&cols)
    }

    /// `[a_1 (x) B_1 ... a_R (x) B_R]`.
    pub fn a_kron_b(&self) -> DMatrix<T> {
        let blocks: Vec<_> =
            self.terms.iter().enumerate().map(|(r, t)| linalg::kron(&self.a.column(r).into_owned(), &t.b)).collect();
        linalg::hstack(&blocks)
    }

    /// `[a_1 (x) C_1 ... a_R (x) C_R]`.
    pub fn a_kron_c(&self) -> DMatrix<T> {
        let blocks: Vec<_> =
            self.terms.iter().enumerate().map(|(r, t)| linalg::kron(&self.a.column(r).into_owned(), &t.c)).collect();
        linalg::hstack(&blocks)
    }

    /// `t_ijk = sum_r a_ir (B_r C_r^T)_jk`.
    pub fn compose(&self) -> Tensor3<T> {
        let [ni, nj, nk] = self.dims();
        let es = self.term_matrices();
        Tensor3::from_fn([ni, nj, nk], |i, j, k| {
            es.iter().enumerate().fold(T::zero(), |acc, (r, e)| acc + self.a[(i, r)] * e[(j, k)])
        })
    }
}

/// Composes `d` after checking it matches the requested dimensions.
pub fn compose<T: Scalar>(d: &BlockTermDecomposition<T>, dims: [usize; 3]) -> Result<Tensor3<T>> {
    if d.dims() != dims {
        let [i, j, k] = d.dims();
        return Err(invalid(format!("factors describe a {i}x{j}x{k} tensor, not {}x{}x{}", dims[0], dims[1], dims[2])));
    }
    Ok(d.compose())
}

/// Factors with i.i.d. standard normal entries, drawn in the order A, B, C
/// (each column-major) from a ChaCha20 stream seeded with `seed`.
pub fn random_btd<T: Scalar>(dims: [usize; 3], sizes: &[usize], seed: u64) -> Result<BlockTermDecomposition<T>> {
    let [ni, nj, nk] = dims;
    if sizes.is_empty() || sizes.iter().any(|&l| l == 0 || l > nj.min(nk)) {
        return Err(invalid("every size must satisfy 1 <= L_r <= min(J, K)"));
    }
    let mut rng = rng_from_seed(seed);
    let total: usize = sizes.iter().sum();
    let a = DMatrix::from_fn(ni, sizes.len(), |_, _| T::sample_normal(&mut rng));
    let b = DMatrix::from_fn(nj, total, |_, _| T::sample_normal(&mut rng));
    let c = DMatrix::from_fn(nk, total, |_, _| T::sample_normal(&mut rng));
    let mut off = 0;
    let terms = sizes
        .iter()
        .map(|&l| {
            let t = Term {
                b: b.columns(off, l).into_owned(),
                c: c.columns(off, l).into_owned(),
            };
            off += l;
            t
        })
        .collect();
    BlockTermDecomposition::new(a, terms)
}

/// Signal-to-noise ratio of an additive perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Snr {
    /// No noise at all.
    Exact,
    Db(f64),
}

impl std::fmt::Display for Snr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Snr::Exact => write!(f, "inf"),
            Snr::Db(v) => write!(f, "{v}"),
        }
    }
}

impl std::str::FromStr for Snr {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("inf") {
            return Ok(Snr::Exact);
        }
        let v: f64 = s.parse().map_err(|_| invalid(format!("bad SNR value `{s}`")))?;
        if !v.is_finite() {
            return Err(invalid("SNR must be finite or `inf`"));
        }
        Ok(Snr::Db(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr: Snr,
    pub seed: u64,
}

/// Returns `T + c N` with `N` standard normal and `c` chosen so that
/// `10 log10(|T|^2 / |cN|^2)` equals the requested SNR.
pub fn add_noise<T: Scalar>(t: &Tensor3<T>, spec: NoiseSpec) -> Result<Tensor3<T>> {
    let tn = t.norm();
    if tn == 0.0 {
        return Err(invalid("cannot set an SNR relative to the zero tensor"));
    }
    let db = match spec.snr {
        Snr::Exact => return Ok(t.clone()),
        Snr::Db(v) => v,
    };
    let mut rng = rng_from_seed(spec.seed);
    let noise: Vec<T> = (0..t.values().len()).map(|_| T::sample_normal(&mut rng)).collect();
    let nn = noise.iter().map(|v| v.modulus_squared()).sum::<f64>().sqrt();
    let c = tn / (nn * 10f64.powf(db / 20.0));
    let values = t.values().iter().zip(&noise).map(|(x, n)| *x + n.scale(c)).collect();
    Tensor3::new(t.dims(), values)
}

/// Result of replacing the mode-3 unfolding by its orthonormal column basis.
#[derive(Debug, Clone)]
pub struct ThirdModeCompression<T: Scalar> {
    /// `I x J x K~` tensor with `unfold3 = U`.
    pub tensor: Tensor3<T>,
    /// `K~ x K` matrix `S V^H` with `unfold3(original) = unfold3(compressed) * mixing`.
    pub mixing: DMatrix<T>,
    pub original_rank: usize,
}

impl<T: Scalar> ThirdModeCompression<T> {
    /// Maps a third factor of the compressed tensor to one of the original.
    pub fn expand_third_factor(&self, c_compressed: &DMatrix<T>) -> DMatrix<T> {
        self.mixing.transpose() * c_compressed
    }

    pub fn expand(&self, d: &BlockTermDecomposition<T>) -> Result<BlockTermDecomposition<T>> {
        let terms = d
            .terms
            .iter()
            .map(|t| Term {
                b: t.b.clone(),
                c: self.expand_third_factor(&t.c),
            })
            .collect();
        BlockTermDecomposition::new(d.a.clone(), terms)
    }
}

pub fn compress_third_mode<T: Scalar>(t: &Tensor3<T>, tol: f64) -> ThirdModeCompression<T> {
    let [ni, nj, _] = t.dims();
    let t3 = t.unfold(Mode::Three);
    let dec = linalg::svd(&t3);
    let r = linalg::rank_from_values(&dec.s, tol);
    let u = dec.u.columns(0, r).into_owned();
    let mut mixing = dec.v.columns(0, r).adjoint();
    for k in 0..r {
        mixing.row_mut(k).scale_mut(dec.s[k]);
    }
    ThirdModeCompression {
        tensor: Tensor3::from_unfold3(ni, nj, &u).expect("shape preserved"),
        mixing,
        original_rank: r,
    }
}

/// Third factor from `unfold3(T) = [a_1 (x) B_1 ...] C^T`, i.e.
/// `C = ([a_1 (x) B_1 ...]^+ unfold3(T))^T`.
pub fn third_factor_from_first_two<T: Scalar>(
    t: &Tensor3<T>,
    a: &DMatrix<T>,
    bs: &[DMatrix<T>],
    tol: f64,
) -> DMatrix<T> {
    let blocks: Vec<_> = bs.iter().enumerate().map(|(r, b)| linalg::kron(&a.column(r).into_owned(), b)).collect();
    let w = linalg::hstack(&blocks);
    (linalg::pinv(&w, tol) * t.unfold(Mode::Three)).transpose()
}

/// Outcome of aligning an estimate with a reference decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchReport {
    /// `permutation[r]` is the estimated term matched to reference term `r`.
    pub permutation: Vec<usize>,
    /// Least-squares scale applied to each matched estimated column of `A`.
    pub scales: Vec<[f64; 2]>,
    pub err_a: f64,
    pub err_terms: f64,
}

const EXHAUSTIVE_MATCH_LIMIT: usize = 7;

/// Matches terms by absolute normalised correlation of `a_r (x) vec(E_r)` and
/// reports relative Frobenius errors after compensating scaling.
pub fn match_decompositions<T: Scalar>(
    truth: &BlockTermDecomposition<T>,
    est: &BlockTermDecomposition<T>,
) -> Result<MatchReport> {
    let r = truth.num_terms();
    if est.num_terms() != r {
        return Err(invalid(format!("reference has {r} terms, estimate has {}", est.num_terms())));
    }
    if truth.dims() != est.dims() {
        return Err(invalid("decompositions describe tensors of different size"));
    }
    let tv = truth.term_vectors();
    let ev = est.term_vectors();
    let corr = DMatrix::from_fn(r, r, |p, q| {
        let (x, y) = (tv.column(p), ev.column(q));
        let denom = x.norm() * y.norm();
        if denom == 0.0 {
            0.0
        } else {
            x.dotc(&y).modulus() / denom
        }
    });
    let permutation = best_assignment(&corr);

    let mut a_err = DMatrix::<T>::zeros(truth.a.nrows(), r);
    let mut term_err = DMatrix::<T>::zeros(tv.nrows(), r);
    let mut scales = Vec::with_capacity(r);
    for (p, &q) in permutation.iter().enumerate() {
        let at = truth.a.column(p);
        let ae = est.a.column(q);
        let lambda = ae.dotc(&at) / T::from_real(ae.norm_squared());
        a_err.set_column(p, &(at - ae * lambda));
        term_err.set_column(p, &(tv.column(p) - ev.column(q)));
        let z = lambda.to_complex();
        scales.push([z.re, z.im]);
    }
    Ok(MatchReport {
        permutation,
        scales,
        err_a: a_err.norm() / truth.a.norm(),
        err_terms: term_err.norm() / tv.norm(),
    })
}

/// Assignment maximising the total score: exhaustive for small sizes, greedy otherwise.
pub(crate) fn best_assignment(score: &DMatrix<f64>) -> Vec<usize> {
    let n = score.nrows();
    if n <= EXHAUSTIVE_MATCH_LIMIT {
        let mut best = (f64::NEG_INFINITY, (0..n).collect::<Vec<_>>());
        let mut perm: Vec<usize> = (0..n).collect();
        permute(&mut perm, 0, &mut |p| {
            let s: f64 = p.iter().enumerate().map(|(i, &j)| score[(i, j)]).sum();
            if s > best.0 {
                best = (s, p.to_vec());
            }
        });
        return best.1;
    }
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    pairs.sort_by(|x, y| score[*y].total_cmp(&score[*x]));
    let mut out = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for (i, j) in pairs {
        if out[i] == usize::MAX && !used[j] {
            out[i] = j;
            used[j] = true;
        }
    }
    out
}

fn permute(p: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}

/// Relative Frobenius residual `|T - compose(d)| / |T|`.
pub fn relative_residual<T: Scalar>(t: &Tensor3<T>, d: &BlockTermDecomposition<T>) -> f64 {
    let diff = t.sub(&d.compose()).map(|x| x.norm()).unwrap_or(f64::INFINITY);
    let n = t.norm();
    if n == 0.0 {
        diff
    } else {
        diff / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    #[test]
    fn compose_single_identity_term() {
        let d = BlockTermDecomposition::new(
            DMatrix::from_element(1, 1, 1.0),
            vec![Term {
                b: DMatrix::identity(2, 2),
                c: DMatrix::identity(2, 2),
            }],
        )
        .unwrap();
        let t = compose(&d, [1, 2, 2]).unwrap();
        assert_eq!(t.horizontal_slice(0), DMatrix::identity(2, 2));
        assert!(compose(&d, [1, 2, 3]).is_err());
    }

    #[test]
    fn unfoldings_match_factor_forms() {
        let d = random_btd::<f64>([3, 4, 5], &[1, 2, 2], 11).unwrap();
        let t = d.compose();
        // Direct summation oracle for every entry.
        let es = d.term_matrices();
        for i in 0..3 {
            for j in 0..4 {
                for k in 0..5 {
                    let mut s = 0.0;
                    for r in 0..3 {
                        s += d.a[(i, r)] * es[r][(j, k)];
                    }
                    assert_relative_eq!(t.get(i, j, k), s, epsilon = 1e-12);
                }
            }
        }
        let vec_e = linalg::hstack(&es.iter().map(|e| DMatrix::from_column_slice(20, 1, e.as_slice())).collect::<Vec<_>>());
        assert!((t.unfold(Mode::One) - vec_e * d.a.transpose()).norm() < 1e-12);
        assert!((t.unfold(Mode::Three) - d.a_kron_b() * d.c_full().transpose()).norm() < 1e-12);
        let t2: DMatrix<f64> = t.unfold(Mode::Two);
        let mut expected = DMatrix::zeros(15, 4);
        for r in 0..3 {
            expected += linalg::kron(&d.a.column(r), &es[r].transpose());
        }
        assert!((t2 - expected).norm() < 1e-12);
    }

    #[test]
    fn random_generation_is_deterministic() {
        let x = random_btd::<Complex64>([3, 4, 4], &[2, 2], 5).unwrap();
        let y = random_btd::<Complex64>([3, 4, 4], &[2, 2], 5).unwrap();
        assert_eq!(x, y);
        let z = random_btd::<Complex64>([3, 4, 4], &[2, 2], 6).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn single_term_has_multilinear_rank_1_l_l() {
        let d = random_btd::<f64>([3, 5, 6], &[3], 2).unwrap();
        let t = d.compose();
        assert_eq!(linalg::rank(&t.unfold(Mode::One), 1e-10), 1);
        assert_eq!(linalg::rank(&t.unfold(Mode::Two), 1e-10), 3);
        assert_eq!(linalg::rank(&t.unfold(Mode::Three), 1e-10), 3);
    }

    #[test]
    fn noise_hits_requested_snr() {
        let t = random_btd::<f64>([3, 4, 5], &[1, 2], 1).unwrap().compose();
        for db in [0.0, 20.0, 35.5] {
            let noisy = add_noise(&t, NoiseSpec { snr: Snr::Db(db), seed: 9 }).unwrap();
            let n = noisy.sub(&t).unwrap().norm();
            let realised = 10.0 * (t.norm().powi(2) / n.powi(2)).log10();
            assert!((realised - db).abs() < 1e-10);
        }
        let exact = add_noise(&t, NoiseSpec { snr: Snr::Exact, seed: 9 }).unwrap();
        assert_eq!(exact, t);
        assert!(add_noise(&Tensor3::<f64>::zeros([2, 2, 2]), NoiseSpec { snr: Snr::Db(10.0), seed: 0 }).is_err());
    }

    #[test]
    fn twenty_db_means_one_tenth() {
        let t = random_btd::<Complex64>([2, 3, 3], &[1, 1], 4).unwrap().compose();
        let noisy = add_noise(&t, NoiseSpec { snr: Snr::Db(20.0), seed: 1 }).unwrap();
        assert_relative_eq!(noisy.sub(&t).unwrap().norm() / t.norm(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn compression_drops_duplicated_slice() {
        let d = random_btd::<f64>([3, 4, 4], &[1, 2], 3).unwrap();
        let t = d.compose();
        let dup = Tensor3::from_fn([3, 4, 5], |i, j, k| t.get(i, j, k.min(3)));
        let comp = compress_third_mode(&dup, 1e-10);
        assert_eq!(comp.original_rank, 3);
        assert_eq!(comp.tensor.dims(), [3, 4, 3]);
        let back = comp.tensor.unfold(Mode::Three) * &comp.mixing;
        assert!((back - dup.unfold(Mode::Three)).norm() < 1e-10 * dup.norm());
    }

    #[test]
    fn third_factor_recovery_after_compression() {
        let d = random_btd::<f64>([3, 5, 6], &[1, 2], 8).unwrap();
        let t = d.compose();
        let comp = compress_third_mode(&t, 1e-10);
        assert_eq!(comp.original_rank, 3);
        let bs: Vec<_> = d.terms.iter().map(|x| x.b.clone()).collect();
        let c_small = third_factor_from_first_two(&comp.tensor, &d.a, &bs, 1e-10);
        let c = comp.expand_third_factor(&c_small);
        let rebuilt = d.a_kron_b() * c.transpose();
        assert!((rebuilt - t.unfold(Mode::Three)).norm() < 1e-10 * t.norm());
    }

    #[test]
    fn matching_is_invariant_to_permutation_and_scaling() {
        let truth = random_btd::<Complex64>([3, 4, 5], &[1, 2, 2], 21).unwrap();
        let order = [2usize, 0, 1];
        let lam = [Complex64::new(2.0, 1.0), Complex64::new(-0.5, 0.0), Complex64::new(0.0, 3.0)];
        let mut a = DMatrix::zeros(3, 3);
        let mut terms = Vec::new();
        for (q, &p) in order.iter().enumerate() {
            a.set_column(q, &(truth.a.column(p) * lam[q]));
            terms.push(Term {
                b: truth.terms[p].b.clone() / lam[q],
                c: truth.terms[p].c.clone(),
            });
        }
        let est = BlockTermDecomposition::new(a, terms).unwrap();
        let rep = match_decompositions(&truth, &est).unwrap();
        assert_eq!(rep.permutation, vec![1, 2, 0]);
        assert!(rep.err_a < 1e-12 && rep.err_terms < 1e-12);
    }

    #[test]
    fn matching_measures_orthogonal_perturbation() {
        let truth = random_btd::<f64>([4, 3, 3], &[1, 1], 2).unwrap();
        // Perturbation orthogonal to each column of A, unit Frobenius norm.
        let mut p = DMatrix::from_fn(4, 2, |i, j| ((i + 3 * j) as f64).sin());
        for r in 0..2 {
            let a = truth.a.column(r).into_owned();
            let proj = a.dot(&p.column(r)) / a.norm_squared();
            let col = p.column(r) - a * proj;
            p.set_column(r, &col);
        }
        p /= p.norm();
        let delta = 1e-6;
        let est = BlockTermDecomposition::new(&truth.a + &p * delta, truth.terms.clone()).unwrap();
        let rep = match_decompositions(&truth, &est).unwrap();
        assert!((rep.err_a - delta / truth.a.norm()).abs() < 1e-8);
        assert!(match_decompositions(&truth, &random_btd::<f64>([4, 3, 3], &[1], 0).unwrap()).is_err());
    }
}
