//! Exact rank computations over finite fields, used to certify generic rank
//! conditions without roundoff.
//!
//! The entries of `Q2` and `Phi` are integer polynomials in the factor
//! entries. A minor that is nonzero at one point over a field of
//! characteristic `p` is a nonzero polynomial over the integers, so a rank
//! witnessed over `GF(p^k)` is a lower bound for the generic rank over the
//! reals and the complex numbers.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::linalg::{binom, derive_seed, rng_from_seed, Rng};
use crate::minors::phi_s2_from_factors;
use crate::scalar::Ring;

/// Arithmetic of a finite field whose elements are small machine words.
pub trait FiniteField: Ring + Eq + fmt::Display + Neg<Output = Self> {
    /// Human-readable field name, e.g. `GF(2^15)`.
    fn name() -> String;
    fn characteristic() -> u64;
    /// Multiplicative inverse; `None` for zero.
    fn inv(self) -> Option<Self>;
    /// Uniform draw from the whole field.
    fn random(rng: &mut Rng) -> Self;
    /// Image of an integer under the canonical ring map.
    fn from_i64(v: i64) -> Self;
}

/// Element of `GF(2^K)` with reduction polynomial `POLY` (bit `K` set).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Gf2k<const K: u32, const POLY: u64>(pub u64);

/// `GF(2^15)` modulo `x^15 + x + 1`.
pub type Gf2_15 = Gf2k<15, 0x8003>;
/// `GF(2^8)` modulo `x^8 + x^4 + x^3 + x + 1`.
pub type Gf2_8 = Gf2k<8, 0x11B>;

impl<const K: u32, const POLY: u64> Gf2k<K, POLY> {
    const MASK: u64 = (1u64 << K) - 1;

    pub fn new(v: u64) -> Self {
        Gf2k(v & Self::MASK)
    }

    fn pow(self, mut e: u64) -> Self {
        let mut base = self;
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }
}

impl<const K: u32, const POLY: u64> fmt::Debug for Gf2k<K, POLY> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

impl<const K: u32, const POLY: u64> fmt::Display for Gf2k<K, POLY> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

impl<const K: u32, const POLY: u64> Add for Gf2k<K, POLY> {
    type Output = Self;
    // Characteristic 2: addition is XOR.
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, o: Self) -> Self {
        Gf2k(self.0 ^ o.0)
    }
}

impl<const K: u32, const POLY: u64> Sub for Gf2k<K, POLY> {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn sub(self, o: Self) -> Self {
        Gf2k(self.0 ^ o.0)
    }
}

impl<const K: u32, const POLY: u64> Neg for Gf2k<K, POLY> {
    type Output = Self;
    fn neg(self) -> Self {
        self
    }
}

impl<const K: u32, const POLY: u64> Mul for Gf2k<K, POLY> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        // Shift-and-add with interleaved reduction.
        let (mut a, mut b, mut acc) = (self.0, o.0, 0u64);
        while b != 0 {
            if b & 1 == 1 {
                acc ^= a;
            }
            b >>= 1;
            a <<= 1;
            if a >> K & 1 == 1 {
                a ^= POLY;
            }
        }
        Gf2k(acc)
    }
}

impl<const K: u32, const POLY: u64> Zero for Gf2k<K, POLY> {
    fn zero() -> Self {
        Gf2k(0)
    }
    fn is_zero(&self) -> bool {
        self.0 == 0
    }
}

impl<const K: u32, const POLY: u64> One for Gf2k<K, POLY> {
    fn one() -> Self {
        Gf2k(1)
    }
}

impl<const K: u32, const POLY: u64> FiniteField for Gf2k<K, POLY> {
    fn name() -> String {
        format!("GF(2^{K})")
    }
    fn characteristic() -> u64 {
        2
    }
    fn inv(self) -> Option<Self> {
        (self.0 != 0).then(|| self.pow((1u64 << K) - 2))
    }
    fn random(rng: &mut Rng) -> Self {
        Gf2k(rng.gen_range(0..1u64 << K))
    }
    fn from_i64(v: i64) -> Self {
        Gf2k((v & 1) as u64)
    }
}

/// Element of the prime field `GF(P)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Fp<const P: u64>(pub u64);

/// `GF(2^31 - 1)`, a Mersenne prime field.
pub type Fp31 = Fp<2_147_483_647>;

impl<const P: u64> Fp<P> {
    pub fn new(v: u64) -> Self {
        Fp(v % P)
    }

    fn pow(self, mut e: u64) -> Self {
        let mut base = self;
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }
}

impl<const P: u64> fmt::Debug for Fp<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<const P: u64> fmt::Display for Fp<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<const P: u64> Add for Fp<P> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Fp((self.0 + o.0) % P)
    }
}

impl<const P: u64> Sub for Fp<P> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Fp((self.0 + P - o.0) % P)
    }
}

impl<const P: u64> Neg for Fp<P> {
    type Output = Self;
    fn neg(self) -> Self {
        Fp((P - self.0) % P)
    }
}

impl<const P: u64> Mul for Fp<P> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Fp(((self.0 as u128 * o.0 as u128) % P as u128) as u64)
    }
}

impl<const P: u64> Zero for Fp<P> {
    fn zero() -> Self {
        Fp(0)
    }
    fn is_zero(&self) -> bool {
        self.0 == 0
    }
}

impl<const P: u64> One for Fp<P> {
    fn one() -> Self {
        Fp(1 % P)
    }
}

impl<const P: u64> FiniteField for Fp<P> {
    fn name() -> String {
        format!("GF({P})")
    }
    fn characteristic() -> u64 {
        P
    }
    fn inv(self) -> Option<Self> {
        (self.0 != 0).then(|| self.pow(P - 2))
    }
    fn random(rng: &mut Rng) -> Self {
        Fp(rng.gen_range(0..P))
    }
    fn from_i64(v: i64) -> Self {
        Fp(v.rem_euclid(P as i64) as u64)
    }
}

/// Whether the binary polynomial with bit mask `poly` is irreducible over GF(2).
pub fn is_irreducible_binary(poly: u64) -> bool {
    let deg = 63 - poly.leading_zeros() as i32;
    if poly == 0 || deg < 1 {
        return false;
    }
    // Trial division by every polynomial of degree 1..=deg/2.
    for d in 1..=deg / 2 {
        for q in (1u64 << d)..(1u64 << (d + 1)) {
            if binary_poly_rem(poly, q) == 0 {
                return false;
            }
        }
    }
    true
}

fn binary_poly_rem(mut a: u64, b: u64) -> u64 {
    let db = 63 - b.leading_zeros();
    while a != 0 && 63 - a.leading_zeros() >= db {
        a ^= b << (63 - a.leading_zeros() - db);
    }
    a
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// Whether the field parameters of `Gf2k<K, POLY>` define a field.
pub fn gf2k_is_valid<const K: u32, const POLY: u64>() -> bool {
    K >= 1 && K <= 32 && (POLY >> K) == 1 && is_irreducible_binary(POLY)
}

/// Exact rank by Gaussian elimination with row pivoting.
pub fn gf_rank<F: FiniteField>(m: &DMatrix<F>) -> usize {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let Some(p) = (rank..rows).find(|&r| !a[(r, c)].is_zero()) else {
            continue;
        };
        a.swap_rows(rank, p);
        let inv = a[(rank, c)].inv().expect("pivot is nonzero");
        for r in rank + 1..rows {
            let f = a[(r, c)] * inv;
            if f.is_zero() {
                continue;
            }
            for cc in c..cols {
                let v = a[(rank, cc)];
                a[(r, cc)] = a[(r, cc)] - f * v;
            }
        }
        rank += 1;
    }
    rank
}

/// Matrix product over a ring without relying on nalgebra's closed-field ops.
pub fn ring_matmul<T: Ring>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    DMatrix::from_fn(a.nrows(), b.ncols(), |i, j| (0..a.ncols()).fold(T::zero(), |acc, k| acc + a[(i, k)] * b[(k, j)]))
}

/// Exact rank over the rationals by fraction-free (Bareiss) elimination.
pub fn rational_rank(m: &DMatrix<i64>) -> usize {
    let (rows, cols) = m.shape();
    let mut a: Vec<Vec<BigInt>> = (0..rows).map(|r| (0..cols).map(|c| BigInt::from(m[(r, c)])).collect()).collect();
    let mut prev = BigInt::one();
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let Some(p) = (rank..rows).find(|&r| !a[r][c].is_zero()) else {
            continue;
        };
        a.swap(rank, p);
        for r in rank + 1..rows {
            for cc in c + 1..cols {
                let v = &a[rank][c] * &a[r][cc] - &a[r][c] * &a[rank][cc];
                a[r][cc] = v / &prev;
            }
            a[r][c] = BigInt::zero();
        }
        prev = a[rank][c].clone();
        rank += 1;
    }
    rank
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    /// The expected rank was witnessed in at least one trial.
    Certified,
    /// No trial reached the expected rank; nothing follows.
    Inconclusive,
    /// A counting argument shows the expected rank is unreachable.
    Impossible { reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GfConfig {
    pub i: usize,
    pub j: usize,
    pub k: Option<usize>,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GfVerificationResult {
    pub config: GfConfig,
    pub field: String,
    pub trials: usize,
    pub verdict: Verdict,
    /// Largest rank seen over all trials.
    pub witnessed_rank: usize,
    pub expected: usize,
}

impl GfVerificationResult {
    pub fn certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }
}

/// Default number of random trials before reporting an inconclusive verdict.
pub const DEFAULT_TRIALS: usize = 5;

fn random_matrix<F: FiniteField>(rows: usize, cols: usize, rng: &mut Rng) -> DMatrix<F> {
    DMatrix::from_fn(rows, cols, |_, _| F::random(rng))
}

fn split_columns<T: Ring>(m: &DMatrix<T>, sizes: &[usize]) -> Vec<DMatrix<T>> {
    let mut off = 0;
    sizes
        .iter()
        .map(|&l| {
            let b = m.columns(off, l).into_owned();
            off += l;
            b
        })
        .collect()
}

fn pair_product_sum(sizes: &[usize]) -> usize {
    let mut s = 0;
    for a in 0..sizes.len() {
        for b in a + 1..sizes.len() {
            s += sizes[a] * sizes[b];
        }
    }
    s
}

/// `Phi(A, B)` for random factors over `F`.
pub fn random_phi<F: FiniteField>(i: usize, j: usize, sizes: &[usize], rng: &mut Rng) -> DMatrix<F> {
    let r = sizes.len();
    let a = random_matrix::<F>(i, r, rng);
    let b = random_matrix::<F>(j, sizes.iter().sum(), rng);
    let cs: Vec<DMatrix<F>> = sizes.iter().map(|&l| DMatrix::zeros(1, l)).collect();
    phi_s2_from_factors(&a, &split_columns(&b, sizes), &cs).expect("consistent shapes").phi
}

/// Full column rank of `Phi(A, B)` for random factors over `F`.
pub fn verify_phi_full_rank_in<F: FiniteField>(
    i: usize,
    j: usize,
    sizes: &[usize],
    trials: usize,
    seed: u64,
) -> GfVerificationResult {
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    let r = sorted.len();
    let expected = pair_product_sum(&sorted);
    let rows = binom(i, 2) * binom(j, 2);
    let config = GfConfig { i, j, k: None, sizes: sorted.clone() };
    let mut out = GfVerificationResult {
        config,
        field: F::name(),
        trials: 0,
        verdict: Verdict::Inconclusive,
        witnessed_rank: 0,
        expected,
    };
    if expected == 0 {
        out.verdict = Verdict::Certified;
        return out;
    }
    if rows < expected {
        out.verdict = Verdict::Impossible {
            reason: format!("C(I,2) C(J,2) = {rows} rows but {expected} columns"),
        };
        return out;
    }
    if r >= 2 && j < sorted[r - 2] + sorted[r - 1] {
        out.verdict = Verdict::Impossible {
            reason: format!("J = {j} < L_(R-1) + L_R = {}", sorted[r - 2] + sorted[r - 1]),
        };
        return out;
    }
    for t in 0..trials {
        let mut rng = rng_from_seed(derive_seed(seed, t as u64));
        let rank = gf_rank(&random_phi::<F>(i, j, &sorted, &mut rng));
        out.trials = t + 1;
        out.witnessed_rank = out.witnessed_rank.max(rank);
        if rank == expected {
            out.verdict = Verdict::Certified;
            break;
        }
    }
    out
}

/// [`verify_phi_full_rank_in`] over `GF(2^15)`.
pub fn verify_phi_full_rank(i: usize, j: usize, sizes: &[usize], trials: usize, seed: u64) -> GfVerificationResult {
    verify_phi_full_rank_in::<Gf2_15>(i, j, sizes, trials, seed)
}

/// `d_r = K - sum(L) + L_r`, using `K = min(K, sum L)`.
pub fn generic_block_sizes(k: usize, sizes: &[usize]) -> Option<Vec<usize>> {
    let sum: usize = sizes.iter().sum();
    let k = k.min(sum);
    sizes.iter().map(|&l| (k + l).checked_sub(sum).filter(|&d| d >= 1)).collect()
}

/// `Q2 = Phi S2^T` over `F` for given factors.
pub fn q2_from_factors<T: Ring>(a: &DMatrix<T>, bs: &[DMatrix<T>], cs: &[DMatrix<T>]) -> DMatrix<T> {
    let f = phi_s2_from_factors(a, bs, cs).expect("consistent shapes");
    ring_matmul(&f.phi, &f.s2.transpose())
}

/// Generic dimension of `null(Q2)` for random factors over `F`.
///
/// `Q2` is formed as `Phi S2^T`, so every intermediate stays in the field.
/// Characteristic two is a poor choice here because the diagonal of every
/// symmetric product is doubled and vanishes.
pub fn verify_generic_q2_dim_in<F: FiniteField>(
    i: usize,
    j: usize,
    k: usize,
    sizes: &[usize],
    trials: usize,
    seed: u64,
) -> GfVerificationResult {
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    let sum: usize = sorted.iter().sum();
    let k_eff = k.min(sum);
    let config = GfConfig { i, j, k: Some(k_eff), sizes: sorted.clone() };
    let cols = binom(k_eff + 1, 2);
    let mut out = GfVerificationResult {
        config,
        field: F::name(),
        trials: 0,
        verdict: Verdict::Inconclusive,
        witnessed_rank: 0,
        expected: 0,
    };
    let Some(d) = generic_block_sizes(k_eff, &sorted) else {
        out.verdict = Verdict::Impossible {
            reason: format!("d_1 = K - sum(L) + L_1 < 1 for K = {k_eff}"),
        };
        return out;
    };
    let q: usize = d.iter().map(|&x| binom(x + 1, 2)).sum();
    out.expected = cols - q;
    if out.expected == 0 {
        out.verdict = Verdict::Certified;
        return out;
    }
    for t in 0..trials {
        let mut rng = rng_from_seed(derive_seed(seed, t as u64));
        let a = random_matrix::<F>(i, sorted.len(), &mut rng);
        let b = random_matrix::<F>(j, sum, &mut rng);
        let c = random_matrix::<F>(k_eff, sum, &mut rng);
        let q2 = q2_from_factors(&a, &split_columns(&b, &sorted), &split_columns(&c, &sorted));
        let rank = gf_rank(&q2);
        out.trials = t + 1;
        out.witnessed_rank = out.witnessed_rank.max(rank);
        if rank == out.expected {
            out.verdict = Verdict::Certified;
            break;
        }
    }
    out
}

/// [`verify_generic_q2_dim_in`] over `GF(2^31 - 1)`.
pub fn verify_generic_q2_dim(i: usize, j: usize, k: usize, sizes: &[usize], trials: usize, seed: u64) -> GfVerificationResult {
    verify_generic_q2_dim_in::<Fp31>(i, j, k, sizes, trials, seed)
}

/// Ranks of one integer instance of `Q2 = Phi S2^T` computed both over
/// `GF(2^31 - 1)` and over the rationals. Entries of the factors are drawn
/// from `-bound..=bound`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalCrossCheck {
    pub gf_rank: usize,
    pub rational_rank: usize,
    pub expected: usize,
}

pub fn q2_rank_cross_check(i: usize, j: usize, k: usize, sizes: &[usize], bound: i64, seed: u64) -> RationalCrossCheck {
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    let sum: usize = sorted.iter().sum();
    let k_eff = k.min(sum);
    let mut rng = rng_from_seed(seed);
    let mut draw = |rows: usize, cols: usize| DMatrix::<i64>::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound));
    let a = draw(i, sorted.len());
    let b = draw(j, sum);
    let c = draw(k_eff, sum);
    let q2 = q2_from_factors(&a, &split_columns(&b, &sorted), &split_columns(&c, &sorted));
    let q2_gf = q2.map(Fp31::from_i64);
    let expected = generic_block_sizes(k_eff, &sorted)
        .map(|d| binom(k_eff + 1, 2) - d.iter().map(|&x| binom(x + 1, 2)).sum::<usize>())
        .unwrap_or(0);
    RationalCrossCheck { gf_rank: gf_rank(&q2_gf), rational_rank: rational_rank(&q2), expected }
}

/// Tuples `(I, J, L)` with `2 <= I, J <= max_dim`, `L` nondecreasing with
/// `R >= 2`, satisfying the two counting conditions necessary for `Phi` to
/// have full column rank.
pub fn phi_count_tuples(max_dim: usize) -> Vec<(usize, usize, Vec<usize>)> {
    let mut out = Vec::new();
    for i in 2..=max_dim {
        for j in 2..=max_dim {
            let rows = binom(i, 2) * binom(j, 2);
            // Every extra term adds at least `sum L >= R - 1` columns, so R is bounded.
            let mut r = 2;
            loop {
                let min_cols = binom(r, 2);
                if min_cols > rows {
                    break;
                }
                let mut cur = Vec::new();
                enumerate_sizes(r, 1, j, &mut cur, &mut |l| {
                    if l[r - 2] + l[r - 1] <= j && pair_product_sum(l) <= rows {
                        out.push((i, j, l.to_vec()));
                    }
                });
                r += 1;
            }
        }
    }
    out
}

fn enumerate_sizes(remaining: usize, min: usize, max: usize, cur: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if remaining == 0 {
        visit(cur);
        return;
    }
    for v in min..=max {
        cur.push(v);
        enumerate_sizes(remaining - 1, v, max, cur, visit);
        cur.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_parameters_are_valid() {
        assert!(gf2k_is_valid::<15, 0x8003>());
        assert!(gf2k_is_valid::<8, 0x11B>());
        assert!(!is_irreducible_binary(0b101)); // x^2 + 1 = (x + 1)^2
        assert!(is_prime(2_147_483_647));
    }

    #[test]
    fn every_nonzero_element_of_gf256_is_invertible() {
        for v in 1..256 {
            let a = Gf2_8::new(v);
            assert_eq!(a * a.inv().unwrap(), Gf2_8::one());
        }
        assert!(Gf2_8::zero().inv().is_none());
    }

    #[test]
    fn sampled_inverses_in_larger_fields() {
        let mut rng = rng_from_seed(1);
        for _ in 0..2000 {
            let a = Gf2_15::random(&mut rng);
            if !a.is_zero() {
                assert_eq!(a * a.inv().unwrap(), Gf2_15::one());
            }
            let b = Fp31::random(&mut rng);
            if !b.is_zero() {
                assert_eq!(b * b.inv().unwrap(), Fp31::one());
            }
        }
    }

    #[test]
    fn small_ranks() {
        let id = DMatrix::<Gf2_15>::identity(6, 6);
        assert_eq!(gf_rank(&id), 6);
        type Gf2 = Gf2k<1, 0b11>;
        let ones = DMatrix::from_element(2, 2, Gf2::one());
        assert_eq!(gf_rank(&ones), 1);
        let m = DMatrix::from_row_slice(3, 3, &[1i64, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert_eq!(rational_rank(&m), 2);
        assert_eq!(gf_rank(&m.map(Fp31::from_i64)), 2);
    }

    #[test]
    fn rank_ignores_row_and_column_order() {
        let mut rng = rng_from_seed(5);
        let a = random_matrix::<Gf2_15>(7, 4, &mut rng);
        let low = ring_matmul(&a, &random_matrix::<Gf2_15>(4, 9, &mut rng));
        let r = gf_rank(&low);
        assert_eq!(r, 4);
        let perm_rows: Vec<usize> = vec![3, 0, 6, 1, 5, 2, 4];
        let permuted = DMatrix::from_fn(7, 9, |i, j| low[(perm_rows[i], 8 - j)]);
        assert_eq!(gf_rank(&permuted), r);
        assert_eq!(gf_rank(&low.transpose()), r);
    }

    #[test]
    fn single_term_is_trivial() {
        assert!(verify_phi_full_rank(3, 3, &[2], 1, 0).certified());
        assert!(verify_generic_q2_dim(3, 3, 2, &[2], 1, 0).certified());
    }

    #[test]
    fn integer_instance_dimension() {
        let res = verify_generic_q2_dim(3, 3, 5, &[1, 1, 1, 2], DEFAULT_TRIALS, 1);
        assert!(res.certified());
        assert_eq!(res.expected, 9);
        let x = q2_rank_cross_check(3, 3, 5, &[1, 1, 1, 2], 50, 2);
        assert!(x.rational_rank >= x.gf_rank, "{x:?}");
        assert_eq!(x.rational_rank, 9);
    }

    #[test]
    fn count_conditions_reject_early() {
        let r = verify_phi_full_rank(2, 3, &[2, 2], 1, 0);
        assert!(matches!(r.verdict, Verdict::Impossible { .. }));
    }
}
