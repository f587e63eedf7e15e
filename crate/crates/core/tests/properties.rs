//! Randomised invariants of the I/O formats, finite fields, ranks and matching.

use btd_core::decomposition::{match_decompositions, random_btd};
use btd_core::gf::{FiniteField, Fp31, Gf2_15};
use btd_core::io::{decomposition_from_json, decomposition_to_json, read_btd1, write_btd1, AnyTensor};
use btd_core::linalg::{self, rng_from_seed};
use btd_core::uniqueness::{k_rank, parameter_count_s};
use btd_core::{BlockTermDecomposition, Scalar, Tensor3, Term};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn field_axioms<F: FiniteField + std::fmt::Debug>(a: F, b: F, c: F) -> Result<(), TestCaseError> {
    prop_assert_eq!(a * (b + c), a * b + a * c);
    prop_assert_eq!((a * b) * c, a * (b * c));
    prop_assert_eq!(a + (-a), F::from_i64(0));
    match a.inv() {
        Some(inv) => prop_assert_eq!(a * inv, F::from_i64(1)),
        None => prop_assert_eq!(a, F::from_i64(0)),
    }
    Ok(())
}

/// Dimensions and sizes for which `random_btd` has generic full-rank factors.
fn btd_shape() -> impl Strategy<Value = ([usize; 3], Vec<usize>)> {
    (2usize..=4, 2usize..=5, 2usize..=5, 1usize..=3).prop_flat_map(|(i, j, k, r)| {
        let l_max = j.min(k);
        (Just([i, j, k]), proptest::collection::vec(1..=l_max, r))
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn gf2_15_is_a_field(seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        field_axioms(Gf2_15::random(&mut rng), Gf2_15::random(&mut rng), Gf2_15::random(&mut rng))?;
    }

    #[test]
    fn prime_field_is_a_field(seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        field_axioms(Fp31::random(&mut rng), Fp31::random(&mut rng), Fp31::random(&mut rng))?;
    }

    #[test]
    fn btd1_round_trip(dims in (1usize..=4, 1usize..=4, 1usize..=4), seed in any::<u64>(), complex in any::<bool>()) {
        let dims = [dims.0, dims.1, dims.2];
        let mut rng = rng_from_seed(seed);
        let mut buf = Vec::new();
        let expected = if complex {
            let t = Tensor3::from_fn(dims, |_, _, _| Complex64::sample_normal(&mut rng));
            write_btd1(&t, &mut buf).unwrap();
            AnyTensor::Complex(t)
        } else {
            let t = Tensor3::from_fn(dims, |_, _, _| f64::sample_normal(&mut rng));
            write_btd1(&t, &mut buf).unwrap();
            AnyTensor::Real(t)
        };
        prop_assert_eq!(read_btd1(&buf[..]).unwrap(), expected);
    }

    #[test]
    fn decomposition_json_round_trip((dims, sizes) in btd_shape(), seed in any::<u64>()) {
        let d = random_btd::<f64>(dims, &sizes, seed).unwrap();
        prop_assert_eq!(decomposition_from_json::<f64>(&decomposition_to_json(&d)).unwrap(), d);
    }

    #[test]
    fn k_rank_is_bounded_by_rank(rows in 1usize..=5, cols in 1usize..=6, dup in any::<bool>(), seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let mut a = DMatrix::from_fn(rows, cols, |_, _| f64::sample_normal(&mut rng));
        if dup && cols > 1 {
            let first = a.column(0).into_owned();
            a.set_column(cols - 1, &(first * 3.0));
        }
        let kr = k_rank(&a, 1e-8);
        let r = linalg::rank(&a, 1e-8);
        prop_assert!(kr.value <= r);
        prop_assert!(r <= rows.min(cols));
        if dup && cols > 1 {
            prop_assert!(kr.value <= 1);
        }
    }

    #[test]
    fn matching_undoes_permutation_and_scaling((dims, sizes) in btd_shape(), seed in any::<u64>(), shift in 0usize..3) {
        let d = random_btd::<f64>(dims, &sizes, seed).unwrap();
        let r = d.num_terms();
        let order: Vec<usize> = (0..r).map(|x| (x + shift) % r).collect();
        let a = DMatrix::from_columns(&order.iter().map(|&x| d.a.column(x) * -2.0).collect::<Vec<_>>());
        let terms = order
            .iter()
            .map(|&x| Term { b: d.terms[x].b.clone() * -0.5, c: d.terms[x].c.clone() })
            .collect();
        let shuffled = BlockTermDecomposition::new(a, terms).unwrap();
        let m = match_decompositions(&d, &shuffled).unwrap();
        prop_assert!(m.err_a < 1e-12 && m.err_terms < 1e-12, "{:?}", m);
        for (target, &source) in m.permutation.iter().enumerate() {
            prop_assert_eq!(order[source], target);
        }
    }

    #[test]
    fn parameter_count_matches_its_definition((dims, sizes) in btd_shape()) {
        let p = parameter_count_s(dims, &sizes).unwrap();
        let [i, j, k] = dims;
        // a_r up to scale, plus a rank-L J x K matrix.
        let s: usize = sizes.iter().map(|&l| (i - 1) + (j + k - l) * l).sum();
        prop_assert_eq!(p.ijk, (i * j * k) as u128);
        prop_assert_eq!(p.s, s as u128);
        prop_assert_eq!(p.passes, p.s < p.ijk);
    }
}
