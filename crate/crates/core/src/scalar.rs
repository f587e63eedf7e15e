//! Scalar fields supported by the numerical kernels.

use nalgebra::ComplexField;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Which scalar field a tensor lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

/// Real or complex double precision scalar.
///
/// Every numerical kernel is generic over this trait. Transposes are always the
/// plain (non-conjugating) transpose unless a function says otherwise.
pub trait Scalar: ComplexField<RealField = f64> + Copy {
    const FIELD: Field;

    /// Standard normal draw; circularly symmetric with unit variance for complex.
    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Embeds a complex number, dropping the imaginary part for real scalars.
    fn from_complex(z: Complex64) -> Self;

    fn to_complex(self) -> Complex64;
}

impl Scalar for f64 {
    const FIELD: Field = Field::Real;

    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn from_complex(z: Complex64) -> Self {
        z.re
    }

    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Scalar for Complex64 {
    const FIELD: Field = Field::Complex;

    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    fn from_complex(z: Complex64) -> Self {
        z
    }

    fn to_complex(self) -> Complex64 {
        self
    }
}

/// Commutative ring operations needed by the exact minor constructions.
///
/// Satisfied by `f64`, `Complex64` and the machine integers, which lets the
/// same code produce integer-exact minor matrices.
pub trait Ring:
    nalgebra::Scalar
    + Copy
    + num_traits::Zero
    + num_traits::One
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
{
}

impl<T> Ring for T where
    T: nalgebra::Scalar
        + Copy
        + num_traits::Zero
        + num_traits::One
        + std::ops::Add<Output = Self>
        + std::ops::Sub<Output = Self>
        + std::ops::Mul<Output = Self>
{
}
