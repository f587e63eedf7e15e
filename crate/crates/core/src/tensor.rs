//! Dense third-order tensors, slices and matrix unfoldings.
//!
//! Entries are stored in lexicographic `(i, j, k)` order with `k` varying
//! fastest. All unfoldings use column-major vectorisation:
//!
//! * mode 1: `JK x I`, entry `(j + k*J, i)`, i.e. `[vec(H_1) ... vec(H_I)]`
//! * mode 2: `IK x J`, entry `(i*K + k, j)`, i.e. `[H_1 ... H_I]^T`
//! * mode 3: `IJ x K`, entry `(i*J + j, k)`, i.e. `[H_1^T ... H_I^T]^T`
//!
//! where `H_i` is the `J x K` horizontal slice.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::scalar::{Field, Scalar};

/// Unfolding mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl TryFrom<usize> for Mode {
    type Error = crate::Error;

    fn try_from(m: usize) -> Result<Self> {
        match m {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            _ => Err(invalid(format!("unfolding mode must be 1, 2 or 3, got {m}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T: Scalar> {
    dims: [usize; 3],
    values: Vec<T>,
}

impl<T: Scalar> Tensor3<T> {
    pub fn new(dims: [usize; 3], values: Vec<T>) -> Result<Self> {
        let len = dims.iter().product::<usize>();
        if values.len() != len {
            return Err(invalid(format!(
                "tensor {}x{}x{} needs {len} values, got {}",
                dims[0],
                dims[1],
                dims[2],
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("tensor entries must be finite"));
        }
        Ok(Tensor3 { dims, values })
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        Tensor3 {
            dims,
            values: vec![T::zero(); dims.iter().product()],
        }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(dims.iter().product());
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    values.push(f(i, j, k));
                }
            }
        }
        Tensor3 { dims, values }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn field(&self) -> Field {
        T::FIELD
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        let [_, nj, nk] = self.dims;
        self.values[(i * nj + j) * nk + k]
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.modulus_squared()).sum::<f64>().sqrt()
    }

    /// `J x K` slice `H_i`.
    pub fn horizontal_slice(&self, i: usize) -> DMatrix<T> {
        DMatrix::from_fn(self.dims[1], self.dims[2], |j, k| self.get(i, j, k))
    }

    /// `I x J` slice `T_k`.
    pub fn frontal_slice(&self, k: usize) -> DMatrix<T> {
        DMatrix::from_fn(self.dims[0], self.dims[1], |i, j| self.get(i, j, k))
    }

    pub fn unfold(&self, mode: Mode) -> DMatrix<T> {
        let [ni, nj, nk] = self.dims;
        match mode {
            Mode::One => DMatrix::from_fn(nj * nk, ni, |r, i| self.get(i, r % nj, r / nj)),
            Mode::Two => DMatrix::from_fn(ni * nk, nj, |r, j| self.get(r / nk, j, r % nk)),
            Mode::Three => DMatrix::from_fn(ni * nj, nk, |r, k| self.get(r / nj, r % nj, k)),
        }
    }

    /// Unfolding selected by number, rejecting anything but 1, 2, 3.
    pub fn unfold_mode(&self, mode: usize) -> Result<DMatrix<T>> {
        Ok(self.unfold(Mode::try_from(mode)?))
    }

    /// Rebuilds an `I x J x K` tensor from its mode-3 unfolding (`IJ x K`).
    pub fn from_unfold3(ni: usize, nj: usize, m: &DMatrix<T>) -> Result<Self> {
        if m.nrows() != ni * nj {
            return Err(invalid("mode-3 unfolding has the wrong number of rows"));
        }
        let nk = m.ncols();
        Ok(Self::from_fn([ni, nj, nk], |i, j, k| m[(i * nj + j, k)]))
    }

    /// Rebuilds a tensor from its mode-1 unfolding (`JK x I`).
    pub fn from_unfold1(nj: usize, nk: usize, m: &DMatrix<T>) -> Result<Self> {
        if m.nrows() != nj * nk {
            return Err(invalid("mode-1 unfolding has the wrong number of rows"));
        }
        let ni = m.ncols();
        Ok(Self::from_fn([ni, nj, nk], |i, j, k| m[(j + k * nj, i)]))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(invalid("tensor dimensions differ"));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| *a - *b).collect();
        Ok(Tensor3 { dims: self.dims, values })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor3 {
            dims: self.dims,
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor3<f64> {
        Tensor3::from_fn([3, 4, 5], |i, j, k| (100 * i + 10 * j + k) as f64)
    }

    #[test]
    fn unfold_entries_follow_index_maps() {
        let t = sample();
        let [ni, nj, nk] = t.dims();
        let (u1, u2, u3) = (t.unfold(Mode::One), t.unfold(Mode::Two), t.unfold(Mode::Three));
        for i in 0..ni {
            for j in 0..nj {
                for k in 0..nk {
                    let v = t.get(i, j, k);
                    assert_eq!(u1[(j + k * nj, i)], v);
                    assert_eq!(u2[(i * nk + k, j)], v);
                    assert_eq!(u3[(i * nj + j, k)], v);
                }
            }
        }
    }

    #[test]
    fn rank_one_unfolding_example() {
        // a = [1,2], b = [1,0], c = [1,1]
        let a = [1.0, 2.0];
        let b = [1.0, 0.0];
        let c = [1.0, 1.0];
        let t = Tensor3::from_fn([2, 2, 2], |i, j, k| a[i] * b[j] * c[k]);
        let expected = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 0.0, 0.0, 1.0, 2.0, 0.0, 0.0]);
        assert_eq!(t.unfold(Mode::One), expected);
    }

    #[test]
    fn invalid_mode_and_bad_values_are_rejected() {
        assert!(sample().unfold_mode(4).is_err());
        assert!(Tensor3::<f64>::new([1, 1, 2], vec![1.0]).is_err());
        assert!(Tensor3::<f64>::new([1, 1, 1], vec![f64::NAN]).is_err());
    }

    #[test]
    fn round_trip_through_unfoldings() {
        let t = sample();
        assert_eq!(Tensor3::from_unfold3(3, 4, &t.unfold(Mode::Three)).unwrap(), t);
        assert_eq!(Tensor3::from_unfold1(4, 5, &t.unfold(Mode::One)).unwrap(), t);
    }

    #[test]
    fn zero_tensor_unfolds_to_zero() {
        let t = Tensor3::<f64>::zeros([2, 3, 4]);
        for m in [Mode::One, Mode::Two, Mode::Three] {
            assert_eq!(t.unfold(m).norm(), 0.0);
        }
    }
}
