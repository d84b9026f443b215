//! Dense row-major `f64` matrices.
//!
//! `data[i * cols + j]` holds entry `(i, j)`. Every constructor and every
//! fallible operation rejects non-finite values, so a `Matrix` in hand is
//! always finite.

use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Below this many multiply-adds a product is not worth splitting.
const PAR_MATMUL_FLOPS: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn ensure_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::InvalidShape {
                rows,
                cols,
                len: data.len(),
            });
        }
        ensure_finite("Matrix::new", &data)?;
        Ok(Self { rows, cols, data })
    }

    /// Builds from already-checked data; callers guarantee shape and finiteness.
    fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    fn checked(op: &'static str, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        ensure_finite(op, &data)?;
        Ok(Self::from_parts(rows, cols, data))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::InvalidShape {
                    rows: rows.len(),
                    cols,
                    len: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self::from_parts(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        assert!(value.is_finite());
        Self::from_parts(rows, cols, vec![value; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut data = vec![0.0; n * n];
        for (i, &v) in values.iter().enumerate() {
            data[i * n + i] = v;
        }
        Self::new(n, n, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self::from_parts(self.cols, self.rows, data)
    }

    fn same_shape(&self, op: &'static str, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        self.matmul_with(other, Execution::default())
    }

    /// Matrix product with an explicit execution policy. Each output row is
    /// accumulated in ascending `k` order, so the policy never changes bits.
    pub fn matmul_with(&self, other: &Matrix, exec: Execution) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let exec = if m * k * n < PAR_MATMUL_FLOPS {
            Execution::Sequential
        } else {
            exec
        };
        let mut out = vec![0.0; m * n];
        let a = &self.data;
        let b = &other.data;
        par::for_each_row(exec, &mut out, n, |i, row| {
            let a_row = &a[i * k..(i + 1) * k];
            for (p, &aip) in a_row.iter().enumerate() {
                if aip == 0.0 {
                    continue;
                }
                let b_row = &b[p * n..(p + 1) * n];
                for (o, &bpj) in row.iter_mut().zip(b_row) {
                    *o += aip * bpj;
                }
            }
        });
        Self::checked("matmul", m, n, out)
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        self.transpose().matmul(other)
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        self.matmul(&other.transpose())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map("sub", other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Result<Matrix> {
        self.map("scale", |x| x * s)
    }

    /// `a·self + b·other`, the shape of every EMA update.
    pub fn lin_comb(&self, a: f64, other: &Matrix, b: f64) -> Result<Matrix> {
        self.zip_map("lin_comb", other, |x, y| a * x + b * y)
    }

    pub fn map(&self, op: &'static str, f: impl Fn(f64) -> f64) -> Result<Matrix> {
        let data = self.data.iter().map(|&x| f(x)).collect();
        Self::checked(op, self.rows, self.cols, data)
    }

    pub fn zip_map(
        &self,
        op: &'static str,
        other: &Matrix,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        self.same_shape(op, other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::checked(op, self.rows, self.cols, data)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map("hadamard", other, |a, b| a * b)
    }

    /// Entrywise `self / other`; a zero denominator is reported as non-finite.
    pub fn hadamard_div(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_map("hadamard_div", other, |a, b| a / b)
    }

    fn first_nonpositive(&self, op: &'static str) -> Result<()> {
        match self.data.iter().position(|&x| x <= 0.0) {
            None => Ok(()),
            Some(idx) => Err(Error::NonPositive {
                op,
                row: idx / self.cols,
                col: idx % self.cols,
                value: self.data[idx],
            }),
        }
    }

    pub fn hadamard_inv(&self) -> Result<Matrix> {
        self.first_nonpositive("hadamard_inv")?;
        self.map("hadamard_inv", |x| 1.0 / x)
    }

    /// Entrywise power. Non-integer exponents need strictly positive entries.
    pub fn hadamard_pow(&self, p: f64) -> Result<Matrix> {
        if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
            let k = p as i32;
            if k < 0 {
                self.first_nonpositive("hadamard_pow")?;
            }
            return self.map("hadamard_pow", |x| x.powi(k));
        }
        self.first_nonpositive("hadamard_pow")?;
        self.map("hadamard_pow", |x| x.powf(p))
    }

    pub fn frob_inner(&self, other: &Matrix) -> Result<f64> {
        self.same_shape("frob_inner", other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn sum_abs(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// `‖self − other‖_F`, or infinity on shape mismatch.
    pub fn frob_distance(&self, other: &Matrix) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Gauss–Jordan inverse with partial pivoting. A pivot smaller than
    /// `1e-12 · max|a_ij|` is treated as singular.
    pub fn inverse(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                op: "inverse",
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        let scale = self.max_abs();
        if scale == 0.0 {
            return Err(Error::Singular { op: "inverse" });
        }
        let mut a = self.data.clone();
        let mut inv = Matrix::identity(n).data;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
                .unwrap();
            if a[pivot * n + col].abs() <= 1e-12 * scale {
                return Err(Error::Singular { op: "inverse" });
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(pivot * n + j, col * n + j);
                    inv.swap(pivot * n + j, col * n + j);
                }
            }
            let d = a[col * n + col];
            for j in 0..n {
                a[col * n + j] /= d;
                inv[col * n + j] /= d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col];
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[r * n + j] -= f * a[col * n + j];
                    inv[r * n + j] -= f * inv[col * n + j];
                }
            }
        }
        Self::checked("inverse", n, n, inv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    // Independent i-j-k triple loop over plain vectors.
    fn naive_product(a: &Matrix, b: &Matrix) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; b.cols()]; a.rows()];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, o) in row.iter_mut().enumerate() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.as_slice()[i * a.cols() + k] * b.as_slice()[k * b.cols() + j];
                }
                *o = s;
            }
        }
        out
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn matmul_identity_and_permutation() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(Matrix::identity(2).matmul(&a).unwrap(), a);
        let p = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(a.matmul(&p).unwrap(), m(&[&[2.0, 1.0], &[4.0, 3.0]]));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, 3, 4);
        let b = random(&mut rng, 4, 2);
        let c = a.matmul(&b).unwrap();
        let oracle = naive_product(&a, &b);
        for i in 0..3 {
            for j in 0..2 {
                assert!((c.get(i, j) - oracle[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn matmul_errors() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(
            a.matmul(&a),
            Err(Error::DimensionMismatch { .. })
        ));
        let big = Matrix::filled(1, 2, 1e200);
        let tall = Matrix::filled(2, 1, 1e200);
        assert!(matches!(big.matmul(&tall), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn parallel_matmul_is_bitwise_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random(&mut rng, 64, 48);
        let b = random(&mut rng, 48, 40);
        let s = a.matmul_with(&b, Execution::Sequential).unwrap();
        let p = a.matmul_with(&b, Execution::Parallel).unwrap();
        assert_eq!(s.as_slice(), p.as_slice());
    }

    #[test]
    fn hadamard_family() {
        assert_eq!(
            m(&[&[2.0, 3.0]]).hadamard(&m(&[&[4.0, 5.0]])).unwrap(),
            m(&[&[8.0, 15.0]])
        );
        assert_eq!(m(&[&[2.0, 4.0]]).hadamard_inv().unwrap(), m(&[&[0.5, 0.25]]));
        assert_eq!(m(&[&[4.0, 9.0]]).hadamard_pow(0.5).unwrap(), m(&[&[2.0, 3.0]]));
        assert!(m(&[&[1.0, 0.0]]).hadamard_inv().is_err());
        assert!(m(&[&[1.0, -1.0]]).hadamard_pow(0.25).is_err());
        assert_eq!(m(&[&[-2.0]]).hadamard_pow(2.0).unwrap(), m(&[&[4.0]]));
        assert!(m(&[&[1.0]]).hadamard(&m(&[&[1.0, 2.0]])).is_err());
    }

    #[test]
    fn frobenius_inner_and_norm() {
        let i2 = Matrix::identity(2);
        assert_eq!(i2.frob_inner(&i2).unwrap(), 2.0);
        assert_eq!(m(&[&[3.0, 4.0]]).frob_norm(), 5.0);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random(&mut rng, 4, 3);
        let b = random(&mut rng, 4, 3);
        let trace = a.t_matmul(&b).unwrap().trace();
        assert!((a.frob_inner(&b).unwrap() - trace).abs() < 1e-14);
    }

    #[test]
    fn inverse_roundtrip_and_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(&mut rng, 5, 5).add(&Matrix::identity(5).scale(3.0).unwrap()).unwrap();
        let prod = a.matmul(&a.inverse().unwrap()).unwrap();
        assert!(prod.frob_distance(&Matrix::identity(5)) < 1e-12);
        let s = m(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(s.inverse(), Err(Error::Singular { .. })));
    }

    #[test]
    fn matmul_associativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let a = random(&mut rng, 3, 5);
            let b = random(&mut rng, 5, 4);
            let c = random(&mut rng, 4, 2);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            assert!(left.frob_distance(&right) <= 1e-10 * left.frob_norm().max(1.0));
        }
    }
}
