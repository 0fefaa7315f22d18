//! Square matrices over the integers with exact (arbitrary-precision) arithmetic.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

/// A `d x d` integer matrix, `d >= 2`, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntMatrix {
    dim: usize,
    entries: Vec<BigInt>,
}

impl IntMatrix {
    /// Builds a matrix from its rows.
    pub fn new(rows: Vec<Vec<BigInt>>) -> Result<Self> {
        let dim = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::NotSquare { rows: dim, row: i, cols: row.len() });
            }
        }
        if dim < 2 {
            return Err(Error::DimensionTooSmall(dim));
        }
        Ok(Self { dim, entries: rows.into_iter().flatten().collect() })
    }

    pub fn from_rows_i64<R: AsRef<[i64]>>(rows: &[R]) -> Result<Self> {
        Self::new(rows.iter().map(|r| r.as_ref().iter().map(|&v| BigInt::from(v)).collect()).collect())
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let rows =
            (0..dim).map(|i| (0..dim).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect()).collect();
        Self::new(rows)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> &BigInt {
        &self.entries[row * self.dim + col]
    }

    pub fn row(&self, row: usize) -> &[BigInt] {
        &self.entries[row * self.dim..(row + 1) * self.dim]
    }

    pub fn rows(&self) -> Vec<Vec<BigInt>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn trace(&self) -> BigInt {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Exact determinant by fraction-free (Bareiss) elimination.
    pub fn determinant(&self) -> BigInt {
        bareiss_determinant(self.rows())
    }

    /// The adjugate (transposed cofactor matrix), so that `self * adj = det * I`.
    pub fn adjugate(&self) -> IntMatrix {
        let d = self.dim;
        let mut adj = vec![BigInt::zero(); d * d];
        for i in 0..d {
            for j in 0..d {
                let minor: Vec<Vec<BigInt>> = (0..d)
                    .filter(|&r| r != i)
                    .map(|r| (0..d).filter(|&c| c != j).map(|c| self.get(r, c).clone()).collect())
                    .collect();
                let cofactor = bareiss_determinant(minor);
                adj[j * d + i] = if (i + j) % 2 == 0 { cofactor } else { -cofactor };
            }
        }
        IntMatrix { dim: d, entries: adj }
    }

    pub fn mul(&self, other: &IntMatrix) -> Result<IntMatrix> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let d = self.dim;
        let mut out = vec![BigInt::zero(); d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..d {
                    out[i * d + j] += a * other.get(k, j);
                }
            }
        }
        Ok(IntMatrix { dim: d, entries: out })
    }

    pub fn scale(&self, factor: &BigInt) -> IntMatrix {
        IntMatrix { dim: self.dim, entries: self.entries.iter().map(|e| e * factor).collect() }
    }

    pub fn transpose(&self) -> IntMatrix {
        let d = self.dim;
        let entries = (0..d * d).map(|idx| self.get(idx % d, idx / d).clone()).collect();
        IntMatrix { dim: d, entries }
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[BigInt]) -> Vec<BigInt> {
        (0..self.dim).map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    /// Largest absolute row sum, the induced sup-norm `||S||_inf`.
    pub fn row_abs_sum_max(&self) -> BigInt {
        (0..self.dim).map(|i| self.row(i).iter().map(|e| e.abs()).sum::<BigInt>()).max().unwrap_or_default()
    }

    /// Entries as `f64` (rounded), row-major.
    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        use num_traits::ToPrimitive;
        (0..self.dim).map(|i| self.row(i).iter().map(|e| e.to_f64().unwrap_or(f64::NAN)).collect()).collect()
    }

    /// Entries as `i64` if every entry fits.
    pub fn to_i64_rows(&self) -> Option<Vec<Vec<i64>>> {
        use num_traits::ToPrimitive;
        (0..self.dim).map(|i| self.row(i).iter().map(|e| e.to_i64()).collect()).collect()
    }

    pub fn is_identity(&self) -> bool {
        (0..self.dim).all(|i| {
            (0..self.dim).all(|j| {
                let e = self.get(i, j);
                if i == j {
                    e.is_one()
                } else {
                    e.is_zero()
                }
            })
        })
    }
}

/// Fraction-free Gaussian elimination; every division is exact.
fn bareiss_determinant(mut a: Vec<Vec<BigInt>>) -> BigInt {
    let n = a.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&r| !a[r][k].is_zero()) {
                Some(r) => {
                    a.swap(k, r);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                a[i][j] = v / &prev;
            }
        }
        prev = a[k][k].clone();
    }
    sign * &a[n - 1][n - 1]
}

/// Parses the inline form `"2,1;1,1"` (rows separated by `;`, entries by `,`).
impl FromStr for IntMatrix {
    type Err = Error;

    /// Accepts `"2,1;1,1"`, `"2 1; 1 1"` or `"[[2,1],[1,1]]"`.
    fn from_str(s: &str) -> Result<Self> {
        let flat = s.trim().replace(char::is_whitespace, " ");
        let flat = match flat.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
            Some(inner) => {
                inner.split(']').map(|r| r.trim_start_matches([',', ' ', '['])).collect::<Vec<_>>().join(";")
            }
            None => flat,
        };
        let rows = flat
            .split(';')
            .map(str::trim)
            .filter(|row| !row.is_empty())
            .map(|row| {
                row.split([',', ' '])
                    .filter(|e| !e.is_empty())
                    .map(|e| {
                        e.trim().parse::<BigInt>().map_err(|_| Error::InvalidInput(format!("bad matrix entry {e:?}")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }
}

impl fmt::Display for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.dim {
            if i > 0 {
                f.write_str(";")?;
            }
            for (j, e) in self.row(i).iter().enumerate() {
                if j > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{e}")?;
            }
        }
        Ok(())
    }
}
