//! Torus automorphisms acting exactly on rational points.
//!
//! Points of `(1/q) Z^d / Z^d` are stored as numerator vectors modulo `q`, so
//! iterating `x -> S x mod 1` is exact integer arithmetic and orbits never
//! accumulate rounding error. When `||S||_inf * q` fits comfortably in 127 bits
//! the step runs on `i128`; otherwise it falls back to big integers.

use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::IntMatrix;

/// Mersenne prime `2^61 - 1`, the default orbit denominator.
pub const DEFAULT_DENOMINATOR: u64 = (1 << 61) - 1;

/// `T(x) = S x mod Z^d` for an integer matrix `S` with `det S = +-1`.
#[derive(Debug, Clone)]
pub struct TorusAutomorphism {
    matrix: IntMatrix,
    inverse: IntMatrix,
    det: i8,
    forward: Arc<SmallRows>,
    backward: Arc<SmallRows>,
}

/// Machine-integer copy of a matrix used by the fast stepping path.
#[derive(Debug)]
struct SmallRows {
    entries: Option<Vec<i64>>,
    row_bound: u128,
}

impl SmallRows {
    fn new(m: &IntMatrix) -> Self {
        let entries = m.to_i64_rows().map(|rows| rows.into_iter().flatten().collect::<Vec<_>>());
        let row_bound = m.row_abs_sum_max().to_u128().unwrap_or(u128::MAX);
        Self { entries, row_bound }
    }

    /// True when `sum_j |a_ij| x_j < 2^127` for all numerators `x_j < q`.
    fn fits(&self, q: u64) -> bool {
        self.entries.is_some() && self.row_bound.checked_mul(q as u128).is_some_and(|b| b < (1u128 << 127))
    }

    fn step(&self, dim: usize, q: u64, x: &[u64], out: &mut [u64]) {
        let e = self.entries.as_ref().expect("fast path requires machine-size entries");
        for (i, o) in out.iter_mut().enumerate() {
            let acc: i128 = e[i * dim..(i + 1) * dim].iter().zip(x).map(|(&a, &v)| a as i128 * v as i128).sum();
            *o = acc.rem_euclid(q as i128) as u64;
        }
    }
}

impl TorusAutomorphism {
    /// Validates `|det S| = 1` and computes the exact integer inverse
    /// (adjugate divided by the determinant).
    pub fn new(matrix: IntMatrix) -> Result<Self> {
        let det = matrix.determinant();
        let det = if det.is_one() {
            1
        } else if det == BigInt::from(-1) {
            -1
        } else {
            return Err(Error::DeterminantNotUnit(det.to_string()));
        };
        let inverse = matrix.adjugate().scale(&BigInt::from(det));
        debug_assert!(matrix.mul(&inverse).map(|p| p.is_identity()).unwrap_or(false));
        Ok(Self {
            forward: Arc::new(SmallRows::new(&matrix)),
            backward: Arc::new(SmallRows::new(&inverse)),
            matrix,
            inverse,
            det,
        })
    }

    /// Arnold's cat map `[[2,1],[1,1]]`.
    pub fn cat_map() -> Self {
        Self::new(IntMatrix::from_rows_i64(&[[2, 1], [1, 1]]).unwrap()).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &IntMatrix {
        &self.matrix
    }

    pub fn inverse_matrix(&self) -> &IntMatrix {
        &self.inverse
    }

    pub fn det(&self) -> i8 {
        self.det
    }

    pub fn apply(&self, x: &RationalTorusPoint) -> RationalTorusPoint {
        self.act(&self.matrix, &self.forward, x)
    }

    pub fn apply_inverse(&self, x: &RationalTorusPoint) -> RationalTorusPoint {
        self.act(&self.inverse, &self.backward, x)
    }

    fn act(&self, m: &IntMatrix, small: &SmallRows, x: &RationalTorusPoint) -> RationalTorusPoint {
        assert_eq!(x.dim(), self.dim(), "point and automorphism dimensions differ");
        if let (Some(q), Some(nums)) = (x.denominator.to_u64(), x.numerators_u64()) {
            if small.fits(q) {
                let mut out = vec![0u64; nums.len()];
                small.step(self.dim(), q, &nums, &mut out);
                return RationalTorusPoint {
                    denominator: x.denominator.clone(),
                    numerators: out.into_iter().map(BigUint::from).collect(),
                };
            }
        }
        let q = BigInt::from(x.denominator.clone());
        let v: Vec<BigInt> = x.numerators.iter().map(|n| BigInt::from(n.clone())).collect();
        let numerators =
            m.apply(&v).into_iter().map(|e| e.mod_floor(&q).to_biguint().expect("mod_floor is nonnegative")).collect();
        RationalTorusPoint { denominator: x.denominator.clone(), numerators }
    }

    /// `x0, T x0, ..., T^n x0`.
    pub fn orbit(&self, x0: &RationalTorusPoint, n: usize) -> Orbit {
        let mut cursor = self.cursor(x0);
        let mut points = Vec::with_capacity(n + 1);
        points.push(x0.clone());
        for _ in 0..n {
            cursor.advance();
            points.push(cursor.point());
        }
        Orbit { start: x0.clone(), length: n, points }
    }

    /// A forward-stepping cursor positioned at `x0`.
    pub fn cursor(&self, x0: &RationalTorusPoint) -> OrbitCursor {
        assert_eq!(x0.dim(), self.dim(), "point and automorphism dimensions differ");
        let state = match (x0.denominator.to_u64(), x0.numerators_u64()) {
            (Some(q), Some(nums)) if self.forward.fits(q) => {
                CursorState::Small { rows: Arc::clone(&self.forward), q, x: nums.clone(), scratch: nums }
            }
            _ => CursorState::Big { map: self.clone(), x: x0.clone() },
        };
        OrbitCursor { dim: self.dim(), state }
    }
}

/// Iterates an orbit forward, exposing each point exactly or as reals.
#[derive(Debug)]
pub struct OrbitCursor {
    dim: usize,
    state: CursorState,
}

#[derive(Debug)]
enum CursorState {
    Small { rows: Arc<SmallRows>, q: u64, x: Vec<u64>, scratch: Vec<u64> },
    Big { map: TorusAutomorphism, x: RationalTorusPoint },
}

impl OrbitCursor {
    pub fn advance(&mut self) {
        match &mut self.state {
            CursorState::Small { rows, q, x, scratch } => {
                rows.step(self.dim, *q, x, scratch);
                std::mem::swap(x, scratch);
            }
            CursorState::Big { map, x } => *x = map.apply(x),
        }
    }

    /// Writes the real coordinates of the current point into `out`.
    pub fn coords_into(&self, out: &mut [f64]) {
        match &self.state {
            CursorState::Small { q, x, .. } => {
                for (o, &n) in out.iter_mut().zip(x) {
                    *o = ratio_u64_to_f64(n, *q);
                }
            }
            CursorState::Big { x, .. } => {
                for (o, n) in out.iter_mut().zip(&x.numerators) {
                    *o = ratio_to_f64(n, &x.denominator);
                }
            }
        }
    }

    pub fn point(&self) -> RationalTorusPoint {
        match &self.state {
            CursorState::Small { q, x, .. } => RationalTorusPoint {
                denominator: BigUint::from(*q),
                numerators: x.iter().map(|&v| BigUint::from(v)).collect(),
            },
            CursorState::Big { x, .. } => x.clone(),
        }
    }
}

/// A point of `(1/q) Z^d / Z^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RationalTorusPoint {
    denominator: BigUint,
    numerators: Vec<BigUint>,
}

impl RationalTorusPoint {
    /// Numerators are reduced modulo `q`.
    pub fn new(denominator: BigUint, numerators: Vec<BigUint>) -> Result<Self> {
        if denominator.is_zero() {
            return Err(Error::InvalidInput("denominator must be positive".into()));
        }
        let numerators = numerators.into_iter().map(|n| n % &denominator).collect();
        Ok(Self { denominator, numerators })
    }

    pub fn from_u64(denominator: u64, numerators: &[u64]) -> Result<Self> {
        Self::new(BigUint::from(denominator), numerators.iter().map(|&n| BigUint::from(n)).collect())
    }

    pub fn origin(denominator: u64, dim: usize) -> Self {
        Self::from_u64(denominator.max(1), &vec![0; dim]).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.numerators.len()
    }

    pub fn denominator(&self) -> &BigUint {
        &self.denominator
    }

    pub fn numerators(&self) -> &[BigUint] {
        &self.numerators
    }

    fn numerators_u64(&self) -> Option<Vec<u64>> {
        self.numerators.iter().map(|n| n.to_u64()).collect()
    }

    /// Nearest `f64` to each coordinate `numerator / q`, kept in `[0, 1)`.
    pub fn to_real(&self) -> Vec<f64> {
        self.numerators.iter().map(|n| ratio_to_f64(n, &self.denominator)).collect()
    }
}

/// Uniform point of `(1/q) Z^d / Z^d`; numerators are i.i.d. uniform on `[0, q)`.
pub fn random_point<R: Rng + ?Sized>(q: &BigUint, dim: usize, rng: &mut R) -> RationalTorusPoint {
    assert!(*q >= BigUint::from(2u8), "denominator must be at least 2");
    let numerators = (0..dim).map(|_| uniform_below(q, rng)).collect();
    RationalTorusPoint { denominator: q.clone(), numerators }
}

fn uniform_below<R: Rng + ?Sized>(q: &BigUint, rng: &mut R) -> BigUint {
    if let Some(q64) = q.to_u64() {
        return BigUint::from(rng.random_range(0..q64));
    }
    let bits = q.bits();
    let words = bits.div_ceil(32) as usize;
    let top_mask = if bits.is_multiple_of(32) { u32::MAX } else { (1u32 << (bits % 32)) - 1 };
    loop {
        let mut digits: Vec<u32> = (0..words).map(|_| rng.random()).collect();
        if let Some(last) = digits.last_mut() {
            *last &= top_mask;
        }
        let candidate = BigUint::new(digits);
        if candidate < *q {
            return candidate;
        }
    }
}

/// A finite orbit segment `x0, T x0, ..., T^length x0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Orbit {
    pub start: RationalTorusPoint,
    pub length: usize,
    pub points: Vec<RationalTorusPoint>,
}

/// `2^-s` for `s >= 0`, exact while representable.
fn pow2_neg(mut s: u64) -> f64 {
    let mut f = 1.0;
    while s > 1000 {
        f *= f64::from_bits((1023 - 1000u64) << 52);
        s -= 1000;
    }
    f * f64::from_bits((1023 - s) << 52)
}

/// Largest `f64` strictly below one.
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

/// Correctly rounded `n / q` for `n < q < 2^64`, clamped below one.
fn ratio_u64_to_f64(n: u64, q: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nb = 64 - n.leading_zeros();
    let s = 128 - nb;
    let scaled = (n as u128) << s;
    let (m, r) = (scaled / q as u128, scaled % q as u128);
    // m has at least 64 significant bits, so the sticky bit sits below the rounding position.
    let m = if r != 0 { m | 1 } else { m };
    let v = m as f64 * pow2_neg(s as u64);
    if v >= 1.0 {
        ONE_MINUS_ULP
    } else {
        v
    }
}

/// Correctly rounded `n / q` for `n < q`, clamped below one.
pub(crate) fn ratio_to_f64(n: &BigUint, q: &BigUint) -> f64 {
    if let (Some(n), Some(q)) = (n.to_u64(), q.to_u64()) {
        return ratio_u64_to_f64(n, q);
    }
    if n.is_zero() {
        return 0.0;
    }
    let s = q.bits() - n.bits() + 65;
    let scaled = n << s;
    let (m, r) = scaled.div_rem(q);
    let m = m.to_u128().expect("quotient has at most 66 bits");
    let m = if r.is_zero() { m } else { m | 1 };
    let v = m as f64 * pow2_neg(s);
    if v >= 1.0 {
        ONE_MINUS_ULP
    } else {
        v
    }
}
