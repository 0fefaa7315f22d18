//! Univariate polynomials with integer and rational coefficients.
//!
//! `IntPolynomial` is the public carrier (characteristic polynomials,
//! cyclotomic polynomials). Gcds, remainders and Sturm chains run over `Q`
//! through `QPoly` so every step is exact.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Integer polynomial, coefficients lowest degree first, no trailing zeros.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntPolynomial {
    coefficients: Vec<BigInt>,
}

impl IntPolynomial {
    pub fn new(mut coefficients: Vec<BigInt>) -> Self {
        while coefficients.last().is_some_and(|c| c.is_zero()) {
            coefficients.pop();
        }
        Self { coefficients }
    }

    pub fn from_i64(coefficients: &[i64]) -> Self {
        Self::new(coefficients.iter().map(|&c| BigInt::from(c)).collect())
    }

    pub fn coefficients(&self) -> &[BigInt] {
        &self.coefficients
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn leading(&self) -> BigInt {
        self.coefficients.last().cloned().unwrap_or_default()
    }

    pub fn constant_term(&self) -> BigInt {
        self.coefficients.first().cloned().unwrap_or_default()
    }

    pub fn is_monic(&self) -> bool {
        self.leading().is_one()
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        self.to_q().eval(x)
    }

    pub fn mul(&self, other: &IntPolynomial) -> IntPolynomial {
        if self.is_zero() || other.is_zero() {
            return IntPolynomial::new(vec![]);
        }
        let mut out = vec![BigInt::zero(); self.coefficients.len() + other.coefficients.len() - 1];
        for (i, a) in self.coefficients.iter().enumerate() {
            for (j, b) in other.coefficients.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        IntPolynomial::new(out)
    }

    /// `x^deg p(1/x)`.
    pub fn reversed(&self) -> IntPolynomial {
        let mut c = self.coefficients.clone();
        c.reverse();
        IntPolynomial::new(c)
    }

    pub fn to_q(&self) -> QPoly {
        QPoly::new(self.coefficients.iter().map(|c| BigRational::from_integer(c.clone())).collect())
    }

    /// Coefficients as `f64`, lowest degree first.
    pub fn to_f64(&self) -> Vec<f64> {
        use num_traits::ToPrimitive;
        self.coefficients.iter().map(|c| c.to_f64().unwrap_or(f64::NAN)).collect()
    }
}

impl fmt::Display for IntPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mut first = true;
        for (i, c) in self.coefficients.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let sign = if c.is_negative() { "-" } else { "+" };
            if first {
                if c.is_negative() {
                    f.write_str("-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            first = false;
            let a = c.abs();
            match (i, a.is_one()) {
                (0, _) => write!(f, "{a}")?,
                (1, true) => f.write_str("x")?,
                (1, false) => write!(f, "{a}x")?,
                (_, true) => write!(f, "x^{i}")?,
                (_, false) => write!(f, "{a}x^{i}")?,
            }
        }
        Ok(())
    }
}

/// Rational polynomial, lowest degree first, no trailing zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QPoly {
    c: Vec<BigRational>,
}

impl QPoly {
    pub fn new(mut c: Vec<BigRational>) -> Self {
        while c.last().is_some_and(|v| v.is_zero()) {
            c.pop();
        }
        Self { c }
    }

    pub fn zero() -> Self {
        Self { c: vec![] }
    }

    pub fn one() -> Self {
        Self { c: vec![BigRational::one()] }
    }

    /// `x - r`
    pub fn linear(r: BigRational) -> Self {
        Self::new(vec![-r, BigRational::one()])
    }

    pub fn coefficients(&self) -> &[BigRational] {
        &self.c
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.c.len().saturating_sub(1)
    }

    pub fn leading(&self) -> BigRational {
        self.c.last().cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        self.c.iter().rev().fold(BigRational::zero(), |acc, a| acc * x + a)
    }

    pub fn add(&self, o: &QPoly) -> QPoly {
        let n = self.c.len().max(o.c.len());
        QPoly::new(
            (0..n)
                .map(|i| {
                    let a = self.c.get(i).cloned().unwrap_or_else(BigRational::zero);
                    let b = o.c.get(i).cloned().unwrap_or_else(BigRational::zero);
                    a + b
                })
                .collect(),
        )
    }

    pub fn scale(&self, k: &BigRational) -> QPoly {
        QPoly::new(self.c.iter().map(|a| a * k).collect())
    }

    pub fn sub(&self, o: &QPoly) -> QPoly {
        self.add(&o.scale(&-BigRational::one()))
    }

    pub fn mul(&self, o: &QPoly) -> QPoly {
        if self.is_zero() || o.is_zero() {
            return QPoly::zero();
        }
        let mut out = vec![BigRational::zero(); self.c.len() + o.c.len() - 1];
        for (i, a) in self.c.iter().enumerate() {
            for (j, b) in o.c.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        QPoly::new(out)
    }

    /// Quotient and remainder; panics on division by zero.
    pub fn div_rem(&self, d: &QPoly) -> (QPoly, QPoly) {
        assert!(!d.is_zero(), "polynomial division by zero");
        let mut r = self.c.clone();
        let dd = d.degree();
        let lead = d.leading();
        if self.c.len() < d.c.len() {
            return (QPoly::zero(), self.clone());
        }
        let mut q = vec![BigRational::zero(); self.c.len() - dd];
        for k in (0..q.len()).rev() {
            let coef = &r[k + dd] / &lead;
            if !coef.is_zero() {
                for (j, dc) in d.c.iter().enumerate() {
                    r[k + j] -= &coef * dc;
                }
            }
            q[k] = coef;
        }
        r.truncate(dd);
        (QPoly::new(q), QPoly::new(r))
    }

    pub fn rem(&self, d: &QPoly) -> QPoly {
        self.div_rem(d).1
    }

    pub fn monic(&self) -> QPoly {
        if self.is_zero() {
            return self.clone();
        }
        self.scale(&(BigRational::one() / self.leading()))
    }

    /// Monic gcd (zero if both inputs are zero).
    pub fn gcd(&self, o: &QPoly) -> QPoly {
        let (mut a, mut b) = (self.clone(), o.clone());
        while !b.is_zero() {
            let r = a.rem(&b);
            a = b;
            b = r;
        }
        a.monic()
    }

    pub fn derivative(&self) -> QPoly {
        QPoly::new(
            self.c.iter().enumerate().skip(1).map(|(i, a)| a * BigRational::from_integer(BigInt::from(i))).collect(),
        )
    }

    /// Yun's square-free decomposition: `self = lc * prod_i f_i^i` with each
    /// `f_i` monic, square-free and pairwise coprime. Entry `i - 1` holds `f_i`.
    pub fn squarefree_decomposition(&self) -> Vec<QPoly> {
        if self.degree() == 0 {
            return vec![];
        }
        let mut out = Vec::new();
        let d = self.derivative();
        let a0 = self.gcd(&d);
        let mut b = self.div_rem(&a0).0;
        let mut c = d.div_rem(&a0).0;
        while b.degree() > 0 {
            let dpoly = c.sub(&b.derivative());
            let g = b.gcd(&dpoly);
            b = b.div_rem(&g).0;
            c = dpoly.div_rem(&g).0;
            out.push(g);
        }
        out
    }

    /// Sturm chain `p, p', -rem(p, p'), ...`.
    pub fn sturm_chain(&self) -> Vec<QPoly> {
        let mut chain = vec![self.clone()];
        if self.degree() == 0 {
            return chain;
        }
        chain.push(self.derivative());
        loop {
            let n = chain.len();
            let r = chain[n - 2].rem(&chain[n - 1]);
            if r.is_zero() {
                break;
            }
            chain.push(r.scale(&-BigRational::one()));
        }
        chain
    }

    /// Number of distinct real roots in `(a, b]`, by Sturm's theorem.
    pub fn count_real_roots_in(&self, a: &BigRational, b: &BigRational) -> usize {
        if self.is_zero() || self.degree() == 0 {
            return 0;
        }
        let chain = self.sturm_chain();
        let va = sign_variations(&chain, a);
        let vb = sign_variations(&chain, b);
        va.saturating_sub(vb)
    }

    /// Clears denominators and content, keeping the sign of the leading term.
    pub fn primitive_integer(&self) -> IntPolynomial {
        if self.is_zero() {
            return IntPolynomial::new(vec![]);
        }
        let lcm = self.c.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
        let ints: Vec<BigInt> =
            self.c.iter().map(|v| (v * BigRational::from_integer(lcm.clone())).to_integer()).collect();
        let content = ints.iter().fold(BigInt::zero(), |acc, v| acc.gcd(v));
        let mut ints: Vec<BigInt> = ints.into_iter().map(|v| v / &content).collect();
        if ints.last().is_some_and(|v| v.is_negative()) {
            ints.iter_mut().for_each(|v| *v = -v.clone());
        }
        IntPolynomial::new(ints)
    }
}

fn sign_variations(chain: &[QPoly], x: &BigRational) -> usize {
    let signs: Vec<i8> = chain
        .iter()
        .map(|p| {
            let v = p.eval(x);
            if v.is_positive() {
                1
            } else if v.is_negative() {
                -1
            } else {
                0
            }
        })
        .filter(|&s| s != 0)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Euler's totient.
pub fn euler_phi(mut m: u64) -> u64 {
    let mut result = m;
    let mut p = 2;
    while p * p <= m {
        if m.is_multiple_of(p) {
            while m.is_multiple_of(p) {
                m /= p;
            }
            result -= result / p;
        }
        p += 1;
    }
    if m > 1 {
        result -= result / m;
    }
    result
}

/// The `m`-th cyclotomic polynomial, as `(x^m - 1) / prod_{k | m, k < m} Phi_k`.
pub fn cyclotomic(m: u64) -> IntPolynomial {
    assert!(m > 0, "cyclotomic index must be positive");
    let mut num = vec![BigRational::zero(); m as usize + 1];
    num[0] = -BigRational::one();
    num[m as usize] = BigRational::one();
    let mut p = QPoly::new(num);
    for k in (1..m).filter(|&k| m.is_multiple_of(k)) {
        p = p.div_rem(&cyclotomic(k).to_q()).0;
    }
    p.primitive_integer()
}
