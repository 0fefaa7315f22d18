//! Ergodicity and hyperbolicity of torus automorphisms.
//!
//! Both decisions are exact. Ergodicity holds iff no eigenvalue of `S` is a
//! root of unity, i.e. `char(S)` shares no factor with a cyclotomic
//! polynomial `Phi_m` of degree `phi(m) <= d`; since `phi(m) >= sqrt(m / 2)`
//! it suffices to scan `m <= 2 d^2`. The number of eigenvalues on the unit
//! circle is counted with Sturm chains on the self-reciprocal part of the
//! characteristic polynomial after the substitution `y = x + 1/x`.
//!
//! Only the off-circle root moduli and the invariant subspace bases are
//! floating point; see [`stable_splitting`].

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::IntMatrix;
use crate::poly::{cyclotomic, euler_phi, IntPolynomial, QPoly};
use crate::torus::TorusAutomorphism;

/// Default modulus tolerance separating the unit circle from the rest.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Exact characteristic polynomial `det(x I - S)` by the Faddeev-LeVerrier
/// recursion; the division by `k` at step `k` is exact over the integers.
pub fn char_poly(m: &IntMatrix) -> IntPolynomial {
    let d = m.dim();
    let mut coeffs = vec![BigInt::zero(); d + 1];
    coeffs[d] = BigInt::one();
    let mut acc = IntMatrix::new(vec![vec![BigInt::zero(); d]; d]).expect("square");
    let id = IntMatrix::identity(d).expect("d >= 2");
    for k in 1..=d {
        // acc <- S * acc + c_{d-k+1} I
        acc = m.mul(&acc).expect("same dimension");
        let shift = id.scale(&coeffs[d - k + 1]);
        acc = add(&acc, &shift);
        let tr = m.mul(&acc).expect("same dimension").trace();
        let kk = BigInt::from(k);
        debug_assert!((&tr % &kk).is_zero());
        coeffs[d - k] = -(tr / kk);
    }
    IntPolynomial::new(coeffs)
}

fn add(a: &IntMatrix, b: &IntMatrix) -> IntMatrix {
    let d = a.dim();
    let rows = (0..d).map(|i| (0..d).map(|j| a.get(i, j) + b.get(i, j)).collect()).collect();
    IntMatrix::new(rows).expect("square")
}

/// Outcome of the cyclotomic scan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErgodicityCertificate {
    pub ergodic: bool,
    /// Indices `m` whose `Phi_m` divides the characteristic polynomial.
    pub cyclotomic_factors: Vec<u64>,
    /// Every index examined (those with `phi(m) <= d`, `m <= 2 d^2`).
    pub checked: Vec<u64>,
}

/// Decides ergodicity exactly via gcds with cyclotomic polynomials.
pub fn is_ergodic(t: &TorusAutomorphism) -> ErgodicityCertificate {
    ergodicity_of_polynomial(&char_poly(t.matrix()), t.dim())
}

pub fn ergodicity_of_polynomial(p: &IntPolynomial, dim: usize) -> ErgodicityCertificate {
    let pq = p.to_q();
    let bound = 2 * (dim as u64) * (dim as u64);
    let checked: Vec<u64> = (1..=bound).filter(|&m| euler_phi(m) <= dim as u64).collect();
    let cyclotomic_factors: Vec<u64> =
        checked.iter().copied().filter(|&m| pq.gcd(&cyclotomic(m).to_q()).degree() > 0).collect();
    ErgodicityCertificate { ergodic: cyclotomic_factors.is_empty(), cyclotomic_factors, checked }
}

/// Exact number of roots (with multiplicity) on the unit circle.
pub fn count_unit_circle_roots(p: &IntPolynomial) -> Result<usize> {
    if p.constant_term().is_zero() {
        return Err(Error::ZeroConstantTerm);
    }
    let mut q = p.to_q();
    let mut count = 0;
    for r in [1i64, -1] {
        let r = BigRational::from_integer(BigInt::from(r));
        while q.degree() > 0 && q.eval(&r).is_zero() {
            q = q.div_rem(&QPoly::linear(r.clone())).0;
            count += 1;
        }
    }
    if q.degree() == 0 {
        return Ok(count);
    }
    let mut rev = q.coefficients().to_vec();
    rev.reverse();
    let g = q.gcd(&QPoly::new(rev));
    if g.degree() == 0 {
        return Ok(count);
    }
    let h = halve_palindromic(&g)?;
    let two = BigRational::from_integer(BigInt::from(2));
    for (i, part) in h.squarefree_decomposition().iter().enumerate() {
        count += 2 * (i + 1) * part.count_real_roots_in(&-two.clone(), &two);
    }
    Ok(count)
}

/// For palindromic `g` of degree `2m`, the `h` with `g(x) = x^m h(x + 1/x)`.
fn halve_palindromic(g: &QPoly) -> Result<QPoly> {
    let c = g.coefficients();
    let n = g.degree();
    if n % 2 == 1 || (0..=n).any(|i| c[i] != c[n - i]) {
        return Err(Error::InternalInconsistency("self-reciprocal part is not palindromic after removing +-1".into()));
    }
    let m = n / 2;
    // D_k(y) represents x^k + x^-k.
    let y = QPoly::new(vec![BigRational::zero(), BigRational::one()]);
    let mut d_prev = QPoly::new(vec![BigRational::from_integer(BigInt::from(2))]);
    let mut d_cur = y.clone();
    let mut h = QPoly::new(vec![c[m].clone()]);
    for k in 1..=m {
        h = h.add(&d_cur.scale(&c[m + k]));
        let next = y.mul(&d_cur).sub(&d_prev);
        d_prev = d_cur;
        d_cur = next;
    }
    Ok(h)
}

pub fn is_hyperbolic(t: &TorusAutomorphism) -> bool {
    count_unit_circle_roots(&char_poly(t.matrix())).map(|c| c == 0).unwrap_or(false)
}

/// Orthonormal basis of an approximately invariant subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceBasis {
    /// Each entry is one basis vector in standard coordinates.
    pub vectors: Vec<Vec<f64>>,
    /// `||S V - V (V^T S V)||_F`; zero for an exactly invariant subspace.
    pub residual: f64,
}

impl SubspaceBasis {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }
}

/// Unstable / neutral / stable splitting `E_u + E_e + E_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSplit {
    pub d_u: usize,
    pub d_e: usize,
    pub d_s: usize,
    /// Spectral radius of `S^{-1}` restricted to `E_u` (absent when `d_u = 0`).
    pub r_u: Option<f64>,
    pub basis_u: SubspaceBasis,
    pub basis_e: SubspaceBasis,
    pub basis_s: SubspaceBasis,
    pub eigenvalue_moduli: Vec<f64>,
    /// Largest backward error `|p(z)| / sum |a_i| |z|^i` over computed roots.
    pub root_residual: f64,
    pub tol: f64,
}

/// Numerical roots of `char(S)` grouped by modulus, with `d_e` fixed by the
/// exact counter. Eigenvalues come from a Schur decomposition of `S` followed
/// by Newton polishing on the characteristic polynomial.
pub fn stable_splitting(t: &TorusAutomorphism, tol: f64) -> Result<SpectralSplit> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let p = char_poly(t.matrix());
    let d_e = count_unit_circle_roots(&p)?;
    let d = t.dim();
    let s = DMatrix::from_row_slice(d, d, &t.matrix().to_f64_rows().concat());
    let coeffs = p.to_f64();
    let mut roots: Vec<Complex64> = s.clone().complex_eigenvalues().iter().map(|z| polish_root(&coeffs, *z)).collect();
    roots.sort_by(|a, b| (a.norm() - 1.0).abs().total_cmp(&(b.norm() - 1.0).abs()));

    let (neutral, rest) = roots.split_at(d_e);
    if let Some(z) = rest.iter().find(|z| (z.norm() - 1.0).abs() < tol) {
        return Err(Error::ToleranceConflict { modulus: z.norm(), tol });
    }
    let unstable: Vec<Complex64> = rest.iter().copied().filter(|z| z.norm() > 1.0).collect();
    let stable: Vec<Complex64> = rest.iter().copied().filter(|z| z.norm() < 1.0).collect();
    let r_u = unstable.iter().map(|z| 1.0 / z.norm()).reduce(f64::max);
    let root_residual = roots.iter().map(|z| backward_error(&coeffs, *z)).fold(0.0, f64::max);

    let groups = [unstable.clone(), neutral.to_vec(), stable.clone()];
    let basis = |k: usize| {
        let others: Vec<Complex64> =
            groups.iter().enumerate().filter(|(i, _)| *i != k).flat_map(|(_, g)| g.iter().copied()).collect();
        invariant_basis(&s, &others, groups[k].len())
    };
    let (basis_u, basis_e, basis_s) = (basis(0), basis(1), basis(2));
    let eigenvalue_moduli = roots.iter().map(|z| z.norm()).collect();

    Ok(SpectralSplit {
        d_u: unstable.len(),
        d_e,
        d_s: stable.len(),
        r_u,
        basis_u,
        basis_e,
        basis_s,
        eigenvalue_moduli,
        root_residual,
        tol,
    })
}

fn eval_with_derivative(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &a in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

fn backward_error(coeffs: &[f64], z: Complex64) -> f64 {
    let (p, _) = eval_with_derivative(coeffs, z);
    let scale: f64 = coeffs.iter().rev().fold(0.0, |acc, a| acc * z.norm() + a.abs());
    if scale == 0.0 {
        0.0
    } else {
        p.norm() / scale
    }
}

/// A few Newton steps, kept only while the residual decreases.
fn polish_root(coeffs: &[f64], mut z: Complex64) -> Complex64 {
    let mut best = eval_with_derivative(coeffs, z).0.norm();
    for _ in 0..8 {
        let (p, dp) = eval_with_derivative(coeffs, z);
        if dp.norm() == 0.0 {
            break;
        }
        let cand = z - p / dp;
        let r = eval_with_derivative(coeffs, cand).0.norm();
        if !(r < best) {
            break;
        }
        best = r;
        z = cand;
    }
    z
}

/// `E = image(prod_{lambda in others} (S - lambda I))`, whose dimension is `dim`.
fn invariant_basis(s: &DMatrix<f64>, others: &[Complex64], dim: usize) -> SubspaceBasis {
    let d = s.nrows();
    if dim == 0 {
        return SubspaceBasis { vectors: vec![], residual: 0.0 };
    }
    let sc: DMatrix<Complex64> = s.map(|v| Complex64::new(v, 0.0));
    let mut prod = DMatrix::<Complex64>::identity(d, d);
    for &lam in others {
        let shifted = &sc - DMatrix::<Complex64>::identity(d, d) * lam;
        prod = shifted * prod;
        let norm = prod.norm();
        if norm > 0.0 {
            prod /= Complex64::new(norm, 0.0);
        }
    }
    // others is closed under conjugation, so the product is real up to rounding.
    let real = prod.map(|z| z.re);
    let svd = real.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let v = DMatrix::from_fn(d, dim, |i, j| u[(i, order[j])]);
    let residual = (s * &v - &v * (v.transpose() * s * &v)).norm();
    SubspaceBasis { vectors: (0..dim).map(|j| v.column(j).iter().copied().collect()).collect(), residual }
}

/// Everything the `check` report needs about one automorphism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub det: i8,
    /// Coefficients of `det(x I - S)`, lowest degree first, as decimal strings.
    pub char_poly: Vec<String>,
    pub ergodic: bool,
    pub cyclotomic_factors: Vec<u64>,
    pub hyperbolic: bool,
    pub d_u: usize,
    pub d_e: usize,
    pub d_s: usize,
    pub r_u: Option<f64>,
}

pub fn classify(t: &TorusAutomorphism, tol: f64) -> Result<Classification> {
    let p = char_poly(t.matrix());
    let cert = is_ergodic(t);
    let split = stable_splitting(t, tol)?;
    Ok(Classification {
        det: t.det(),
        char_poly: p.coefficients().iter().map(|c| c.to_string()).collect(),
        ergodic: cert.ergodic,
        cyclotomic_factors: cert.cyclotomic_factors,
        hyperbolic: split.d_e == 0,
        d_u: split.d_u,
        d_e: split.d_e,
        d_s: split.d_s,
        r_u: split.r_u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn mat(rows: &[&[i64]]) -> IntMatrix {
        IntMatrix::from_rows_i64(rows).unwrap()
    }

    fn non_hyperbolic_quartic() -> IntMatrix {
        mat(&[&[0, 0, 0, -1], &[1, 0, 0, 2], &[0, 1, 0, 0], &[0, 0, 1, 2]])
    }

    fn rotation() -> IntMatrix {
        mat(&[&[0, -1], &[1, 0]])
    }

    /// det(xI - S) by Laplace expansion with polynomial entries.
    fn cofactor_char_poly(m: &IntMatrix) -> IntPolynomial {
        let d = m.dim();
        let entries: Vec<Vec<IntPolynomial>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let c = -m.get(i, j).clone();
                        if i == j {
                            IntPolynomial::new(vec![c, BigInt::one()])
                        } else {
                            IntPolynomial::new(vec![c])
                        }
                    })
                    .collect()
            })
            .collect();
        laplace(&entries)
    }

    fn laplace(a: &[Vec<IntPolynomial>]) -> IntPolynomial {
        if a.len() == 1 {
            return a[0][0].clone();
        }
        let mut total = IntPolynomial::new(vec![]);
        for j in 0..a.len() {
            let minor: Vec<Vec<IntPolynomial>> = a[1..]
                .iter()
                .map(|r| r.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, v)| v.clone()).collect())
                .collect();
            let term = a[0][j].mul(&laplace(&minor));
            let signed = if j % 2 == 0 { term } else { term.mul(&IntPolynomial::from_i64(&[-1])) };
            let n = total.coefficients().len().max(signed.coefficients().len());
            total = IntPolynomial::new(
                (0..n)
                    .map(|i| {
                        total.coefficients().get(i).cloned().unwrap_or_default()
                            + signed.coefficients().get(i).cloned().unwrap_or_default()
                    })
                    .collect(),
            );
        }
        total
    }

    fn random_unimodular(d: usize, rng: &mut impl Rng) -> IntMatrix {
        let mut u = IntMatrix::identity(d).unwrap();
        for _ in 0..6 {
            let i = rng.random_range(0..d);
            let mut j = rng.random_range(0..d);
            while j == i {
                j = rng.random_range(0..d);
            }
            let k: i64 = rng.random_range(-2..=2);
            let mut e = IntMatrix::identity(d).unwrap().rows();
            e[i][j] = BigInt::from(k);
            u = IntMatrix::new(e).unwrap().mul(&u).unwrap();
        }
        u
    }

    #[test]
    fn char_poly_examples() {
        assert_eq!(char_poly(&IntMatrix::identity(2).unwrap()), IntPolynomial::from_i64(&[1, -2, 1]));
        assert_eq!(char_poly(&mat(&[&[2, 1], &[1, 1]])), IntPolynomial::from_i64(&[1, -3, 1]));
        // frozen from the cofactor oracle below
        assert_eq!(char_poly(&non_hyperbolic_quartic()), IntPolynomial::from_i64(&[1, -2, 0, -2, 1]));
        assert_eq!(cofactor_char_poly(&non_hyperbolic_quartic()), IntPolynomial::from_i64(&[1, -2, 0, -2, 1]));
    }

    #[test]
    fn char_poly_matches_cofactor_oracle_on_random_matrices() {
        let mut rng = stream_rng(17, 0);
        for d in 2..=5 {
            for _ in 0..10 {
                let rows: Vec<Vec<i64>> = (0..d).map(|_| (0..d).map(|_| rng.random_range(-5..=5)).collect()).collect();
                let m = IntMatrix::from_rows_i64(&rows).unwrap();
                assert_eq!(char_poly(&m), cofactor_char_poly(&m), "{m}");
            }
        }
    }

    #[test]
    fn ergodicity_examples() {
        let cat = TorusAutomorphism::new(mat(&[&[2, 1], &[1, 1]])).unwrap();
        let cert = is_ergodic(&cat);
        assert!(cert.ergodic);
        assert_eq!(cert.checked, vec![1, 2, 3, 4, 6]);

        let rot = TorusAutomorphism::new(rotation()).unwrap();
        let cert = is_ergodic(&rot);
        assert!(!cert.ergodic);
        assert_eq!(cert.cyclotomic_factors, vec![4]);

        assert!(is_ergodic(&TorusAutomorphism::new(non_hyperbolic_quartic()).unwrap()).ergodic);
    }

    #[test]
    fn unit_circle_counts() {
        assert_eq!(count_unit_circle_roots(&IntPolynomial::from_i64(&[1, -3, 1])).unwrap(), 0);
        assert_eq!(count_unit_circle_roots(&IntPolynomial::from_i64(&[1, 0, 1])).unwrap(), 2);
        assert_eq!(count_unit_circle_roots(&IntPolynomial::from_i64(&[1, -2, 0, -2, 1])).unwrap(), 2);
        // (x - 1)^2 (x + 1)
        assert_eq!(count_unit_circle_roots(&IntPolynomial::from_i64(&[1, -1, -1, 1])).unwrap(), 3);
        // (x^2 + 1)^2 (x^2 - 3x + 1)
        let sq = IntPolynomial::from_i64(&[1, 0, 1]);
        let p = sq.mul(&sq).mul(&IntPolynomial::from_i64(&[1, -3, 1]));
        assert_eq!(count_unit_circle_roots(&p).unwrap(), 4);
        // Phi_5 has all four roots on the circle
        assert_eq!(count_unit_circle_roots(&cyclotomic(5)).unwrap(), 4);
        // 2x^2 - 5x + 2 = (2x - 1)(x - 2): reciprocal pair, off the circle
        assert_eq!(count_unit_circle_roots(&IntPolynomial::from_i64(&[2, -5, 2])).unwrap(), 0);
        assert_eq!(count_unit_circle_roots(&IntPolynomial::from_i64(&[0, 1, 1])), Err(Error::ZeroConstantTerm));
    }

    #[test]
    fn hyperbolicity_examples() {
        assert!(is_hyperbolic(&TorusAutomorphism::cat_map()));
        assert!(!is_hyperbolic(&TorusAutomorphism::new(non_hyperbolic_quartic()).unwrap()));
        assert!(!is_hyperbolic(&TorusAutomorphism::new(rotation()).unwrap()));
    }

    #[test]
    fn splitting_cat_map() {
        let s = stable_splitting(&TorusAutomorphism::cat_map(), DEFAULT_TOLERANCE).unwrap();
        assert_eq!((s.d_u, s.d_e, s.d_s), (1, 0, 1));
        let expected = 2.0 / (3.0 + 5f64.sqrt());
        assert!((s.r_u.unwrap() - expected).abs() < 1e-14);
        assert!(s.basis_u.residual < 1e-12 && s.basis_s.residual < 1e-12);
        // unstable eigenvector of [[2,1],[1,1]] is proportional to (golden ratio, 1)
        let v = &s.basis_u.vectors[0];
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((v[0] / v[1] - phi).abs() < 1e-12);
    }

    #[test]
    fn splitting_rotation_and_non_hyperbolic_quartic() {
        let r = stable_splitting(&TorusAutomorphism::new(rotation()).unwrap(), DEFAULT_TOLERANCE).unwrap();
        assert_eq!((r.d_u, r.d_e, r.d_s), (0, 2, 0));
        assert_eq!(r.r_u, None);

        let p =
            stable_splitting(&TorusAutomorphism::new(non_hyperbolic_quartic()).unwrap(), DEFAULT_TOLERANCE).unwrap();
        assert_eq!((p.d_u, p.d_e, p.d_s), (1, 2, 1));
        // x + 1/x = 1 + sqrt(3) gives the real pair; the larger root is ~2.2966
        let y = 1.0 + 3f64.sqrt();
        let big = (y + (y * y - 4.0).sqrt()) / 2.0;
        assert!((p.r_u.unwrap() - 1.0 / big).abs() < 1e-12);
        for b in [&p.basis_u, &p.basis_e, &p.basis_s] {
            assert!(b.residual < 1e-10);
        }
    }

    #[test]
    fn tolerance_must_be_positive() {
        assert!(stable_splitting(&TorusAutomorphism::cat_map(), 0.0).is_err());
    }

    #[test]
    fn tolerance_conflict_is_reported() {
        // companion of x^4 - x^3 - x^2 - x + 1: real roots ~1.722 and ~0.581
        let lehmer_like = mat(&[&[0, 0, 0, -1], &[1, 0, 0, 1], &[0, 1, 0, 1], &[0, 0, 1, 1]]);
        let t = TorusAutomorphism::new(lehmer_like).unwrap();
        let res = stable_splitting(&t, 0.9);
        assert!(matches!(res, Err(Error::ToleranceConflict { .. })), "{res:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn ergodicity_is_conjugation_invariant(seed in 0u64..10_000) {
            let mut rng = stream_rng(seed, 0);
            for base in [mat(&[&[2, 1], &[1, 1]]), rotation(), non_hyperbolic_quartic()] {
                let u = random_unimodular(base.dim(), &mut rng);
                let uinv = TorusAutomorphism::new(u.clone()).unwrap().inverse_matrix().clone();
                let conj = u.mul(&base).unwrap().mul(&uinv).unwrap();
                let a = TorusAutomorphism::new(base.clone()).unwrap();
                let b = TorusAutomorphism::new(conj.clone()).unwrap();
                prop_assert_eq!(char_poly(&base), char_poly(&conj));
                prop_assert_eq!(is_ergodic(&a).ergodic, is_ergodic(&b).ergodic);
            }
        }

        #[test]
        fn constant_term_is_signed_determinant(seed in 0u64..10_000) {
            let mut rng = stream_rng(seed, 1);
            let d = rng.random_range(2..=5);
            let u = random_unimodular(d, &mut rng);
            let p = char_poly(&u);
            let sign = if d % 2 == 0 { 1 } else { -1 };
            prop_assert_eq!(p.constant_term(), BigInt::from(sign) * u.determinant());
        }

        #[test]
        fn splitting_dimensions_add_up(seed in 0u64..10_000) {
            let mut rng = stream_rng(seed, 2);
            let d = rng.random_range(2..=4);
            let u = random_unimodular(d, &mut rng);
            let t = TorusAutomorphism::new(u.clone()).unwrap();
            let p = char_poly(&u);
            let base = count_unit_circle_roots(&p).unwrap();
            prop_assert_eq!(count_unit_circle_roots(&p.mul(&IntPolynomial::from_i64(&[1, 0, 1]))).unwrap(), base + 2);
            if let Ok(s) = stable_splitting(&t, 1e-6) {
                prop_assert_eq!(s.d_u + s.d_e + s.d_s, d);
                prop_assert_eq!(s.d_e, base);
                if p == p.reversed() || p == p.reversed().mul(&IntPolynomial::from_i64(&[-1])) {
                    prop_assert_eq!(s.d_u, s.d_s);
                }
                if is_ergodic(&t).ergodic {
                    prop_assert!(s.d_e < d);
                }
            }
        }
    }
}
