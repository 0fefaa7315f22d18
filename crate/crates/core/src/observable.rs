//! Observables `f: T^d -> R^ell` and Monte-Carlo estimates of their moduli of
//! continuity.
//!
//! Distances on the torus use the sup norm in standard coordinates,
//! `d_1(x, y) = min_k ||x - y + k||_inf`. Modulus estimates are lower bounds
//! of a supremum: the maximum of `|f(x) - f(y)|` over sampled pairs with
//! `d_1(x, y) <= delta`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{SpectralSplit, SubspaceBasis};

type EvalFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// One term `cos * cos(2 pi <k, x>) + sin * sin(2 pi <k, x>)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub k: Vec<i64>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Regularity class attached to an observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Regularity {
    /// Finite trigonometric sum; Lipschitz with the given constant (sup norm).
    TrigPoly {
        lipschitz: f64,
    },
    /// `omega(f, delta) <= c delta^alpha`.
    Hoelder {
        alpha: f64,
        c: f64,
    },
    /// `omega(f, delta) <= c |log delta|^(-a)`.
    LogModulus {
        a: f64,
        c: f64,
    },
    Custom,
}

/// Distribution functions with a closed form (one-dimensional observables).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ClosedFormCdf {
    /// Uniform on `[lo, hi]`.
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Law of `center + amplitude * cos(2 pi U)`, `U` uniform.
    Cosine {
        center: f64,
        amplitude: f64,
    },
    PointMass {
        at: f64,
    },
}

impl ClosedFormCdf {
    pub fn cdf(&self, s: f64) -> f64 {
        match *self {
            ClosedFormCdf::Uniform { lo, hi } => ((s - lo) / (hi - lo)).clamp(0.0, 1.0),
            ClosedFormCdf::Cosine { center, amplitude } => {
                let t = (s - center) / amplitude;
                if t < -1.0 {
                    0.0
                } else if t >= 1.0 {
                    1.0
                } else {
                    1.0 - t.acos() / PI
                }
            }
            ClosedFormCdf::PointMass { at } => {
                if s >= at {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Interval outside which the distribution function is 0 or 1.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            ClosedFormCdf::Uniform { lo, hi } => (lo, hi),
            ClosedFormCdf::Cosine { center, amplitude } => (center - amplitude, center + amplitude),
            ClosedFormCdf::PointMass { at } => (at, at),
        }
    }
}

/// Serializable description of an observable, as accepted in configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    Trig {
        terms: Vec<TrigTerm>,
    },
    LogModulus {
        a: f64,
        anchor: Vec<f64>,
        #[serde(default = "one")]
        c: f64,
    },
    Hoelder {
        alpha: f64,
        anchor: Vec<f64>,
        #[serde(default = "one")]
        c: f64,
    },
    /// `f(x) = x_index` (a coordinate of the fundamental domain `[0, 1)^d`).
    Coordinate {
        index: usize,
    },
    Constant {
        value: f64,
    },
    Vector {
        components: Vec<ObservableSpec>,
    },
}

fn one() -> f64 {
    1.0
}

impl ObservableSpec {
    pub fn build(&self, dim: usize) -> Result<Observable> {
        let mut obs = match self {
            ObservableSpec::Trig { terms } => trig_poly(dim, terms.clone())?,
            ObservableSpec::LogModulus { a, anchor, c } => log_modulus_example(*a, anchor.clone(), *c)?,
            ObservableSpec::Hoelder { alpha, anchor, c } => hoelder_example(*alpha, anchor.clone(), *c)?,
            ObservableSpec::Coordinate { index } => coordinate(dim, *index)?,
            ObservableSpec::Constant { value } => constant(dim, *value),
            ObservableSpec::Vector { components } => {
                let parts = components.iter().map(|c| c.build(dim)).collect::<Result<Vec<_>>>()?;
                Observable::stack(parts)?
            }
        };
        if let Some(d) = obs.dim {
            if d != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: d });
            }
        }
        obs.spec = Some(self.clone());
        Ok(obs)
    }
}

/// A function from the torus to `R^ell` with regularity metadata.
#[derive(Clone)]
pub struct Observable {
    ell: usize,
    dim: Option<usize>,
    eval: Arc<EvalFn>,
    regularity: Regularity,
    known_mean: Option<Vec<f64>>,
    closed_form: Option<ClosedFormCdf>,
    focus_points: Vec<Vec<f64>>,
    spec: Option<ObservableSpec>,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("ell", &self.ell)
            .field("regularity", &self.regularity)
            .field("known_mean", &self.known_mean)
            .field("closed_form", &self.closed_form)
            .field("spec", &self.spec)
            .finish_non_exhaustive()
    }
}

impl Observable {
    /// Wraps an arbitrary pure function; `eval(x, out)` must fill all `ell` outputs.
    pub fn custom<F>(ell: usize, eval: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            ell,
            dim: None,
            eval: Arc::new(eval),
            regularity: Regularity::Custom,
            known_mean: None,
            closed_form: None,
            focus_points: vec![],
            spec: None,
        }
    }

    /// Concatenates scalar or vector observables into one `R^ell` observable.
    pub fn stack(parts: Vec<Observable>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidInput("vector observable needs components".into()));
        }
        let ell = parts.iter().map(|p| p.ell).sum();
        let known_mean = parts.iter().map(|p| p.known_mean.clone()).collect::<Option<Vec<_>>>().map(|v| v.concat());
        let regularity = weakest(parts.iter().map(|p| &p.regularity));
        let focus_points = parts.iter().flat_map(|p| p.focus_points.clone()).collect();
        let dim = parts.iter().find_map(|p| p.dim);
        let evals: Vec<(usize, Arc<EvalFn>)> = parts.iter().map(|p| (p.ell, Arc::clone(&p.eval))).collect();
        let eval = move |x: &[f64], out: &mut [f64]| {
            let mut offset = 0;
            for (n, e) in &evals {
                e(x, &mut out[offset..offset + n]);
                offset += n;
            }
        };
        Ok(Self {
            ell,
            dim,
            eval: Arc::new(eval),
            regularity,
            known_mean,
            closed_form: if parts.len() == 1 { parts[0].closed_form.clone() } else { None },
            focus_points,
            spec: None,
        })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn regularity(&self) -> &Regularity {
        &self.regularity
    }

    pub fn known_mean(&self) -> Option<&[f64]> {
        self.known_mean.as_deref()
    }

    pub fn closed_form_cdf(&self) -> Option<&ClosedFormCdf> {
        self.closed_form.as_ref()
    }

    pub fn spec(&self) -> Option<&ObservableSpec> {
        self.spec.as_ref()
    }

    /// Points near which the modulus of continuity is attained; modulus
    /// estimators include them among the sampled base points.
    pub fn focus_points(&self) -> &[Vec<f64>] {
        &self.focus_points
    }

    pub fn with_known_mean(mut self, mean: Vec<f64>) -> Self {
        self.known_mean = Some(mean);
        self
    }

    pub fn with_regularity(mut self, regularity: Regularity) -> Self {
        self.regularity = regularity;
        self
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.eval)(x, out)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ell];
        (self.eval)(x, &mut out);
        out
    }

    /// First component, for scalar observables.
    pub fn eval_scalar(&self, x: &[f64]) -> f64 {
        if self.ell == 1 {
            let mut out = [0.0];
            (self.eval)(x, &mut out);
            out[0]
        } else {
            self.eval(x)[0]
        }
    }
}

fn weakest<'a>(mut it: impl Iterator<Item = &'a Regularity>) -> Regularity {
    let first = it.next().cloned().unwrap_or(Regularity::Custom);
    it.fold(first, |acc, r| if &acc == r { acc } else { Regularity::Custom })
}

/// Sup-norm distance on the torus.
pub fn torus_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let t = (a - b).rem_euclid(1.0);
            t.min(1.0 - t)
        })
        .fold(0.0, f64::max)
}

/// `f(x) = sum cos * cos(2 pi <k,x>) + sin * sin(2 pi <k,x>)`.
pub fn trig_poly(dim: usize, terms: Vec<TrigTerm>) -> Result<Observable> {
    for t in &terms {
        if t.k.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: t.k.len() });
        }
        if !t.cos.is_finite() || !t.sin.is_finite() {
            return Err(Error::InvalidInput("trig coefficients must be finite".into()));
        }
    }
    let mean: f64 = terms.iter().filter(|t| t.k.iter().all(|&k| k == 0)).map(|t| t.cos).sum();
    let lipschitz: f64 = terms
        .iter()
        .map(|t| 2.0 * PI * t.k.iter().map(|k| k.unsigned_abs() as f64).sum::<f64>() * (t.cos.abs() + t.sin.abs()))
        .sum();
    let closed_form = single_frequency_law(&terms, mean);
    let owned = terms.clone();
    let eval = move |x: &[f64], out: &mut [f64]| {
        out[0] = owned
            .iter()
            .map(|t| {
                let phase = 2.0 * PI * t.k.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum::<f64>();
                let mut v = 0.0;
                if t.cos != 0.0 {
                    v += t.cos * phase.cos();
                }
                if t.sin != 0.0 {
                    v += t.sin * phase.sin();
                }
                v
            })
            .sum();
    };
    Ok(Observable {
        ell: 1,
        dim: Some(dim),
        eval: Arc::new(eval),
        regularity: Regularity::TrigPoly { lipschitz },
        known_mean: Some(vec![mean]),
        closed_form,
        focus_points: vec![],
        spec: Some(ObservableSpec::Trig { terms }),
    })
}

/// If all nonzero frequencies coincide up to sign, `f = c + R cos(2 pi <k,x> - phi)`
/// and `<k,x> mod 1` is uniform, so the law of `f` is known.
fn single_frequency_law(terms: &[TrigTerm], mean: f64) -> Option<ClosedFormCdf> {
    let mut base: Option<&[i64]> = None;
    let (mut a, mut b) = (0.0, 0.0);
    for t in terms.iter().filter(|t| t.k.iter().any(|&k| k != 0)) {
        let sign = match base {
            None => {
                base = Some(&t.k);
                1.0
            }
            Some(k0) if k0 == t.k.as_slice() => 1.0,
            Some(k0) if k0.iter().zip(&t.k).all(|(p, q)| *p == -*q) => -1.0,
            Some(_) => return None,
        };
        a += t.cos;
        b += sign * t.sin;
    }
    let amplitude = a.hypot(b);
    if base.is_none() || amplitude == 0.0 {
        Some(ClosedFormCdf::PointMass { at: mean })
    } else {
        Some(ClosedFormCdf::Cosine { center: mean, amplitude })
    }
}

pub fn constant(dim: usize, value: f64) -> Observable {
    trig_poly(dim, vec![TrigTerm { k: vec![0; dim], cos: value, sin: 0.0 }]).expect("well-formed constant")
}

/// `f(x) = x_index`, reduced to `[0, 1)`. Not continuous on the torus.
pub fn coordinate(dim: usize, index: usize) -> Result<Observable> {
    if index >= dim {
        return Err(Error::InvalidInput(format!("coordinate index {index} out of range for d = {dim}")));
    }
    let mut obs = Observable::custom(1, move |x, out| out[0] = x[index].rem_euclid(1.0));
    obs.dim = Some(dim);
    obs.known_mean = Some(vec![0.5]);
    obs.closed_form = Some(ClosedFormCdf::Uniform { lo: 0.0, hi: 1.0 });
    obs.spec = Some(ObservableSpec::Coordinate { index });
    Ok(obs)
}

/// `f(x) = c (1 + |log d_1(x, anchor)|)^(-a)`, extended by `f(anchor) = 0`.
/// Its modulus of continuity is `c (1 + |log delta|)^(-a)`, attained at the anchor.
pub fn log_modulus_example(a: f64, anchor: Vec<f64>, c: f64) -> Result<Observable> {
    if !(a > 0.0) || !c.is_finite() {
        return Err(Error::InvalidInput(format!("log-modulus exponent must be positive, got {a}")));
    }
    let dim = anchor.len();
    let at = anchor.clone();
    let mut obs = Observable::custom(1, move |x, out| {
        let r = torus_distance(x, &at);
        out[0] = if r == 0.0 { 0.0 } else { c * (1.0 + r.ln().abs()).powf(-a) };
    });
    obs.dim = Some(dim);
    obs.regularity = Regularity::LogModulus { a, c };
    obs.focus_points = vec![anchor.clone()];
    obs.spec = Some(ObservableSpec::LogModulus { a, anchor, c });
    Ok(obs)
}

/// `f(x) = c d_1(x, anchor)^alpha`: Hoelder of order `alpha` with constant `c`,
/// attained at the anchor.
pub fn hoelder_example(alpha: f64, anchor: Vec<f64>, c: f64) -> Result<Observable> {
    if !(alpha > 0.0 && alpha <= 1.0) || !(c >= 0.0) {
        return Err(Error::InvalidInput(format!("Hoelder exponent must lie in (0, 1], got {alpha}")));
    }
    let dim = anchor.len();
    let at = anchor.clone();
    let mut obs = Observable::custom(1, move |x, out| out[0] = c * torus_distance(x, &at).powf(alpha));
    obs.dim = Some(dim);
    obs.regularity = Regularity::Hoelder { alpha, c };
    obs.focus_points = vec![anchor.clone()];
    obs.spec = Some(ObservableSpec::Hoelder { alpha, anchor, c });
    Ok(obs)
}

/// Result of a modulus-of-continuity estimate. Always a lower bound of the
/// true supremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusEstimate {
    pub delta: f64,
    pub value: f64,
    pub n_pairs: usize,
    pub lower_bound: bool,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1/2), got {delta}")));
    }
    Ok(())
}

fn max_abs_diff(f: &Observable, x: &[f64], y: &[f64], fx: &mut [f64], fy: &mut [f64]) -> f64 {
    f.eval_into(x, fx);
    f.eval_into(y, fy);
    fx.iter().zip(fy.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Base point for pair `j`: every fourth pair starts at a focus point (when
/// the observable has any), the rest are uniform.
fn base_point<R: Rng + ?Sized>(f: &Observable, dim: usize, j: usize, rng: &mut R, x: &mut [f64]) {
    let focus = f.focus_points();
    if !focus.is_empty() && j.is_multiple_of(4) {
        x.copy_from_slice(&focus[(j / 4) % focus.len()]);
    } else {
        x.iter_mut().take(dim).for_each(|v| *v = rng.random::<f64>());
    }
}

/// Monte-Carlo lower estimate of `omega(f, delta)` with displacements uniform
/// in the sup-norm ball of radius `delta`.
pub fn modulus_estimate<R: Rng + ?Sized>(
    f: &Observable,
    dim: usize,
    delta: f64,
    n_pairs: usize,
    rng: &mut R,
) -> Result<ModulusEstimate> {
    check_delta(delta)?;
    let (mut x, mut y) = (vec![0.0; dim], vec![0.0; dim]);
    let (mut fx, mut fy) = (vec![0.0; f.ell()], vec![0.0; f.ell()]);
    let mut best: f64 = 0.0;
    for j in 0..n_pairs {
        base_point(f, dim, j, rng, &mut x);
        for i in 0..dim {
            let h = delta * (2.0 * rng.random::<f64>() - 1.0);
            y[i] = (x[i] + h).rem_euclid(1.0);
        }
        best = best.max(max_abs_diff(f, &x, &y, &mut fx, &mut fy));
    }
    Ok(ModulusEstimate { delta, value: best, n_pairs, lower_bound: true })
}

/// Which part of the splitting displacements are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Unstable,
    StableNeutral,
}

/// Adds a point uniform in the Euclidean ball of radius `delta` of `span(basis)`.
fn add_ball_sample<R: Rng + ?Sized>(basis: &SubspaceBasis, delta: f64, rng: &mut R, h: &mut [f64]) {
    let k = basis.dim();
    if k == 0 {
        return;
    }
    let g: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let radius = delta * rng.random::<f64>().powf(1.0 / k as f64);
    for (coef, v) in g.iter().zip(&basis.vectors) {
        let c = if norm > 0.0 { coef / norm * radius } else { 0.0 };
        for (hi, vi) in h.iter_mut().zip(v) {
            *hi += c * vi;
        }
    }
}

/// Lower estimate of the directional moduli `omega_(u)` or `omega_(s,e)`.
pub fn directional_modulus_estimate<R: Rng + ?Sized>(
    f: &Observable,
    split: &SpectralSplit,
    direction: Direction,
    delta: f64,
    n_pairs: usize,
    rng: &mut R,
) -> Result<ModulusEstimate> {
    check_delta(delta)?;
    let bases: Vec<&SubspaceBasis> = match direction {
        Direction::Unstable => vec![&split.basis_u],
        Direction::StableNeutral => vec![&split.basis_s, &split.basis_e],
    };
    if bases.iter().all(|b| b.dim() == 0) {
        return Err(Error::MissingSubspace);
    }
    let dim = split.d_u + split.d_e + split.d_s;
    let (mut x, mut y, mut h) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let (mut fx, mut fy) = (vec![0.0; f.ell()], vec![0.0; f.ell()]);
    let mut best: f64 = 0.0;
    for j in 0..n_pairs {
        base_point(f, dim, j, rng, &mut x);
        h.iter_mut().for_each(|v| *v = 0.0);
        for b in &bases {
            add_ball_sample(b, delta, rng, &mut h);
        }
        for i in 0..dim {
            y[i] = (x[i] + h[i]).rem_euclid(1.0);
        }
        best = best.max(max_abs_diff(f, &x, &y, &mut fx, &mut fy));
    }
    Ok(ModulusEstimate { delta, value: best, n_pairs, lower_bound: true })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum MeanMethod {
    Exact,
    MonteCarlo { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub value: Vec<f64>,
    /// Standard error per component (Monte-Carlo only).
    pub std_error: Option<Vec<f64>>,
    pub n: Option<usize>,
}

/// Space average `lambda(f)` per component.
pub fn mean<R: Rng + ?Sized>(f: &Observable, dim: usize, method: MeanMethod, rng: &mut R) -> Result<MeanEstimate> {
    match method {
        MeanMethod::Exact => f
            .known_mean()
            .map(|m| MeanEstimate { value: m.to_vec(), std_error: None, n: None })
            .ok_or(Error::ExactUnavailable),
        MeanMethod::MonteCarlo { n } => {
            if n < 2 {
                return Err(Error::InvalidInput("Monte-Carlo mean needs n >= 2".into()));
            }
            let ell = f.ell();
            let (mut sum, mut sq) = (vec![0.0; ell], vec![0.0; ell]);
            let mut x = vec![0.0; dim];
            let mut out = vec![0.0; ell];
            for _ in 0..n {
                x.iter_mut().for_each(|v| *v = rng.random::<f64>());
                f.eval_into(&x, &mut out);
                for i in 0..ell {
                    sum[i] += out[i];
                    sq[i] += out[i] * out[i];
                }
            }
            let nf = n as f64;
            let value: Vec<f64> = sum.iter().map(|s| s / nf).collect();
            let std_error = (0..ell)
                .map(|i| {
                    let var = (sq[i] - nf * value[i] * value[i]) / (nf - 1.0);
                    (var.max(0.0) / nf).sqrt()
                })
                .collect();
            Ok(MeanEstimate { value, std_error: Some(std_error), n: Some(n) })
        }
    }
}
