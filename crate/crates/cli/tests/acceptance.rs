//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::HashSet;
use std::process::Command;
use std::time::{Duration, Instant};

use num_bigint::{BigInt, BigUint};
use rand::Rng;
use toral::empirical::{kantorovich_continuous, kantorovich_discrete, lp_norm_in_s, ReferenceCdf, SampleSeries};
use toral::limits::{a_constant, cardan_p0, OrbitEnsemble};
use toral::observable::{hoelder_example, log_modulus_example, modulus_estimate, trig_poly, ClosedFormCdf, TrigTerm};
use toral::rng::stream_rng;
use toral::spectral::classify;
use toral::stats::{clt_marginal_test, fdd_covariance_test, moment_scaling, CltSettings, CltStatistic, FddSettings};
use toral::{random_point, IntMatrix, RationalTorusPoint, TorusAutomorphism};

type Verdict = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Verdict);

const MERSENNE_61: u64 = (1 << 61) - 1;

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cat_map() -> TorusAutomorphism {
    TorusAutomorphism::cat_map()
}

fn cos_x1() -> toral::observable::Observable {
    trig_poly(2, vec![TrigTerm { k: vec![1, 0], cos: 1.0, sin: 0.0 }]).unwrap()
}

fn matrix(rows: &[&[i64]]) -> TorusAutomorphism {
    TorusAutomorphism::new(IntMatrix::from_rows_i64(rows).unwrap()).unwrap()
}

/// Product of random elementary matrices, hence unimodular.
fn random_unimodular(d: usize, rng: &mut impl Rng) -> TorusAutomorphism {
    let mut m = IntMatrix::identity(d).unwrap();
    for _ in 0..8 {
        let i = rng.random_range(0..d);
        let j = (i + rng.random_range(1..d)) % d;
        let mut e = IntMatrix::identity(d).unwrap().rows();
        e[i][j] = BigInt::from(rng.random_range(-3i64..=3));
        m = IntMatrix::new(e).unwrap().mul(&m).unwrap();
    }
    TorusAutomorphism::new(m).unwrap()
}

fn threshold_constants_binary() -> Verdict {
    let out = Command::new(env!("CARGO_BIN_EXE_toral"))
        .args(["constants", "--ell", "1", "--alpha", "1"])
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let a = report["result"]["a_value"].as_f64().ok_or("missing a_value")?;
    let p0 = report["result"]["p0"].as_f64().ok_or("missing p0")?;
    // p0 / (p0 - 2) = (p0 - 1)(p0 + 2) / p0, cross-multiplied
    let residual = p0 * p0 - (p0 - 1.0) * (p0 + 2.0) * (p0 - 2.0);
    let err = (a - 10.0 / 3.0).abs();
    ensure(
        err < 1e-12 && (2.89..=2.91).contains(&p0) && residual.abs() < 1e-10,
        format!("a = {a:.15}, |a - 10/3| = {err:.1e}, p0 = {p0:.6}, residual = {residual:.1e}"),
    )
}

/// Root of `p / (p - 2l) = (p - 1)(p + 2 alpha) / p` in `(2l, 4l)`.
fn bisection_root(ell: f64, alpha: f64) -> f64 {
    let h = |p: f64| p / (p - 2.0 * ell) - (p - 1.0) * (p + 2.0 * alpha) / p;
    let (mut lo, mut hi) = (2.0 * ell + 1e-12, 4.0 * ell);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Nested dense grids: each round scans 10^4 points around the previous best.
fn grid_minimum(ell: f64, alpha: f64) -> f64 {
    let k = |p: f64| (p / (alpha * (p - 2.0 * ell))).max((p - 1.0) * (2.0 * alpha + p) / (p * alpha));
    let (mut lo, mut hi) = ((ell + 2.0).max(2.0 * ell) + 1e-12, 12.0 * ell);
    let mut best = f64::INFINITY;
    for _ in 0..6 {
        let step = (hi - lo) / 10_000.0;
        let mut arg = lo;
        for i in 0..=10_000 {
            let p = lo + i as f64 * step;
            let v = k(p);
            if v < best {
                best = v;
                arg = p;
            }
        }
        (lo, hi) = ((arg - step).max(lo), (arg + step).min(hi));
    }
    best
}

fn cardan_against_oracles() -> Verdict {
    let mut worst_root: f64 = 0.0;
    let mut worst_grid: f64 = 0.0;
    for ell in 1..=5u32 {
        for alpha in [0.1, 0.25, 0.5, 0.75, 1.0] {
            let root = cardan_p0(ell, alpha).map_err(|e| format!("l={ell} alpha={alpha}: {e}"))?;
            if root.delta.is_nan() || root.delta >= 0.0 {
                return Err(format!("l={ell} alpha={alpha}: discriminant {}", root.delta));
            }
            worst_root = worst_root.max((root.p0 - bisection_root(ell as f64, alpha)).abs());
            let a = a_constant(ell, alpha).map_err(|e| e.to_string())?.a_value;
            worst_grid = worst_grid.max((a - grid_minimum(ell as f64, alpha)).abs());
        }
    }
    ensure(
        worst_root < 1e-10 && worst_grid < 1e-6,
        format!(
            "max |p0 - bisection| = {worst_root:.1e}, max |a - grid| = {worst_grid:.1e}, all discriminants negative"
        ),
    )
}

fn classification_suite() -> Verdict {
    let quartic = classify(&matrix(&[&[0, 0, 0, -1], &[1, 0, 0, 2], &[0, 1, 0, 0], &[0, 0, 1, 2]]), 1e-9)
        .map_err(|e| e.to_string())?;
    let cat = classify(&cat_map(), 1e-9).map_err(|e| e.to_string())?;
    let rot = classify(&matrix(&[&[0, -1], &[1, 0]]), 1e-9).map_err(|e| e.to_string())?;
    let ok = quartic.ergodic
        && !quartic.hyperbolic
        && quartic.d_e == 2
        && cat.ergodic
        && cat.hyperbolic
        && cat.d_u == 1
        && cat.d_s == 1
        && !rot.ergodic
        && rot.cyclotomic_factors == vec![4];
    ensure(
        ok,
        format!(
            "4x4: ergodic={} hyperbolic={} d_e={}; cat: d_u={} d_s={}; rotation: factors {:?}",
            quartic.ergodic, quartic.hyperbolic, quartic.d_e, cat.d_u, cat.d_s, rot.cyclotomic_factors
        ),
    )
}

fn exactness_suite() -> Verdict {
    let mut rng = stream_rng(4, 0);
    let mut grids = 0;
    for d in [2usize, 3] {
        for _ in 0..5 {
            let t = random_unimodular(d, &mut rng);
            for q in 2..=8u64 {
                let total = q.pow(d as u32);
                let mut image = HashSet::new();
                for code in 0..total {
                    let nums: Vec<u64> = (0..d).map(|i| code / q.pow(i as u32) % q).collect();
                    let x = RationalTorusPoint::from_u64(q, &nums).unwrap();
                    let y = t.apply(&x);
                    if t.apply_inverse(&y) != x {
                        return Err(format!("inverse fails at {nums:?} mod {q} for {}", t.matrix()));
                    }
                    image.insert(y.numerators().to_vec());
                }
                if image.len() as u64 != total {
                    return Err(format!("{} is not a bijection of the grid mod {q}", t.matrix()));
                }
                grids += 1;
            }
        }
    }
    let q = BigUint::from(MERSENNE_61);
    for i in 0..1000 {
        let t = if i % 2 == 0 { cat_map() } else { random_unimodular(3, &mut rng) };
        let x = random_point(&q, t.dim(), &mut rng);
        if t.apply_inverse(&t.apply(&x)) != x || t.apply(&t.apply_inverse(&x)) != x {
            return Err(format!("round trip fails for {}", t.matrix()));
        }
    }
    Ok(format!("{grids} grids enumerated, 1000 round trips with q = 2^61 - 1"))
}

/// Measure with at most 6 atoms and weights in units of 1/7.
fn random_measure(rng: &mut impl Rng) -> Vec<(f64, u32)> {
    let atoms = rng.random_range(1..=6usize);
    let mut units = vec![1u32; atoms];
    for _ in atoms..7 {
        units[rng.random_range(0..atoms)] += 1;
    }
    units.into_iter().map(|u| (rng.random_range(-3.0..3.0), u)).collect()
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Splits each measure into 7 unit atoms and minimises over all matchings.
fn brute_force_matching(mu: &[(f64, u32)], nu: &[(f64, u32)]) -> f64 {
    let expand = |m: &[(f64, u32)]| m.iter().flat_map(|&(x, u)| std::iter::repeat_n(x, u as usize)).collect::<Vec<_>>();
    let (xs, ys) = (expand(mu), expand(nu));
    let mut perm: Vec<usize> = (0..ys.len()).collect();
    let mut best = f64::INFINITY;
    loop {
        let cost: f64 = xs.iter().zip(&perm).map(|(x, &j)| (x - ys[j]).abs()).sum();
        best = best.min(cost);
        if !next_permutation(&mut perm) {
            break;
        }
    }
    best / 7.0
}

fn kantorovich_oracle() -> Verdict {
    let mut rng = stream_rng(5, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (mu, nu) = (random_measure(&mut rng), random_measure(&mut rng));
        let split = |m: &[(f64, u32)]| -> (Vec<f64>, Vec<f64>) {
            (m.iter().map(|&(_, u)| u as f64 / 7.0).collect(), m.iter().map(|&(x, _)| x).collect())
        };
        let ((w1, a1), (w2, a2)) = (split(&mu), split(&nu));
        let k = kantorovich_discrete(&w1, &a1, &w2, &a2).map_err(|e| e.to_string())?;
        worst = worst.max((k - brute_force_matching(&mu, &nu)).abs());
    }
    let references = [
        ReferenceCdf::Closed(ClosedFormCdf::Uniform { lo: 0.0, hi: 1.0 }),
        ReferenceCdf::Closed(ClosedFormCdf::Cosine { center: 0.0, amplitude: 1.0 }),
        ReferenceCdf::discrete(&[-0.5, 0.25, 0.9], &[0.2, 0.5, 0.3]).map_err(|e| e.to_string())?,
    ];
    let mut identical = 0;
    for (i, reference) in references.iter().enumerate() {
        for n in [1usize, 17, 500] {
            let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let series = SampleSeries::scalar(values).map_err(|e| e.to_string())?;
            let m = 1.5 + i as f64;
            let k = kantorovich_continuous(&series, reference, m).map_err(|e| e.to_string())?;
            let l1 = lp_norm_in_s(&series, n, reference, 1.0, m).map_err(|e| e.to_string())?.value;
            if k.to_bits() != (l1 / n as f64).to_bits() {
                return Err(format!("K = {k:e} but L1/n = {:e} (reference {i}, n = {n})", l1 / n as f64));
            }
            identical += 1;
        }
    }
    ensure(
        worst < 1e-12,
        format!("max |discrete - matching| = {worst:.1e} over 200 pairs, {identical} bitwise identities"),
    )
}

fn target() -> OrbitEnsemble {
    OrbitEnsemble { n_orbits: 64, orbit_length: 1 << 16, q: BigUint::from(MERSENNE_61) }
}

fn clt_desk_scale() -> Verdict {
    let settings = CltSettings {
        n: 4096,
        replicates: 2000,
        significance: 0.01,
        variance_band: 0.1,
        lag_cutoff: 30,
        target: target(),
    };
    let r = clt_marginal_test(&cat_map(), &cos_x1(), &CltStatistic::PartialSum { mean: 0.0 }, &settings, 6)
        .map_err(|e| e.to_string())?;
    let ratio = r.variance_ratio.ok_or("no variance ratio")?;
    ensure(
        r.ks_p_value > 0.01 && (0.9..=1.1).contains(&ratio),
        format!("KS p = {:.3}, variance ratio = {ratio:.4}, sigma^2 = {:.4}", r.ks_p_value, r.target_variance),
    )
}

fn kiefer_structure() -> Verdict {
    // levels at probabilities 0.2, 0.4, 0.6, 0.8 of cos(2 pi x1)
    let probs = [0.2, 0.4, 0.6, 0.8];
    let s_list: Vec<Vec<f64>> = probs.iter().map(|u: &f64| vec![(std::f64::consts::PI * (1.0 - u)).cos()]).collect();
    let settings = FddSettings { n: 4096, replicates: 2000, lag_cutoff: 30, target: target() };
    let r = fdd_covariance_test(&cat_map(), &cos_x1(), &s_list, &probs, &settings, 7).map_err(|e| e.to_string())?;
    ensure(
        (0.45..=0.55).contains(&r.time_ratio) && r.relative_frobenius_error < 0.15,
        format!("time ratio = {:.4}, relative Frobenius error = {:.4}", r.time_ratio, r.relative_frobenius_error),
    )
}

fn moment_scaling_slope() -> Verdict {
    let n_list: Vec<usize> = (8..=14).map(|e| 1 << e).collect();
    let r = moment_scaling(&cat_map(), &cos_x1(), 4.0, &n_list, 1000, &BigUint::from(MERSENNE_61), 8)
        .map_err(|e| e.to_string())?;
    let slope = r.slope.ok_or("degenerate moments")?;
    let (lo, hi) = r.slope_ci.unwrap_or((f64::NAN, f64::NAN));
    ensure((0.45..=0.55).contains(&slope), format!("slope = {slope:.4}, 95% CI [{lo:.4}, {hi:.4}]"))
}

/// Least-squares slope of `y` on `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn modulus_calibration() -> Verdict {
    let deltas: Vec<f64> = (4..=20).map(|e| 2f64.powi(-e)).collect();
    let anchor = vec![0.3, 0.7];
    let mut rng = stream_rng(9, 0);

    let f = log_modulus_example(2.0, anchor.clone(), 1.0).map_err(|e| e.to_string())?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &d in &deltas {
        let est = modulus_estimate(&f, 2, d, 4000, &mut rng).map_err(|e| e.to_string())?;
        xs.push((1.0 + d.ln().abs()).ln());
        ys.push(est.value.ln());
    }
    let exponent = -slope(&xs, &ys);

    let g = hoelder_example(0.5, anchor, 1.0).map_err(|e| e.to_string())?;
    let mut violations = 0;
    for &d in &deltas {
        let est = modulus_estimate(&g, 2, d, 4000, &mut rng).map_err(|e| e.to_string())?;
        if est.value > d.sqrt() {
            violations += 1;
        }
    }
    ensure(
        (exponent - 2.0).abs() <= 0.2 * 2.0 && violations == 0,
        format!("fitted exponent = {exponent:.4}, Hoelder bound violations = {violations}/{}", deltas.len()),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("threshold constants", Duration::from_secs(1), threshold_constants_binary),
        ("Cardan against oracles", Duration::from_secs(5), cardan_against_oracles),
        ("classification", Duration::from_secs(1), classification_suite),
        ("exact arithmetic", Duration::from_secs(10), exactness_suite),
        ("Kantorovich oracle", Duration::from_secs(5), kantorovich_oracle),
        ("CLT at desk scale", Duration::from_secs(300), clt_desk_scale),
        ("Kiefer structure", Duration::from_secs(300), kiefer_structure),
        ("moment scaling", Duration::from_secs(300), moment_scaling_slope),
        ("modulus calibration", Duration::from_secs(30), modulus_calibration),
    ];
    let mut failures = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = check();
        let elapsed = start.elapsed();
        let (pass, detail) = match verdict {
            Ok(d) if elapsed <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget of {budget:?}")),
            Err(d) => (false, d),
        };
        failures += usize::from(!pass);
        println!(
            "criterion {}: {} {name} ({:.2}s): {detail}",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
