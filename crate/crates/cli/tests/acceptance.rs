//! Acceptance suite. One `PASS`/`FAIL` line per criterion; exits nonzero if
//! any criterion fails. Tolerances and runtime budgets are pinned below.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semiflex::convergence::{manufactured, rate_report, RhoRule};
use semiflex::dirichlet::green_function;
use semiflex::field::{
    exact_pairing_variance, sample, ModelParams, TestFunction, SINE_SUB_LIMIT, SINE_SUPER_LIMIT,
};
use semiflex::grid::{build_grid, Classification, Domain, GridGeometry};
use semiflex::operators::audit::{self, Inequality};
use semiflex::operators::{
    backward_diff, char_poly, forward_diff, grid_inner, GridFunction, MixedOperatorSpec, OperatorKind,
};
use semiflex::rw1d::{
    conditional_covariance, membrane_explained_variance, membrane_explained_variance_gamma_form,
    simulate_w, var_w, BridgeTarget, RwParams, ALT_BETA_PER_KAPPA,
};
use semiflex::spectral::{continuum_operator, spectrum, weyl_check, SpectralTag};

const C1_REL_TOL: f64 = 1e-8;
const C2_REL_TOL: f64 = 1e-10;
const C2_N4_VALUE: f64 = 0.964041;
const C2_N4_TOL: f64 = 1e-6;
const C3_PATHS: usize = 100_000;
const C3_SE: f64 = 5.0;
const C4_SUB_RANGE: (f64, f64) = (1.8, 2.0);
const C4_SUPER_RANGE: (f64, f64) = (0.95, 1.05);
const C5_REL_TOL: f64 = 0.05;
const C5_REFERENCE_N: usize = 2048;
const C6_SAMPLES: usize = 100_000;
const C6_SE: f64 = 5.0;
const C7_SLACK: f64 = 1.1;
const C8_REL_TOL: f64 = 0.15;
const C8_MODES: usize = 100;
const C9_THETAS: usize = 10_000;
const C9_REL_TOL: f64 = 0.2;
const C9_SAMPLES: usize = 50;
const C9_H: f64 = 0.02;

/// Name, check and runtime budget in seconds.
type Criterion = (&'static str, fn() -> Outcome, u64);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn chain(n: usize) -> Arc<GridGeometry> {
    Arc::new(GridGeometry::new(Domain::unit_box(1).unwrap(), n, Classification::Chain).unwrap())
}

fn boxed(d: usize, n: usize) -> Arc<GridGeometry> {
    Arc::new(build_grid(Domain::unit_box(d).unwrap(), n).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Walk bridge covariance against the chain Green's function.
fn c1() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_alt: f64 = 0.0;
    let mut fitted = Vec::new();
    for n in [6, 8, 12] {
        for kappa in [0.25, 1.0, 4.0] {
            let g = green_function(chain(n), kappa).unwrap().to_dense();
            let p = RwParams::from_kappa(n, kappa).unwrap();
            let s = conditional_covariance(n, BridgeTarget::Walk(p)).unwrap().conditional;
            for (a, b) in s.iter().zip(g.iter()) {
                worst = worst.max(rel(*a, *b));
            }
            fitted.push(s.dot(&g) / g.dot(&g));
            let alt = RwParams::with_beta_per_kappa(n, kappa, ALT_BETA_PER_KAPPA).unwrap();
            let s_alt = conditional_covariance(n, BridgeTarget::Walk(alt)).unwrap().conditional;
            for (a, b) in s_alt.iter().zip(g.iter()) {
                worst_alt = worst_alt.max(rel(*a, *b));
            }
        }
    }
    let (lo, hi) = fitted
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &c| (l.min(c), h.max(c)));
    let constant_ok = fitted.iter().all(|c| (c - 1.0).abs() <= C1_REL_TOL);
    Outcome::new(
        worst <= C1_REL_TOL && constant_ok,
        format!(
            "max rel err {worst:.2e} (tol {C1_REL_TOL:e}); fitted constant in [{lo:.12}, {hi:.12}]; \
             beta = {ALT_BETA_PER_KAPPA}*kappa would give max rel err {worst_alt:.2}"
        ),
    )
}

/// Membrane Schur diagonal, N=4 value and strict bound.
fn c2() -> Outcome {
    let mut worst_gamma: f64 = 0.0;
    let mut worst_exact: f64 = 0.0;
    let mut bound_ok = true;
    for n in 4..=30 {
        let c = conditional_covariance(n, BridgeTarget::MembraneIncrement).unwrap();
        let explained = c.explained_diagonal();
        for i in 1..n {
            let e = explained[i - 1];
            worst_gamma = worst_gamma.max(rel(e, membrane_explained_variance_gamma_form(i, n)));
            worst_exact = worst_exact.max(rel(e, membrane_explained_variance(i, n)));
            bound_ok &= c.conditional[(i - 1, i - 1)] < i as f64;
        }
    }
    let y1 = conditional_covariance(4, BridgeTarget::MembraneIncrement)
        .unwrap()
        .conditional[(0, 0)];
    let gamma_ok = worst_gamma <= C2_REL_TOL;
    let value_ok = (y1 - C2_N4_VALUE).abs() <= C2_N4_TOL;
    Outcome::new(
        gamma_ok && value_ok && bound_ok,
        format!(
            "gamma form max rel err {worst_gamma:.2e} ({}); N=4 E[Y1^2|.] = {y1:.6} vs {C2_N4_VALUE} ({}); \
             bound < i ({}); exact det-D form max rel err {worst_exact:.1e}",
            verdict(gamma_ok),
            verdict(value_ok),
            verdict(bound_ok)
        ),
    )
}

/// Monte Carlo `Var(W_n)` against the closed form.
fn c3() -> Outcome {
    let n = 100;
    let mut worst_z: f64 = 0.0;
    let mut exact_ok = true;
    for (i, kappa) in [0.0, 1.0, 100.0].into_iter().enumerate() {
        let p = RwParams::from_kappa(n, kappa).unwrap();
        let t = simulate_w(&p, 1000 + i as u64, C3_PATHS).unwrap();
        for m in [10, 50, n] {
            let sq: Vec<f64> = t.paths.iter().map(|w| w[m - 1] * w[m - 1]).collect();
            let v = sq.iter().sum::<f64>() / C3_PATHS as f64;
            let se = (sq.iter().map(|s| (s - v).powi(2)).sum::<f64>() / (C3_PATHS * (C3_PATHS - 1)) as f64).sqrt();
            worst_z = worst_z.max((v - var_w(m, &p)).abs() / se);
            if kappa == 0.0 {
                exact_ok &= rel(var_w(m, &p), 2.0 * m as f64) <= 1e-14;
            }
        }
    }
    Outcome::new(
        worst_z <= C3_SE && exact_ok,
        format!("max |z| {worst_z:.2} (tol {C3_SE}); kappa=0 equals 2n: {}", verdict(exact_ok)),
    )
}

/// Phase-transition scaling of `Var(W_{N-1})`.
fn c4() -> Outcome {
    let n = 10_000;
    let p = RwParams::from_kappa(n, (n as f64).sqrt()).unwrap();
    let a = var_w(n - 1, &p) / n as f64;
    let n = 200;
    let nf = n as f64;
    let p = RwParams::from_kappa(n, nf.powi(3)).unwrap();
    let b = var_w(n - 1, &p) * 2.0 * p.beta / (nf * (nf - 1.0).powi(2));
    let a_ok = (C4_SUB_RANGE.0..=C4_SUB_RANGE.1).contains(&a);
    let b_ok = (C4_SUPER_RANGE.0..=C4_SUPER_RANGE.1).contains(&b);
    Outcome::new(
        a_ok && b_ok,
        format!(
            "(a) Var/N = {a:.4} in {C4_SUB_RANGE:?} ({}); (b) Var*2beta/(N(N-1)^2) = {b:.4} in {C4_SUPER_RANGE:?} ({})",
            verdict(a_ok),
            verdict(b_ok)
        ),
    )
}

fn chain_variance(n: usize, kappa: f64) -> f64 {
    let params = ModelParams::new(1, n, kappa).unwrap();
    exact_pairing_variance(&params, chain(n), &TestFunction::sine_mode(1)).unwrap()
}

/// Variance limits in the three regimes.
fn c5() -> Outcome {
    let sub = chain_variance(256, 16.0);
    let sup = chain_variance(128, 128f64.powi(3));
    let crit_rule = |n: usize| 2.0 * (n * n) as f64;
    let crit = chain_variance(256, crit_rule(256));
    let coarse = chain_variance(128, crit_rule(128));
    let reference = chain_variance(C5_REFERENCE_N, crit_rule(C5_REFERENCE_N));
    let sub_ok = rel(sub, SINE_SUB_LIMIT) <= C5_REL_TOL;
    let sup_ok = rel(sup, SINE_SUPER_LIMIT) <= C5_REL_TOL;
    let (lo, hi) = (SINE_SUPER_LIMIT.min(SINE_SUB_LIMIT), SINE_SUPER_LIMIT.max(SINE_SUB_LIMIT));
    let between_ok = lo < crit && crit < hi;
    let ref_ok = rel(crit, reference) <= C5_REL_TOL;
    Outcome::new(
        sub_ok && sup_ok && between_ok && ref_ok,
        format!(
            "sub {sub:.6} vs {SINE_SUB_LIMIT:.6} ({}); super {sup:.4e} vs {SINE_SUPER_LIMIT:.4e} ({}); \
             critical N=256 {crit:.4e} strictly between ({}) and vs N={C5_REFERENCE_N} reference {reference:.4e} ({}); \
             critical N=128 {coarse:.4e}",
            verdict(sub_ok),
            verdict(sup_ok),
            verdict(between_ok),
            verdict(ref_ok)
        ),
    )
}

/// Empirical covariance of exact samples against the Green's function.
fn c6() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (d, n, seed) in [(1, 32, 21), (2, 12, 22)] {
        let kappa = 1.0;
        let g = boxed(d, n);
        let params = ModelParams::new(d, n, kappa).unwrap();
        let ens = sample(params, g.clone(), C6_SAMPLES, seed).unwrap();
        let emp = ens.empirical_covariance();
        let green = green_function(g, kappa).unwrap().to_dense();
        let m = green.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let se = ((green[(i, i)] * green[(j, j)] + green[(i, j)].powi(2)) / C6_SAMPLES as f64).sqrt();
                worst = worst.max((emp[(i, j)] - green[(i, j)]).abs() / se);
            }
        }
        pass &= worst <= C6_SE;
        parts.push(format!("d={d} N={n}: max |z| {worst:.2}"));
    }
    Outcome::new(pass, format!("{} (tol {C6_SE})", parts.join("; ")))
}

/// Error envelope with C fitted on the two coarsest meshes.
fn c7() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for d in [1, 2] {
        for (kind, rule) in [
            (OperatorKind::NegLaplacian, "h^2"),
            (OperatorKind::Bilaplacian, "h"),
            (OperatorKind::Mixed, "1+h"),
        ] {
            let case = manufactured(kind, d).unwrap().with_rho(rule.parse::<RhoRule>().unwrap());
            let r = rate_report(&case).unwrap();
            let worst = r.rows.iter().map(|row| row.ratio / r.c_fit).fold(0.0, f64::max);
            let ok = r.pass();
            pass &= ok;
            parts.push(format!(
                "d={d} {kind:?} rho={rule}: max ratio/C {worst:.3} ({})",
                verdict(ok)
            ));
        }
    }
    Outcome::new(pass, format!("{} (slack {C7_SLACK})", parts.join("; ")))
}

/// Weyl exponents of the three operators.
fn c8() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (d, n) in [(1, 512), (2, 96)] {
        let g = boxed(d, n);
        for tag in [SpectralTag::NegLaplacian, SpectralTag::Bilaplacian, SpectralTag::Mixed] {
            let op = continuum_operator(tag, g.clone()).unwrap();
            let fit = weyl_check(&spectrum(&op, C8_MODES).unwrap()).unwrap();
            let target = tag.order() as f64 / d as f64;
            let ok = rel(fit.slope, target) <= C8_REL_TOL;
            pass &= ok;
            parts.push(format!("d={d} {}: {:.3} vs {target}", tag.label(), fit.slope));
        }
    }
    Outcome::new(pass, format!("{} (tol {C8_REL_TOL})", parts.join("; ")))
}

fn lattice_values(salt: u64) -> impl Fn(&[i64]) -> f64 {
    move |k: &[i64]| {
        let key = k.iter().fold(salt as f64, |acc, &c| acc * 31.0 + c as f64);
        (key * 12.9898).sin()
    }
}

/// Summation by parts, symbol coercivity and stability of fitted constants.
fn c9() -> Outcome {
    let mut sbp_worst: f64 = 0.0;
    for trial in 0..100u64 {
        let d = 1 + (trial % 2) as usize;
        let h = 0.2;
        let lo = vec![0; d];
        let hi = vec![4; d];
        let lo2 = vec![1; d];
        let hi2 = vec![6; d];
        let u = GridFunction::from_lattice_fn(h, &lo, &hi, lattice_values(trial));
        let v = GridFunction::from_lattice_fn(h, &lo2, &hi2, lattice_values(trial + 1000));
        for axis in 0..d {
            let lhs = grid_inner(&forward_diff(&u, axis), &v);
            let rhs = -grid_inner(&u, &backward_diff(&v, axis));
            sbp_worst = sbp_worst.max((lhs - rhs).abs());
        }
    }
    let sbp_ok = sbp_worst <= 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pi = std::f64::consts::PI;
    let mut coercive = true;
    for i in 0..C9_THETAS {
        let d = 1 + i % 3;
        let t: Vec<f64> = (0..d).map(|_| rng.random_range(-pi..pi)).collect();
        let s1: f64 = t.iter().map(|x| 1.0 - x.cos()).sum();
        let s2: f64 = t.iter().map(|x| (1.0 - x.cos()).powi(2)).sum();
        for rho in [0.0, 0.3, 5.0] {
            for kind in [OperatorKind::NegLaplacian, OperatorKind::Bilaplacian, OperatorKind::Mixed] {
                let spec = MixedOperatorSpec::new(kind, rho, C9_H).unwrap();
                // weights of -Δ and Δ² in h^{2m} L_h
                let h2 = C9_H * C9_H;
                let (a, b) = match kind {
                    OperatorKind::NegLaplacian => (1.0, rho / h2),
                    OperatorKind::Bilaplacian => (rho * h2, 1.0),
                    OperatorKind::Mixed => (h2, rho),
                };
                let p = char_poly(&spec, &t).unwrap();
                // round-off floor: ℓ¹ weight of the stencil times 1e-12
                let dim = d as f64;
                let floor = 1e-12 * (4.0 * dim * a + 16.0 * dim * dim * b);
                coercive &= p >= 2.0 * a * s1 + 4.0 * b * s2 - floor;
            }
        }
    }

    let mut worst_drift: f64 = 0.0;
    for (d, n) in [(1, 32), (2, 16)] {
        let (g1, g2) = (boxed(d, n), boxed(d, 2 * n));
        for ineq in [
            Inequality::Poincare { axis: 0 },
            Inequality::PureDerivatives { m: 2 },
            Inequality::WeightedNorm { m: 2 },
            Inequality::Truncated {
                kind: OperatorKind::Bilaplacian,
                rho: 0.0,
            },
            Inequality::Truncated {
                kind: OperatorKind::Mixed,
                rho: 1.0,
            },
        ] {
            let c1 = audit::fitted_constant(ineq, &g1, C9_SAMPLES, 1).unwrap();
            let c2 = audit::fitted_constant(ineq, &g2, C9_SAMPLES, 1).unwrap();
            worst_drift = worst_drift.max((c2 / c1 - 1.0).abs());
        }
    }
    let stable = worst_drift <= C9_REL_TOL;
    Outcome::new(
        sbp_ok && coercive && stable,
        format!(
            "summation by parts max defect {sbp_worst:.1e} ({}); coercivity on {C9_THETAS} thetas ({}); \
             max constant drift {worst_drift:.3} (tol {C9_REL_TOL})",
            verdict(sbp_ok),
            verdict(coercive)
        ),
    )
}

fn run_preset(preset: &str, out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_semiflex"))
        .args(["trajectories", "--preset", preset, "--out"])
        .arg(out)
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn sorted_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn terminal_sd(csv: &[u8]) -> Option<f64> {
    String::from_utf8_lossy(csv)
        .lines()
        .find_map(|l| l.strip_prefix("# terminal_sd: "))
        .and_then(|v| v.trim().parse().ok())
}

/// Deterministic figure presets with stratified terminal spread.
fn c10() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (preset, curves) in [("fig1", 4), ("fig2", 3)] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        if !run_preset(preset, a.path()) || !run_preset(preset, b.path()) {
            return Outcome::new(false, format!("{preset}: command failed"));
        }
        let (fa, fb) = (sorted_files(a.path()), sorted_files(b.path()));
        let identical = fa == fb;
        let csvs: Vec<_> = fa.iter().filter(|(n, _)| n.ends_with(".csv")).collect();
        let svgs = fa.iter().filter(|(n, _)| n.ends_with(".svg")).count();
        let layout = csvs.len() == curves && svgs == 1;
        let sds: Vec<f64> = csvs.iter().filter_map(|(_, c)| terminal_sd(c)).collect();
        let decreasing = sds.len() == curves && sds.windows(2).all(|w| w[1] < w[0]);
        pass &= identical && layout && decreasing;
        let shown: Vec<String> = sds.iter().map(|s| format!("{s:.2}")).collect();
        parts.push(format!(
            "{preset}: byte-identical ({}), {} csv + {svgs} svg ({}), terminal sd [{}] decreasing ({})",
            verdict(identical),
            csvs.len(),
            verdict(layout),
            shown.join(", "),
            verdict(decreasing)
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "fails"
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("walk bridge equals chain Green's function", c1, 5),
        ("membrane Schur diagonal", c2, 5),
        ("closed-form walk variance", c3, 30),
        ("phase-transition scaling", c4, 1),
        ("variance limits", c5, 60),
        ("sampler covariance", c6, 60),
        ("error envelope", c7, 120),
        ("Weyl exponents", c8, 120),
        ("discrete Sobolev audit", c9, 30),
        ("figure presets", c10, 60),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.into_iter().enumerate() {
        let id = format!("criterion_{:02}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| id.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {id} {name}: {}; runtime {:.2}s (budget {budget}s)",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {failed} failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
