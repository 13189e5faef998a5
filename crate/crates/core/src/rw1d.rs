//! One-dimensional random-walk representation of the mixed model.
//!
//! With `ε̃_i` i.i.d. `N(0, σ²/(1-γ)²)`, `S_n = Σ_{i<=n} ε̃_i` and
//! `U_n = γ(U_{n-1} + ε̃_n)`, the walk `W_n = S_n - U_n` conditioned on
//! `W_N = W_{N+1} = 0` has the law of the mixed model on `{1, .., N-1}`.
//!
//! Parameters: `s = √(1+2β)`, `γ = β/(1+β+s)`, `σ² = 4/(1+β+s)`. Matching the
//! walk precision `(1-γ)²/σ² (-Δ₂) + γ/σ² Δ₂²` with the model precision
//! `-Δ + κΔ²` (normalized `Δ = Δ₂/2`) gives `β = κ`.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

/// Alternative scaling `β = 16κ`, used only by diagnostics that compare it
/// against the exact matching `β = κ`.
pub const ALT_BETA_PER_KAPPA: f64 = 16.0;

/// `(γ, σ²)` for a given `β >= 0`, evaluated without cancellation.
pub fn gamma_sigma(beta: f64) -> (f64, f64) {
    let s = (1.0 + 2.0 * beta).sqrt();
    let den = 1.0 + beta + s;
    (beta / den, 4.0 / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwParams {
    pub n: usize,
    pub kappa: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma2: f64,
    /// `1 - γ`, computed as `(1+s)/(1+β+s)`.
    pub one_minus_gamma: f64,
    /// `ζ = 1/β + √(1/β (1/β + 2))`, so that `γ = 1/(1+ζ)`; infinite at `β = 0`.
    pub zeta: f64,
}

impl RwParams {
    /// Model with bending coefficient `κ` (`β = κ`).
    pub fn from_kappa(n: usize, kappa: f64) -> Result<Self> {
        Self::with_beta_per_kappa(n, kappa, 1.0)
    }

    pub fn with_beta_per_kappa(n: usize, kappa: f64, beta_per_kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return invalid(format!("kappa must be finite and nonnegative, got {kappa}"));
        }
        let mut p = Self::from_beta(n, beta_per_kappa * kappa)?;
        p.kappa = kappa;
        Ok(p)
    }

    pub fn from_beta(n: usize, beta: f64) -> Result<Self> {
        if n < 2 {
            return invalid("N must be at least 2");
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return invalid(format!("beta must be finite and nonnegative, got {beta}"));
        }
        let (gamma, sigma2) = gamma_sigma(beta);
        let s = (1.0 + 2.0 * beta).sqrt();
        let zeta = if beta == 0.0 {
            f64::INFINITY
        } else {
            let ib = 1.0 / beta;
            ib + (ib * (ib + 2.0)).sqrt()
        };
        Ok(Self {
            n,
            kappa: beta,
            beta,
            gamma,
            sigma2,
            one_minus_gamma: (1.0 + s) / (1.0 + beta + s),
            zeta,
        })
    }

    /// Standard deviation of `ε̃` (equal to `√2` up to round-off).
    pub fn eps_tilde_sd(&self) -> f64 {
        self.sigma2.sqrt() / self.one_minus_gamma
    }

    /// `1 - γ^n`
    fn one_minus_gamma_pow(&self, n: f64) -> f64 {
        if self.gamma == 0.0 {
            1.0
        } else {
            -(n * self.gamma.ln()).exp_m1()
        }
    }

    /// `r_j = Σ_{l<=j} γ^l` for `j = 0..len`, by the recurrence `r_j = 1 + γ r_{j-1}`.
    fn partial_sums(&self, len: usize) -> Vec<f64> {
        let mut r = Vec::with_capacity(len);
        let mut acc = 0.0;
        for _ in 0..len {
            acc = 1.0 + self.gamma * acc;
            r.push(acc);
        }
        r
    }
}

/// Sample paths `W_1..W_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    pub params: RwParams,
    pub seed: u64,
    pub paths: Vec<Vec<f64>>,
}

impl Trajectories {
    /// CSV `path_id,n,W`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "path_id,n,W")?;
        for (p, path) in self.paths.iter().enumerate() {
            for (i, w) in path.iter().enumerate() {
                writeln!(out, "{p},{},{w:.16e}", i + 1)?;
            }
        }
        Ok(())
    }
}

/// Simulates `n_paths` independent paths; path `p` uses the ChaCha stream `p`
/// of `seed`, so the result does not depend on the thread count.
pub fn simulate_w(params: &RwParams, seed: u64, n_paths: usize) -> Result<Trajectories> {
    if n_paths == 0 {
        return invalid("at least one path is required");
    }
    let normal = Normal::new(0.0, params.eps_tilde_sd())
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let (mut s, mut u) = (0.0, 0.0);
            (0..params.n)
                .map(|_| {
                    let e = normal.sample(&mut rng);
                    s += e;
                    u = params.gamma * (u + e);
                    s - u
                })
                .collect()
        })
        .collect();
    Ok(Trajectories {
        params: *params,
        seed,
        paths,
    })
}

/// Closed-form `Var(W_n)`:
/// `nσ²/(1-γ)² - σ²γ²(1-γⁿ)²/((1-γ)³(1+γ)) - 2σ²γ(1-γⁿ)/((1-γ)³(1+γ))`.
pub fn var_w(n: usize, params: &RwParams) -> f64 {
    let g = params.gamma;
    let omg = params.one_minus_gamma;
    let t = params.one_minus_gamma_pow(n as f64);
    let lead = n as f64 * params.sigma2 / (omg * omg);
    let common = params.sigma2 / (omg * omg * omg * (1.0 + g));
    lead - common * g * t * (g * t + 2.0)
}

/// `Var(W_n) = Var S_n + Var U_n - 2 Cov(S_n, U_n)` from explicit sums of
/// powers of `γ`.
pub fn var_w_decomposed(n: usize, params: &RwParams) -> f64 {
    let tau2 = params.sigma2 / (params.one_minus_gamma * params.one_minus_gamma);
    let g = params.gamma;
    let (mut p, mut s1, mut s2) = (1.0, 0.0, 0.0);
    for _ in 0..n {
        p *= g;
        s1 += p;
        s2 += p * p;
    }
    tau2 * (n as f64 - 2.0 * s1 + s2)
}

/// `Cov(W_a, W_b) = σ² Σ_{i<=min(a,b)} r_{a-i} r_{b-i}` for `a, b` in `1..=len`.
fn walk_covariance(params: &RwParams, len: usize) -> DMatrix<f64> {
    let r = params.partial_sums(len);
    let mut c = DMatrix::zeros(len, len);
    for a in 1..=len {
        for b in a..=len {
            let s: f64 = (1..=a).map(|i| r[a - i] * r[b - i]).sum();
            c[(a - 1, b - 1)] = params.sigma2 * s;
            c[(b - 1, a - 1)] = params.sigma2 * s;
        }
    }
    c
}

/// Arithmetic used for the bridge coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    Double,
    /// Double-double (about 106 bits), for large `N` with `γ` near one.
    Extended,
}

/// Regression coefficients `(r₁(k), r₂(k))` of `W_k` on `(W_N, W_{N+1})`, so
/// that `Ŵ_k = W_k - r₁(k) W_N - r₂(k) W_{N+1}` is the bridge.
///
/// Defined for `1 <= k <= N+1`; at `k = N` it returns `(1, 0)` and at `k = N+1`
/// `(0, 1)`.
pub fn bridge_coefficients(k: usize, n: usize, gamma: f64, precision: Precision) -> Result<(f64, f64)> {
    if n < 2 || k == 0 || k > n + 1 {
        return invalid(format!("need 1 <= k <= N+1 and N >= 2, got k={k}, N={n}"));
    }
    if !(0.0..1.0).contains(&gamma) {
        return invalid(format!("gamma must lie in [0, 1), got {gamma}"));
    }
    let (r, s1, s2) = match precision {
        Precision::Double => bridge_polys::<f64>(k, n, gamma),
        Precision::Extended => {
            let (r, s1, s2) = bridge_polys::<DoubleDouble>(k, n, gamma);
            return finish(r.to_f64(), (s1 / r).to_f64(), (s2 / r).to_f64());
        }
    };
    finish(r, s1 / r, s2 / r)
}

fn finish(r: f64, r1: f64, r2: f64) -> Result<(f64, f64)> {
    if !(r.abs() >= 1e-14) {
        return Err(Error::DegenerateDenominator { value: r });
    }
    Ok((r1, r2))
}

/// `(r(k), s₁(k), s₂(k))` with all powers of `γ` non-negative.
fn bridge_polys<T: Scalar>(k: usize, n: usize, gamma: f64) -> (T, T, T) {
    let g = T::from_f64(gamma);
    let one = T::from_f64(1.0);
    let kk = T::from_f64(k as f64);
    let nn = T::from_f64(n as f64);
    let p = |e: usize| g.powu(e);
    let gm1 = g - one;

    let r = gm1
        * (p(n + 1) - one)
        * (-nn + g * (T::from_f64(2.0) + nn + p(n) * (T::from_f64(-2.0) + gm1 * nn)));

    let s1 = -kk + g + g * kk - p(k + 1)
        + p(3 + 2 * n - k)
        + p(3 + 2 * n) * (-one + gm1 * kk)
        + p(n) * (p(3) - g) * (one - kk + nn)
        + p(n + k + 2) * (T::from_f64(2.0) + nn - g * (one + nn))
        + p(n + 1 - k) * (one + nn - g * (T::from_f64(2.0) + nn));

    let s2 = p(2 + k) + g * kk - p(2) * (one + kk)
        - p(2 + 2 * n - k)
        + p(2 + 2 * n) * (one + kk - g * kk)
        + p(2 + n - k)
        + p(1 + n) * (p(2) - one) * (kk - nn)
        + p(1 + n - k) * gm1 * nn
        + p(2 + n + k) * (-one + gm1 * nn);

    (r, s1, s2)
}

trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    fn powu(self, mut e: usize) -> Self {
        let mut base = self;
        let mut acc = Self::from_f64(1.0);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> DoubleDouble {
    let s = a + b;
    DoubleDouble {
        hi: s,
        lo: b - (s - a),
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let r = quick_two_sum(s, e + t);
        quick_two_sum(r.hi, r.lo + f)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        DoubleDouble {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self - o * Self::from_f64(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Self::from_f64(q2);
        let q3 = r.hi / o.hi;
        quick_two_sum(q1, q2) + Self::from_f64(q3)
    }
}

impl Scalar for DoubleDouble {
    fn from_f64(x: f64) -> Self {
        DoubleDouble { hi: x, lo: 0.0 }
    }
    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Which bridge is conditioned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BridgeTarget {
    /// `(W_1..W_{N-1})` given `W_N = W_{N+1} = 0`.
    Walk(RwParams),
    /// Membrane increments: the simple random walk `(Y_1..Y_{N-1})` given
    /// `Z_N = Z_{N+1} = 0`, where `Z_n = Σ_{m<=n} Y_m`.
    MembraneIncrement,
    /// Membrane heights `(Z_1..Z_{N-1})` given `Z_N = Z_{N+1} = 0`.
    MembraneHeight,
}

/// Joint covariance `[[A, B], [C, D]]` of a target block and two conditioning
/// coordinates, with the conditional covariance `A - B D⁻¹ C`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGaussian {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub conditional: DMatrix<f64>,
}

impl ConditionalGaussian {
    pub fn from_blocks(a: DMatrix<f64>, b: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let det = d.determinant();
        if !(det > 0.0) {
            return Err(Error::SingularConditioning { det });
        }
        let dinv = d
            .clone()
            .try_inverse()
            .ok_or(Error::SingularConditioning { det })?;
        let mut conditional = &a - &b * dinv * b.transpose();
        conditional = (&conditional + conditional.transpose()) * 0.5;
        Ok(Self {
            a,
            b,
            d,
            conditional,
        })
    }

    /// `B D⁻¹`: row `i` holds the regression coefficients of target `i` on the
    /// conditioning coordinates.
    pub fn regression(&self) -> DMatrix<f64> {
        &self.b * self.d.clone().try_inverse().expect("checked at construction")
    }

    /// Diagonal of `B D⁻¹ C`.
    pub fn explained_diagonal(&self) -> DVector<f64> {
        (&self.a - &self.conditional).diagonal()
    }
}

pub fn conditional_covariance(n: usize, target: BridgeTarget) -> Result<ConditionalGaussian> {
    if n < 3 {
        return invalid("N must be at least 3");
    }
    let m = n - 1;
    let full = match target {
        BridgeTarget::Walk(p) => walk_covariance(&p, n + 1),
        BridgeTarget::MembraneIncrement => {
            // rows 0..m: Y_1..Y_{N-1}; rows m, m+1: Z_N, Z_{N+1}
            let cov_yz = |i: usize, b: usize| -> f64 { (1..=b).map(|l| i.min(l) as f64).sum() };
            let mut c = DMatrix::zeros(n + 1, n + 1);
            for i in 1..=m {
                for j in 1..=m {
                    c[(i - 1, j - 1)] = i.min(j) as f64;
                }
                for (col, b) in [(m, n), (m + 1, n + 1)] {
                    c[(i - 1, col)] = cov_yz(i, b);
                    c[(col, i - 1)] = cov_yz(i, b);
                }
            }
            for (r, a) in [(m, n), (m + 1, n + 1)] {
                for (s, b) in [(m, n), (m + 1, n + 1)] {
                    c[(r, s)] = membrane_height_cov(a, b);
                }
            }
            c
        }
        BridgeTarget::MembraneHeight => {
            DMatrix::from_fn(n + 1, n + 1, |i, j| membrane_height_cov(i + 1, j + 1))
        }
    };
    let a = full.view((0, 0), (m, m)).into_owned();
    let b = full.view((0, m), (m, 2)).into_owned();
    let d = full.view((m, m), (2, 2)).into_owned();
    ConditionalGaussian::from_blocks(a, b, d)
}

/// `Cov(Z_a, Z_b) = Σ_{l<=a} Σ_{j<=b} min(l, j)` for the integrated simple walk.
fn membrane_height_cov(a: usize, b: usize) -> f64 {
    let (a, b) = (a.min(b) as f64, a.max(b) as f64);
    // Σ_{l<=a} [ l(l+1)/2 + l(b-l) ]
    a * (a + 1.0) * (3.0 * b - a + 1.0) / 6.0
}

/// `det D = N(N+1)²(N+2)/12` for the membrane conditioning block.
pub fn membrane_det(n: usize) -> f64 {
    let n = n as f64;
    n * (n + 1.0).powi(2) * (n + 2.0) / 12.0
}

/// Exact `(B D⁻¹ C)(i, i)` for the membrane increments:
/// `i²(4N² - 6Ni + 8N + 3i² - 6i + 3) / (N(N+1)(N+2))`.
pub fn membrane_explained_variance(i: usize, n: usize) -> f64 {
    let (i, n) = (i as f64, n as f64);
    i * i * (4.0 * n * n - 6.0 * n * i + 8.0 * n + 3.0 * i * i - 6.0 * i + 3.0)
        / (n * (n + 1.0) * (n + 2.0))
}

/// `γ_N = N(N+1)²(8N²+3N+6)/36`, the determinant used by the alternative
/// closed form below. It is not `det D`.
pub fn membrane_gamma_n(n: usize) -> f64 {
    let n = n as f64;
    n * (n + 1.0).powi(2) * (8.0 * n * n + 3.0 * n + 6.0) / 36.0
}

/// Alternative closed form `i²(N+1)/(24γ_N) · [6N² - 12Ni + 6i² + 4N]`.
/// Kept for comparison; it does not reproduce the Schur complement.
pub fn membrane_explained_variance_gamma_form(i: usize, n: usize) -> f64 {
    let (i, nf) = (i as f64, n as f64);
    i * i * (nf + 1.0) / (24.0 * membrane_gamma_n(n))
        * (6.0 * nf * nf - 12.0 * nf * i + 6.0 * i * i + 4.0 * nf)
}

/// One row of the phase-scan table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeRow {
    pub n: usize,
    pub kappa: f64,
    pub beta: f64,
    /// `Var(W_{N-1})`
    pub var: f64,
    pub var_over_n: f64,
    pub var_beta_over_n3: f64,
}

pub fn regime_table(n_list: &[usize], kappa_rule: impl Fn(f64) -> f64) -> Result<Vec<RegimeRow>> {
    if n_list.is_empty() {
        return invalid("empty N list");
    }
    n_list
        .iter()
        .map(|&n| {
            let p = RwParams::from_kappa(n, kappa_rule(n as f64))?;
            let var = var_w(n - 1, &p);
            let nf = n as f64;
            Ok(RegimeRow {
                n,
                kappa: p.kappa,
                beta: p.beta,
                var,
                var_over_n: var / nf,
                var_beta_over_n3: var * p.beta / nf.powi(3),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn gamma_sigma_values() {
        assert_eq!(gamma_sigma(0.0), (0.0, 2.0));
        let (g, _) = gamma_sigma(2.0);
        let exact = ((3.0 - 5f64.sqrt()) / (3.0 + 5f64.sqrt())).sqrt();
        assert_relative_eq!(g, exact, max_relative = 1e-15);
        assert_relative_eq!(g, 0.381966011250105, max_relative = 1e-14);
        // 40-digit reference values at β = 16
        let (g, s2) = gamma_sigma(16.0);
        assert_relative_eq!(g, 0.7034648345913732, max_relative = 1e-15);
        assert_relative_eq!(s2, 0.1758662086478433, max_relative = 1e-15);
    }

    #[test]
    fn params_limits_and_zeta() {
        let p = RwParams::from_beta(10, 1e12).unwrap();
        assert!(p.gamma < 1.0 && p.gamma > 0.999998);
        assert!(p.sigma2 < 1e-11);
        assert_relative_eq!(p.one_minus_gamma, 1.0 - p.gamma, max_relative = 1e-6);
        let p = RwParams::from_beta(10, 3.0).unwrap();
        assert_relative_eq!(1.0 / (1.0 + p.zeta), p.gamma, max_relative = 1e-15);
        assert_relative_eq!(p.eps_tilde_sd(), 2f64.sqrt(), max_relative = 1e-15);
        assert_eq!(RwParams::from_kappa(10, 5.0).unwrap().beta, 5.0);
        assert!(RwParams::from_kappa(10, -1.0).is_err());
    }

    #[test]
    fn variance_closed_form_special_values() {
        let p0 = RwParams::from_kappa(100, 0.0).unwrap();
        for n in [1, 7, 100] {
            assert_eq!(var_w(n, &p0), 2.0 * n as f64);
        }
        for beta in [0.3, 16.0, 1e4] {
            let p = RwParams::from_beta(100, beta).unwrap();
            assert_relative_eq!(var_w(1, &p), p.sigma2, max_relative = 1e-10);
        }
    }

    #[test]
    fn variance_agrees_with_power_sums() {
        for gamma in [0.0, 0.1, 0.9, 0.99] {
            // β with γ(β) = gamma: β = 2γ/(1-γ)²
            let beta = 2.0 * gamma / (1.0 - gamma) / (1.0 - gamma);
            let p = RwParams::from_beta(60, beta).unwrap();
            assert_relative_eq!(p.gamma, gamma, max_relative = 1e-12, epsilon = 1e-300);
            for n in 1..=50 {
                let a = var_w(n, &p);
                let b = var_w_decomposed(n, &p);
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300) * 10.0, "{gamma} {n} {a} {b}");
            }
        }
    }

    #[test]
    fn membrane_asymptote_for_very_stiff_walks() {
        // (1-γ) m << 1: Var(W_m) ≈ (2/(3β)) m(m+1)(2m+1)
        let n = 200;
        let p = RwParams::from_kappa(n, 1e12).unwrap();
        let m = (n - 1) as f64;
        let approx = 2.0 / (3.0 * p.beta) * m * (m + 1.0) * (2.0 * m + 1.0);
        assert_relative_eq!(var_w(n - 1, &p), approx, max_relative = 2e-3);
    }

    #[test]
    fn walk_covariance_diagonal_is_the_closed_form() {
        let p = RwParams::from_beta(30, 7.0).unwrap();
        let c = walk_covariance(&p, 30);
        for n in 1..=30 {
            assert_relative_eq!(c[(n - 1, n - 1)], var_w(n, &p), max_relative = 1e-12);
        }
    }

    #[test]
    fn simulation_is_deterministic_and_kappa_zero_is_a_plain_walk() {
        let p = RwParams::from_kappa(50, 0.0).unwrap();
        let a = simulate_w(&p, 42, 3).unwrap();
        let b = simulate_w(&p, 42, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.paths[0], a.paths[1]);
        assert!(simulate_w(&p, 1, 0).is_err());
        // W = S when γ = 0: increments are the ε̃ themselves, var 2
        let many = simulate_w(&p, 5, 4000).unwrap();
        let inc: Vec<f64> = many.paths.iter().map(|w| w[1] - w[0]).collect();
        let var = inc.iter().map(|x| x * x).sum::<f64>() / inc.len() as f64;
        assert!((var - 2.0).abs() < 0.15, "{var}");
    }

    #[test]
    fn simulated_variance_matches_closed_form() {
        let p = RwParams::from_kappa(60, 1.0).unwrap();
        let t = simulate_w(&p, 9, 20_000).unwrap();
        for n in [10, 60] {
            let xs: Vec<f64> = t.paths.iter().map(|w| w[n - 1]).collect();
            let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
            let exact = var_w(n, &p);
            let se = exact * (2.0 / xs.len() as f64).sqrt();
            assert!((var - exact).abs() < 5.0 * se, "{n}: {var} vs {exact}");
        }
    }

    #[test]
    fn bridge_coefficients_at_the_conditioning_points() {
        for gamma in [0.0, 0.3, 0.8] {
            let n = 9;
            let (a, b) = bridge_coefficients(n, n, gamma, Precision::Double).unwrap();
            assert!((a - 1.0).abs() < 1e-10 && b.abs() < 1e-10);
            let (a, b) = bridge_coefficients(n + 1, n, gamma, Precision::Double).unwrap();
            assert!(a.abs() < 1e-10 && (b - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn bridge_coefficients_are_the_regression_coefficients() {
        for (n, beta) in [(6, 0.0), (8, 1.0), (12, 4.0), (20, 50.0)] {
            let p = RwParams::from_beta(n, beta).unwrap();
            let cg = conditional_covariance(n, BridgeTarget::Walk(p)).unwrap();
            let reg = cg.regression();
            for k in 1..n {
                for prec in [Precision::Double, Precision::Extended] {
                    let (r1, r2) = bridge_coefficients(k, n, p.gamma, prec).unwrap();
                    assert!((r1 - reg[(k - 1, 0)]).abs() < 1e-9, "{n} {k} {r1} {}", reg[(k - 1, 0)]);
                    assert!((r2 - reg[(k - 1, 1)]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn bridge_is_uncorrelated_with_the_conditioning_values() {
        let n = 10;
        let p = RwParams::from_beta(n, 2.5).unwrap();
        let c = walk_covariance(&p, n + 1);
        for k in 1..n {
            let (r1, r2) = bridge_coefficients(k, n, p.gamma, Precision::Double).unwrap();
            for t in [n, n + 1] {
                let cov = c[(k - 1, t - 1)] - r1 * c[(n - 1, t - 1)] - r2 * c[(n, t - 1)];
                assert!(cov.abs() < 1e-9, "{k} {t} {cov}");
            }
        }
    }

    #[test]
    fn extended_precision_survives_stiff_walks() {
        // double precision loses the bridge coefficients when γ is close to one
        let n = 10_000;
        let p = RwParams::from_kappa(n, 2e8).unwrap();
        let (a, b) = bridge_coefficients(n / 2, n, p.gamma, Precision::Extended).unwrap();
        assert!(a.is_finite() && b.is_finite());
        // symmetry of the two-point conditioning: r₁ + r₂ is the coefficient on
        // a common shift, which must be close to one for a smooth bridge
        assert!((0.0..=1.5).contains(&(a + b)), "{a} {b}");
    }

    #[test]
    fn degenerate_denominator_is_reported() {
        // γ so close to one that r(k) underflows the threshold
        let gamma = 1.0 - 1e-9;
        assert!(matches!(
            bridge_coefficients(2, 4, gamma, Precision::Double),
            Err(Error::DegenerateDenominator { .. })
        ));
    }

    #[test]
    fn membrane_closed_form_and_bound() {
        // 6x6 Schur complement at N = 4: diagonal (3/5, 17/10, 27/10) explained
        let cg = conditional_covariance(4, BridgeTarget::MembraneIncrement).unwrap();
        assert_relative_eq!(cg.conditional[(0, 0)], 0.4, max_relative = 1e-12);
        assert_relative_eq!(cg.d.determinant(), membrane_det(4), max_relative = 1e-12);
        assert_eq!(membrane_det(4), 50.0);
        for n in 4..=30 {
            let cg = conditional_covariance(n, BridgeTarget::MembraneIncrement).unwrap();
            let ex = cg.explained_diagonal();
            for i in 1..n {
                assert!((ex[i - 1] - membrane_explained_variance(i, n)).abs() < 1e-10);
                assert!(cg.conditional[(i - 1, i - 1)] < i as f64);
            }
        }
    }

    #[test]
    fn gamma_form_differs_from_the_schur_complement() {
        assert_relative_eq!(membrane_gamma_n(4), 14600.0 / 36.0, max_relative = 1e-15);
        let v = 1.0 - membrane_explained_variance_gamma_form(1, 4);
        assert_relative_eq!(v, 0.964041095890411, max_relative = 1e-12);
        assert!((membrane_explained_variance_gamma_form(1, 4) - 0.6).abs() > 0.5);
    }

    #[test]
    fn conditioning_reduces_variance_and_stays_psd() {
        for target in [
            BridgeTarget::Walk(RwParams::from_beta(12, 3.0).unwrap()),
            BridgeTarget::MembraneIncrement,
            BridgeTarget::MembraneHeight,
        ] {
            let cg = conditional_covariance(12, target).unwrap();
            for i in 0..11 {
                assert!(cg.conditional[(i, i)] <= cg.a[(i, i)]);
            }
            let eig = nalgebra::SymmetricEigen::new(cg.conditional.clone()).eigenvalues;
            assert!(eig.min() > -1e-9 * eig.max());
        }
    }

    #[test]
    fn regime_table_columns() {
        let rows = regime_table(&[100, 1000, 10_000], |_| 0.0).unwrap();
        for r in &rows {
            assert_relative_eq!(r.var_over_n, 2.0 * (r.n - 1) as f64 / r.n as f64, max_relative = 1e-14);
        }
        let rows = regime_table(&[100, 1000, 10_000], |n| n * n).unwrap();
        for r in &rows {
            assert!(r.var_over_n > 0.1 && r.var_over_n < 2.0);
            assert!(r.var_beta_over_n3 > 0.1 && r.var_beta_over_n3 < 2.0);
        }
        assert!(regime_table(&[], |n| n).is_err());
    }

    proptest! {
        #[test]
        fn double_double_arithmetic(a in -1e3f64..1e3, b in 0.5f64..1e3) {
            let x = DoubleDouble::from_f64(a);
            let y = DoubleDouble::from_f64(b);
            let q = x / y;
            let back = q * y - x;
            prop_assert!(back.to_f64().abs() <= 1e-28 * a.abs().max(1.0));
            let s = (x + y) - y - x;
            prop_assert!(s.to_f64().abs() <= 1e-28 * a.abs().max(b));
        }

        #[test]
        fn variance_is_monotone_in_n_and_decreasing_in_beta(beta in 0.0f64..1e4, n in 2usize..200) {
            let p = RwParams::from_beta(200, beta).unwrap();
            prop_assert!(var_w(n, &p) > var_w(n - 1, &p));
            let q = RwParams::from_beta(200, beta * 2.0 + 1.0).unwrap();
            prop_assert!(var_w(n, &q) < var_w(n, &p));
        }
    }
}
