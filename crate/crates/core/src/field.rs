//! Exact samples of the Gibbs field, their continuous interpolation and their
//! pairing with test functions.
//!
//! The field on `Λ_N` has precision `-Δ + κΔ²` (normalized Laplacian), so its
//! covariance is the Green's function of [`crate::dirichlet`]. Samples are
//! `L⁻ᵀ ξ` with `A = L Lᵀ` and `ξ` standard normal.

use std::fmt;
use std::io;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dirichlet::{assemble, model_spec, Factorization, GreenFunction};
use crate::error::{invalid, Error, Result};
use crate::grid::{Domain, GridGeometry};
use crate::operators::{GridFunction, MixedOperatorSpec, Normalization, OperatorKind};

/// Scaling regime of `κ(N)` relative to `2dN²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `κ ≪ N²`: gradient term dominates, Gaussian free field limit.
    Sub,
    /// `κ ∼ 2dN²`: both terms survive.
    Critical,
    /// `κ ≫ N²`: Laplacian term dominates, membrane limit.
    Super,
}

impl Regime {
    /// Classification by `r = κ / (2dN²)`: `r < 0.1` sub, `r > 10` super.
    pub fn classify(dim: usize, n: usize, kappa: f64) -> Regime {
        let r = kappa / (2.0 * dim as f64 * (n as f64).powi(2));
        if r < 0.1 {
            Regime::Sub
        } else if r > 10.0 {
            Regime::Super
        } else {
            Regime::Critical
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Regime::Sub => "sub",
            Regime::Critical => "critical",
            Regime::Super => "super",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sub" => Ok(Regime::Sub),
            "critical" => Ok(Regime::Critical),
            "super" => Ok(Regime::Super),
            other => invalid(format!("unknown regime '{other}'")),
        }
    }
}

/// `(d, N, κ)` with the regime used for scaling.
///
/// The Hamiltonian coefficients `κ₁ = 1/(4d)` and `κ₂ = κ/2` are implied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub dim: usize,
    pub n: usize,
    pub kappa: f64,
    pub regime: Regime,
}

impl ModelParams {
    pub fn new(dim: usize, n: usize, kappa: f64) -> Result<Self> {
        if dim == 0 || n == 0 {
            return invalid("d and N must be positive");
        }
        if !kappa.is_finite() || kappa < 0.0 {
            return invalid(format!("kappa must be finite and nonnegative, got {kappa}"));
        }
        Ok(Self {
            dim,
            n,
            kappa,
            regime: Regime::classify(dim, n, kappa),
        })
    }

    pub fn with_regime(mut self, regime: Regime) -> Self {
        self.regime = regime;
        self
    }

    pub fn kappa1(&self) -> f64 {
        1.0 / (4.0 * self.dim as f64)
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa / 2.0
    }

    /// Prefactor of `Σ_x φ_{Nx} f(x)` in `(Ψ_N, f)`:
    /// `(2d)^{-1} √κ N^{-(d+4)/2}` (super, critical) or `(2d)^{-1/2} N^{-(d+2)/2}` (sub).
    pub fn pairing_scale(&self) -> f64 {
        let (d, n) = (self.dim as f64, self.n as f64);
        match self.regime {
            Regime::Super | Regime::Critical => self.kappa.sqrt() / (2.0 * d) * n.powf(-(d + 4.0) / 2.0),
            Regime::Sub => (2.0 * d).powf(-0.5) * n.powf(-(d + 2.0) / 2.0),
        }
    }

    /// `c_N(d) = N^d ·` [`Self::pairing_scale`], the prefactor of the interpolation.
    pub fn interpolation_scale(&self) -> f64 {
        (self.n as f64).powi(self.dim as i32) * self.pairing_scale()
    }

    fn check_geometry(&self, g: &GridGeometry) -> Result<()> {
        if g.dim() != self.dim || g.n() != self.n {
            return invalid(format!(
                "geometry (d={}, N={}) does not match parameters (d={}, N={})",
                g.dim(),
                g.n(),
                self.dim,
                self.n
            ));
        }
        Ok(())
    }
}

/// Independent exact samples of the field, as values on the unknowns.
#[derive(Debug, Clone)]
pub struct FieldEnsemble {
    pub params: ModelParams,
    pub geometry: Arc<GridGeometry>,
    pub seed: u64,
    samples: Vec<Vec<f64>>,
}

/// Draws `n_samples` exact samples. Sample `i` uses ChaCha stream `i` of
/// `seed`, one normal per unknown in order, so results do not depend on
/// the number of threads.
pub fn sample(
    params: ModelParams,
    geometry: Arc<GridGeometry>,
    n_samples: usize,
    seed: u64,
) -> Result<FieldEnsemble> {
    params.check_geometry(&geometry)?;
    let op = assemble(model_spec(params.kappa)?, geometry, Normalization::Normalized)?;
    sample_with(&Factorization::new(op)?, params, n_samples, seed)
}

/// As [`sample`], reusing a factorization of the model precision.
pub fn sample_with(
    factor: &Factorization,
    params: ModelParams,
    n_samples: usize,
    seed: u64,
) -> Result<FieldEnsemble> {
    if n_samples == 0 {
        return invalid("at least one sample is required");
    }
    let geometry = factor.operator().geometry().clone();
    params.check_geometry(&geometry)?;
    let n = factor.n();
    let samples = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            factor.correlate(&mut x);
            x
        })
        .collect();
    Ok(FieldEnsemble {
        params,
        geometry,
        seed,
        samples,
    })
}

impl FieldEnsemble {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Values of sample `i` on the unknowns.
    pub fn values(&self, i: usize) -> &[f64] {
        &self.samples[i]
    }

    /// Sample `i` as a grid function (zero off `Λ_N`).
    pub fn sample(&self, i: usize) -> GridFunction {
        GridFunction::from_unknowns(&self.geometry, &self.samples[i])
    }

    /// Empirical second-moment matrix `(1/M) Σ φ φᵀ` (the mean is known to be zero).
    pub fn empirical_covariance(&self) -> DMatrix<f64> {
        let n = self.geometry.num_unknowns();
        let chunk = 1024;
        let sum = self
            .samples
            .par_chunks(chunk)
            .map(|block| {
                let mut acc = DMatrix::<f64>::zeros(n, n);
                for s in block {
                    let v = nalgebra::DVector::from_column_slice(s);
                    acc.ger(1.0, &v, &v, 1.0);
                }
                acc
            })
            .reduce(|| DMatrix::zeros(n, n), |a, b| a + b);
        sum / self.len() as f64
    }

    /// CSV `sample_id,x_index,value`.
    pub fn write_csv<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "sample_id,x_index,value")?;
        for (s, vals) in self.samples.iter().enumerate() {
            for (i, v) in vals.iter().enumerate() {
                writeln!(out, "{s},{i},{v:.16e}")?;
            }
        }
        Ok(())
    }
}

/// Continuous interpolation `Ψ_N(t)` of one sample.
///
/// `d = 1` is linear interpolation; in `d = 2, 3` the cube containing `Nt` is
/// split into simplices by the order of the fractional parts `{Nt_i}` and the
/// value is the barycentric combination along that path.
#[derive(Debug, Clone)]
pub struct InterpolatedField {
    values: GridFunction,
    domain: Domain,
    n: usize,
    scale: f64,
}

pub fn interpolate(
    sample: &GridFunction,
    domain: Domain,
    n: usize,
    scale: f64,
) -> Result<InterpolatedField> {
    if !(1..=3).contains(&domain.dim()) || sample.dim() != domain.dim() {
        return invalid("interpolation is defined for d ∈ {1, 2, 3}");
    }
    Ok(InterpolatedField {
        values: sample.clone(),
        domain,
        n,
        scale,
    })
}

impl InterpolatedField {
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn eval(&self, t: &[f64]) -> Result<f64> {
        let (base, frac) = self.locate(t)?;
        let mut order: Vec<usize> = (0..t.len()).collect();
        order.sort_by(|&a, &b| frac[b].total_cmp(&frac[a]).then(a.cmp(&b)));
        Ok(self.walk(&base, &frac, &order))
    }

    /// Evaluation along a prescribed axis order; agrees with [`Self::eval`]
    /// whenever `order` sorts the fractional parts in decreasing order
    /// (ties may be broken either way).
    pub fn eval_ordered(&self, t: &[f64], order: &[usize]) -> Result<f64> {
        let (base, frac) = self.locate(t)?;
        Ok(self.walk(&base, &frac, order))
    }

    fn locate(&self, t: &[f64]) -> Result<(Vec<i64>, Vec<f64>)> {
        if t.len() != self.domain.dim() || !self.domain.contains(t) {
            return Err(Error::OutOfDomain(t.to_vec()));
        }
        let n = self.n as f64;
        let mut base = Vec::with_capacity(t.len());
        let mut frac = Vec::with_capacity(t.len());
        for &ti in t {
            let s = ti * n;
            let k = s.floor();
            base.push(k as i64);
            frac.push(s - k);
        }
        Ok((base, frac))
    }

    fn walk(&self, base: &[i64], frac: &[f64], order: &[usize]) -> f64 {
        let mut k = base.to_vec();
        let mut prev = self.values.get(&k);
        let mut acc = prev;
        for &axis in order {
            k[axis] += 1;
            let next = self.values.get(&k);
            acc += frac[axis] * (next - prev);
            prev = next;
        }
        self.scale * acc
    }
}

type TestFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Limits of `Var[(Ψ_N, f)]`, when known in closed form.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KnownLimits {
    pub sub: Option<f64>,
    pub critical: Option<f64>,
    pub super_: Option<f64>,
}

impl KnownLimits {
    pub fn get(&self, regime: Regime) -> Option<f64> {
        match regime {
            Regime::Sub => self.sub,
            Regime::Critical => self.critical,
            Regime::Super => self.super_,
        }
    }
}

/// Smooth test function with metadata.
#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    pub dim: usize,
    /// Whether `f` is an eigenfunction of the continuum Dirichlet Laplacian.
    pub laplace_eigenfunction: bool,
    pub limits: KnownLimits,
    f: TestFn,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish()
    }
}

/// `‖f‖²_{-1,-Δ}` for `f = √2 sin(πx)` on `(0, 1)`.
pub const SINE_SUB_LIMIT: f64 = 1.0 / (std::f64::consts::PI * std::f64::consts::PI);

/// `‖f‖²_{-2,Δ²}` for `f = √2 sin(πx)`: `∫uf` with `u'''' = f`, `u = u' = 0`
/// at both ends, `u = √2(sin(πx)/π⁴ + x(x-1)/π³)`.
pub const SINE_SUPER_LIMIT: f64 = 1.0 / 97.409_091_034_002_43 - 8.0 / 961.389_193_575_304_4;

impl TestFunction {
    pub fn new(name: impl Into<String>, dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            dim,
            laplace_eigenfunction: false,
            limits: KnownLimits::default(),
            f: Arc::new(f),
        }
    }

    /// `Π_i √2 sin(πx_i)`, unit `L²` norm.
    pub fn sine_mode(dim: usize) -> Self {
        let pi = std::f64::consts::PI;
        let mut t = Self::new("sin", dim, move |x: &[f64]| {
            x.iter().map(|v| 2f64.sqrt() * (pi * v).sin()).product()
        });
        t.laplace_eigenfunction = true;
        if dim == 1 {
            t.limits.sub = Some(SINE_SUB_LIMIT);
            t.limits.super_ = Some(SINE_SUPER_LIMIT);
        }
        t
    }

    pub fn zero(dim: usize) -> Self {
        Self::new("zero", dim, |_| 0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    /// `f(x)` at the unknowns of `g`.
    pub fn on_unknowns(&self, g: &GridGeometry) -> Vec<f64> {
        (0..g.num_unknowns())
            .map(|i| self.eval(&g.unknown_position(i)))
            .collect()
    }
}

/// `(Ψ_N, f)` for every sample.
pub fn pair(ensemble: &FieldEnsemble, f: &TestFunction) -> Vec<f64> {
    let w = f.on_unknowns(&ensemble.geometry);
    let s = ensemble.params.pairing_scale();
    ensemble
        .samples
        .iter()
        .map(|phi| s * phi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// CSV `sample_id,pairing`.
pub fn write_pairings_csv<W: io::Write>(pairings: &[f64], mut out: W) -> io::Result<()> {
    writeln!(out, "sample_id,pairing")?;
    for (i, p) in pairings.iter().enumerate() {
        writeln!(out, "{i},{p:.16e}")?;
    }
    Ok(())
}

/// Rescaled operator whose inverse gives the pairing variance, with the
/// prefactor `c` such that `Var[(Ψ_N, f)] = c N^{-d} Σ_x H_N(x) f(x)` for
/// `L H_N = f`:
///
/// * super: `-(2dN²/κ) Δ_h + Δ_h²`, `c = 1`,
/// * critical: `-Δ_h + (κ/2dN²) Δ_h²`, `c = κ/(2dN²)`,
/// * sub: `-Δ_h + (κ/2dN²) Δ_h²`, `c = 1`,
///
/// with `h = 1/N` and the unnormalized `Δ_h`.
pub fn rescaled_operator(params: &ModelParams) -> Result<(MixedOperatorSpec, f64)> {
    let (d, n) = (params.dim as f64, params.n as f64);
    let h = 1.0 / n;
    let ratio = params.kappa / (2.0 * d * n * n);
    match params.regime {
        Regime::Super => {
            if params.kappa <= 0.0 {
                return invalid("the super-critical scaling needs kappa > 0");
            }
            Ok((MixedOperatorSpec::new(OperatorKind::Bilaplacian, 1.0 / ratio, h)?, 1.0))
        }
        Regime::Critical => Ok((MixedOperatorSpec::new(OperatorKind::Mixed, ratio, h)?, ratio)),
        Regime::Sub => Ok((MixedOperatorSpec::new(OperatorKind::NegLaplacian, ratio, h)?, 1.0)),
    }
}

/// Exact `Var[(Ψ_N, f)]` through the rescaled Dirichlet problem.
pub fn exact_pairing_variance(
    params: &ModelParams,
    geometry: Arc<GridGeometry>,
    f: &TestFunction,
) -> Result<f64> {
    params.check_geometry(&geometry)?;
    let (spec, c) = rescaled_operator(params)?;
    let w = f.on_unknowns(&geometry);
    let op = assemble(spec, geometry, Normalization::Unnormalized)?;
    let hn = Factorization::new(op)?.solve(&w);
    let s: f64 = hn.iter().zip(&w).map(|(a, b)| a * b).sum();
    Ok(c * s / (params.n as f64).powi(params.dim as i32))
}

/// `Var[(Ψ_N, f)] = s² Σ_{x,y} f(x) G(x,y) f(y)` directly from the lattice
/// Green's function.
pub fn green_pairing_variance(params: &ModelParams, green: &GreenFunction, f: &TestFunction) -> Result<f64> {
    params.check_geometry(green.geometry())?;
    let w = f.on_unknowns(green.geometry());
    let s = params.pairing_scale();
    Ok(s * s * green.bilinear(&w, &w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirichlet::green_function;
    use crate::grid::{build_grid, Classification};
    use approx::assert_relative_eq;

    fn chain(n: usize) -> Arc<GridGeometry> {
        Arc::new(GridGeometry::new(Domain::unit_box(1).unwrap(), n, Classification::Chain).unwrap())
    }

    #[test]
    fn regime_classification_and_scales() {
        assert_eq!(Regime::classify(1, 100, 10.0), Regime::Sub);
        assert_eq!(Regime::classify(1, 100, 2e4), Regime::Critical);
        assert_eq!(Regime::classify(1, 100, 1e6), Regime::Super);
        let p = ModelParams::new(2, 10, 3.0).unwrap();
        assert_eq!(p.kappa1(), 0.125);
        assert_eq!(p.kappa2(), 1.5);
        let p = ModelParams::new(1, 16, 0.0).unwrap();
        assert_relative_eq!(p.interpolation_scale(), (2.0f64 * 16.0).powf(-0.5), max_relative = 1e-15);
        let p = ModelParams::new(1, 16, 16f64.powi(3)).unwrap();
        assert_relative_eq!(p.interpolation_scale(), 0.5 * 64.0 * 16f64.powf(-1.5), max_relative = 1e-15);
        assert_eq!("critical".parse::<Regime>().unwrap(), Regime::Critical);
    }

    #[test]
    fn sine_super_limit_constant() {
        let pi = std::f64::consts::PI;
        assert_relative_eq!(SINE_SUPER_LIMIT, 1.0 / pi.powi(4) - 8.0 / pi.powi(6), max_relative = 1e-14);
        // ∫ u f with u = √2(sin πx/π⁴ + x(x-1)/π³), by midpoint quadrature
        let m = 200_000;
        let s: f64 = (0..m)
            .map(|i| {
                let x = (i as f64 + 0.5) / m as f64;
                let u = 2f64.sqrt() * ((pi * x).sin() / pi.powi(4) + x * (x - 1.0) / pi.powi(3));
                u * 2f64.sqrt() * (pi * x).sin()
            })
            .sum::<f64>()
            / m as f64;
        assert_relative_eq!(s, SINE_SUPER_LIMIT, max_relative = 1e-8);
    }

    #[test]
    fn samples_vanish_off_the_interior_and_are_deterministic() {
        let g = Arc::new(build_grid(Domain::unit_box(2).unwrap(), 8).unwrap());
        let p = ModelParams::new(2, 8, 1.0).unwrap();
        let a = sample(p, g.clone(), 4, 99).unwrap();
        let b = sample(p, g.clone(), 4, 99).unwrap();
        assert_eq!(a.samples, b.samples);
        let s = a.sample(0);
        for (k, v) in s.iter() {
            assert!(g.class_of(&k).is_interior(), "{k:?} {v}");
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| sample(p, g.clone(), 4, 99).unwrap());
        assert_eq!(a.samples, c.samples);
        assert!(sample(p, g, 0, 1).is_err());
    }

    #[test]
    fn gff_chain_variance_at_the_midpoint() {
        let p = ModelParams::new(1, 4, 0.0).unwrap();
        let e = sample(p, chain(4), 100_000, 5).unwrap();
        let v = e.samples.iter().map(|s| s[1] * s[1]).sum::<f64>() / e.len() as f64;
        assert!((v - 2.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn interpolation_at_nodes_midpoints_and_ties() {
        let g = Arc::new(build_grid(Domain::unit_box(2).unwrap(), 10).unwrap());
        let p = ModelParams::new(2, 10, 1.0).unwrap();
        let e = sample(p, g.clone(), 1, 3).unwrap();
        let s = e.sample(0);
        let psi = interpolate(&s, Domain::unit_box(2).unwrap(), 10, 0.7).unwrap();
        for (k, v) in s.iter() {
            let t: Vec<f64> = k.iter().map(|c| *c as f64 / 10.0).collect();
            assert_relative_eq!(psi.eval(&t).unwrap(), 0.7 * v, max_relative = 1e-12);
        }
        for i in 0..100 {
            let x = (i as f64 + 0.5) / 100.0 * 0.999;
            let t = [x, x - (x * 10.0).floor() / 10.0 + 0.3];
            let t = [t[0], (t[1] * 10.0).floor() / 10.0 + (x * 10.0).fract() / 10.0];
            if !Domain::unit_box(2).unwrap().contains(&t) {
                continue;
            }
            let a = psi.eval_ordered(&t, &[0, 1]).unwrap();
            let b = psi.eval_ordered(&t, &[1, 0]).unwrap();
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        assert!(matches!(psi.eval(&[1.2, 0.5]), Err(Error::OutOfDomain(_))));

        let g1 = chain(8);
        let e1 = sample(ModelParams::new(1, 8, 0.0).unwrap(), g1, 1, 4).unwrap();
        let s1 = e1.sample(0);
        let psi1 = interpolate(&s1, Domain::unit_box(1).unwrap(), 8, 2.0).unwrap();
        let mid = psi1.eval(&[(3.0 + 0.5) / 8.0]).unwrap();
        assert_relative_eq!(mid, (s1.get(&[3]) + s1.get(&[4])), max_relative = 1e-12);
    }

    #[test]
    fn three_dimensional_interpolation_is_exact_on_affine_data() {
        let s = GridFunction::from_lattice_fn(0.25, &[-1, -1, -1], &[5, 5, 5], |k| {
            1.0 + 2.0 * k[0] as f64 - k[1] as f64 + 0.5 * k[2] as f64
        });
        let psi = interpolate(&s, Domain::unit_box(3).unwrap(), 4, 1.0).unwrap();
        for t in [[0.3, 0.71, 0.05], [0.99, 0.5, 0.5], [0.125, 0.125, 0.6]] {
            let exact = 1.0 + 4.0 * (2.0 * t[0] - t[1] + 0.5 * t[2]);
            assert_relative_eq!(psi.eval(&t).unwrap(), exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_test_function_pairs_to_zero() {
        let p = ModelParams::new(1, 16, 2.0).unwrap();
        let e = sample(p, chain(16), 5, 1).unwrap();
        assert!(pair(&e, &TestFunction::zero(1)).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn exact_variance_routes_agree() {
        for (n, kappa, regime) in [
            (32usize, 32f64.powi(3), Regime::Super),
            (32, 2.0 * 32.0 * 32.0, Regime::Critical),
            (32, 32f64.sqrt(), Regime::Sub),
        ] {
            let g = chain(n);
            let p = ModelParams::new(1, n, kappa).unwrap().with_regime(regime);
            let f = TestFunction::sine_mode(1);
            let a = exact_pairing_variance(&p, g.clone(), &f).unwrap();
            let b = green_pairing_variance(&p, &green_function(g, kappa).unwrap(), &f).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
        let g = Arc::new(build_grid(Domain::unit_box(2).unwrap(), 12).unwrap());
        let p = ModelParams::new(2, 12, 5000.0).unwrap();
        let f = TestFunction::sine_mode(2);
        let a = exact_pairing_variance(&p, g.clone(), &f).unwrap();
        let b = green_pairing_variance(&p, &green_function(g, 5000.0).unwrap(), &f).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-9);
    }

    #[test]
    fn monte_carlo_pairing_variance_matches_exact() {
        let n = 32;
        let p = ModelParams::new(1, n, (n as f64).powi(3)).unwrap();
        let f = TestFunction::sine_mode(1);
        let exact = exact_pairing_variance(&p, chain(n), &f).unwrap();
        let e = sample(p, chain(n), 20_000, 17).unwrap();
        let xs = pair(&e, &f);
        let v = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        let se = exact * (2.0 / xs.len() as f64).sqrt();
        assert!((v - exact).abs() < 5.0 * se, "{v} {exact}");
    }

    #[test]
    fn sub_regime_approaches_the_free_field_limit() {
        let n = 256;
        let p = ModelParams::new(1, n, 0.0).unwrap();
        let v = exact_pairing_variance(&p, chain(n), &TestFunction::sine_mode(1)).unwrap();
        assert!((v / SINE_SUB_LIMIT - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn membrane_increment_variance_bound() {
        // E[(φ_{x+1} - φ_x)²] <= C κ⁻¹ N in the super regime, κ = N³
        let ratios: Vec<f64> = [64usize, 128, 256]
            .iter()
            .map(|&n| {
                let kappa = (n as f64).powi(3);
                let gf = green_function(chain(n), kappa).unwrap();
                let max = (0..gf.n() - 1)
                    .map(|i| gf.get(i, i) + gf.get(i + 1, i + 1) - 2.0 * gf.get(i, i + 1))
                    .fold(0.0, f64::max);
                max * kappa / n as f64
            })
            .collect();
        assert!(ratios.iter().all(|r| *r <= 1.1 * ratios[0]), "{ratios:?}");
    }

    #[test]
    fn csv_exports() {
        let e = sample(ModelParams::new(1, 6, 1.0).unwrap(), chain(6), 2, 0).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 5);
        let mut buf = Vec::new();
        write_pairings_csv(&pair(&e, &TestFunction::sine_mode(1)), &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("sample_id,pairing\n0,"));
    }
}
