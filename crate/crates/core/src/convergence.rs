//! Manufactured-solution check of the finite-difference error bounds.
//!
//! For each operator kind the continuum problem `L u = f` (with `L` one of
//! `Δ²`, `-Δ + Δ²`, `-Δ`) is discretized by `L_h` with a mesh-dependent
//! coefficient `ρ(h)`, solved on `R_h`, and the squared error
//! `‖R_h e_h‖²_{h,grid}` is compared with the bound expression:
//!
//! * bilaplacian: `M₅²h² + M₂²ρ² + M₂²h`,
//! * mixed: `M₅²h² + M₄²(ρ-1)² + M₄²h⁴ + M₂²h`,
//! * neg-laplacian: `M₄²δ⁴ + M₂²ρδ + M₁²δ` with `δ = max(h, √ρ)`.

use std::f64::consts::PI;
use std::fmt;
use std::io;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::dirichlet::{assemble, Factorization};
use crate::error::{invalid, Error, Result};
use crate::grid::{Classification, Domain, GridGeometry};
use crate::operators::{multi_indices, MixedOperatorSpec, Normalization, OperatorKind};

/// One-dimensional factor `g` of a product solution `u(x) = Π g(x_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// `sin²(πx)`: `g = g' = 0` at both ends.
    SinSquared,
    /// `sin(πx)`: `g = 0` at both ends.
    Sine,
    /// `x(1 - x)`.
    Quadratic,
}

impl Profile {
    /// `g^{(k)}(x)`.
    pub fn deriv(self, k: usize, x: f64) -> f64 {
        match self {
            Profile::SinSquared => {
                if k == 0 {
                    (PI * x).sin().powi(2)
                } else {
                    -(2.0 * PI).powi(k as i32) / 2.0 * (2.0 * PI * x + k as f64 * PI / 2.0).cos()
                }
            }
            Profile::Sine => PI.powi(k as i32) * (PI * x + k as f64 * PI / 2.0).sin(),
            Profile::Quadratic => match k {
                0 => x * (1.0 - x),
                1 => 1.0 - 2.0 * x,
                2 => -2.0,
                _ => 0.0,
            },
        }
    }

    /// `sup_{[0,1]} |g^{(k)}|` over 10⁴ equispaced points.
    pub fn sup(self, k: usize) -> f64 {
        const SAMPLES: usize = 10_000;
        (0..=SAMPLES)
            .map(|i| self.deriv(k, i as f64 / SAMPLES as f64).abs())
            .fold(0.0, f64::max)
    }
}

/// `ρ(h) = offset + coeff·h^power`.
///
/// Parses `0.5`, `h`, `h^2`, `sqrt(h)`, `2*h^1.5`, `1+h` and similar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoRule {
    pub offset: f64,
    pub coeff: f64,
    pub power: f64,
}

impl RhoRule {
    pub fn constant(c: f64) -> Self {
        Self {
            offset: c,
            coeff: 0.0,
            power: 0.0,
        }
    }

    pub fn power(coeff: f64, power: f64) -> Self {
        Self {
            offset: 0.0,
            coeff,
            power,
        }
    }

    pub fn eval(&self, h: f64) -> f64 {
        if self.coeff == 0.0 {
            self.offset
        } else {
            self.offset + self.coeff * h.powf(self.power)
        }
    }

    /// `ρ₂ = h`, `ρ₃ = 1 + h`, `ρ₁ = h²`.
    pub fn default_for(kind: OperatorKind) -> Self {
        match kind {
            OperatorKind::Bilaplacian => Self::power(1.0, 1.0),
            OperatorKind::Mixed => Self {
                offset: 1.0,
                coeff: 1.0,
                power: 1.0,
            },
            OperatorKind::NegLaplacian => Self::power(1.0, 2.0),
        }
    }
}

impl fmt::Display for RhoRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeff == 0.0 {
            return write!(f, "{}", self.offset);
        }
        if self.offset != 0.0 {
            write!(f, "{}+", self.offset)?;
        }
        if self.coeff != 1.0 {
            write!(f, "{}*", self.coeff)?;
        }
        if self.power == 1.0 {
            write!(f, "h")
        } else {
            write!(f, "h^{}", self.power)
        }
    }
}

impl FromStr for RhoRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::InvalidInput(format!("cannot parse rho rule '{s}'"));
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
        let term = |t: &str| -> Result<(f64, f64)> {
            let (coeff, rest) = match t.split_once('*') {
                Some((c, r)) => (num(c)?, r),
                None => (1.0, t),
            };
            let power = match rest {
                "h" => 1.0,
                "sqrt(h)" => 0.5,
                r => match r.strip_prefix("h^") {
                    Some(p) => num(p)?,
                    None => return Err(bad()),
                },
            };
            Ok((coeff, power))
        };
        if !s.contains('h') {
            let c = num(&s)?;
            return if c >= 0.0 { Ok(Self::constant(c)) } else { Err(bad()) };
        }
        let (offset, t) = match s.split_once('+') {
            Some((o, t)) => (num(o)?, t),
            None => (0.0, s.as_str()),
        };
        let (coeff, power) = term(t)?;
        if offset < 0.0 || coeff < 0.0 {
            return Err(bad());
        }
        Ok(Self {
            offset,
            coeff,
            power,
        })
    }
}

/// A manufactured problem with its mesh ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCase {
    pub kind: OperatorKind,
    pub dim: usize,
    pub profile: Profile,
    pub rho: RhoRule,
    /// Values of `N = 1/h`, coarsest first.
    pub ladder: Vec<usize>,
    pub classification: Classification,
}

/// `sin²` product for `m = 2`, `sin` product for `m = 1`, default `ρ` rule and
/// ladder `h ∈ {1/16..1/256}` (d=1), `{1/8..1/64}` (d=2), `{1/4..1/16}` (d=3).
pub fn manufactured(kind: OperatorKind, dim: usize) -> Result<ConvergenceCase> {
    let ladder = match dim {
        1 => vec![16, 32, 64, 128, 256],
        2 => vec![8, 16, 32, 64],
        3 => vec![4, 8, 16],
        _ => return invalid(format!("manufactured solutions need d ∈ {{1, 2, 3}}, got {dim}")),
    };
    let profile = if kind.m() == 2 {
        Profile::SinSquared
    } else {
        Profile::Sine
    };
    Ok(ConvergenceCase {
        kind,
        dim,
        profile,
        rho: RhoRule::default_for(kind),
        ladder,
        classification: Classification::General,
    })
}

/// Multi-index range `0..=k` per axis, for `D^α` of a product.
fn product_deriv(profile: Profile, alpha: &[usize], x: &[f64]) -> f64 {
    alpha.iter().zip(x).map(|(&a, &xi)| profile.deriv(a, xi)).product()
}

impl ConvergenceCase {
    pub fn with_rho(mut self, rho: RhoRule) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_ladder(mut self, ladder: Vec<usize>) -> Self {
        self.ladder = ladder;
        self
    }

    pub fn u(&self, x: &[f64]) -> f64 {
        x.iter().map(|&xi| self.profile.deriv(0, xi)).product()
    }

    /// `D^α u(x)`.
    pub fn d_alpha(&self, alpha: &[usize], x: &[f64]) -> f64 {
        product_deriv(self.profile, alpha, x)
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        let mut a = vec![0; self.dim];
        (0..self.dim)
            .map(|i| {
                a.fill(0);
                a[i] = 2;
                self.d_alpha(&a, x)
            })
            .sum()
    }

    fn bilaplacian(&self, x: &[f64]) -> f64 {
        let mut a = vec![0; self.dim];
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                a.fill(0);
                a[i] += 2;
                a[j] += 2;
                s += self.d_alpha(&a, x);
            }
        }
        s
    }

    /// Datum `f = L u` of the continuum operator.
    pub fn datum(&self, x: &[f64]) -> f64 {
        match self.kind {
            OperatorKind::Bilaplacian => self.bilaplacian(x),
            OperatorKind::Mixed => -self.laplacian(x) + self.bilaplacian(x),
            OperatorKind::NegLaplacian => -self.laplacian(x),
        }
    }

    /// `M_k = Σ_{|α|<=k} sup |D^α u|`.
    pub fn m_k(&self, k: usize) -> f64 {
        let sups: Vec<f64> = (0..=k).map(|a| self.profile.sup(a)).collect();
        multi_indices(self.dim, k)
            .iter()
            .map(|alpha| alpha.iter().map(|&a| sups[a]).product::<f64>())
            .sum()
    }

    /// Bound expression at mesh width `h` (without the constant).
    pub fn bound(&self, h: f64) -> f64 {
        let rho = self.rho.eval(h);
        match self.kind {
            OperatorKind::Bilaplacian => {
                let (m5, m2) = (self.m_k(5), self.m_k(2));
                m5 * m5 * h * h + m2 * m2 * rho * rho + m2 * m2 * h
            }
            OperatorKind::Mixed => {
                let (m5, m4, m2) = (self.m_k(5), self.m_k(4), self.m_k(2));
                m5 * m5 * h * h + m4 * m4 * (rho - 1.0).powi(2) + m4 * m4 * h.powi(4) + m2 * m2 * h
            }
            OperatorKind::NegLaplacian => {
                let (m4, m2, m1) = (self.m_k(4), self.m_k(2), self.m_k(1));
                let delta = h.max(rho.sqrt());
                m4 * m4 * delta.powi(4) + m2 * m2 * rho * delta + m1 * m1 * delta
            }
        }
    }

    /// Largest `|u|` (and `|∇u|` when `m = 2`) over `samples` points on each
    /// face of the unit box.
    pub fn boundary_defect(&self, samples: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for axis in 0..self.dim {
            for side in [0.0, 1.0] {
                for s in 0..samples {
                    let mut x: Vec<f64> = (0..self.dim)
                        .map(|j| ((s * (2 * j + 3) + j) % samples) as f64 / samples as f64)
                        .collect();
                    x[axis] = side;
                    worst = worst.max(self.u(&x).abs());
                    if self.kind.m() == 2 {
                        for i in 0..self.dim {
                            let mut a = vec![0; self.dim];
                            a[i] = 1;
                            worst = worst.max(self.d_alpha(&a, &x).abs());
                        }
                    }
                }
            }
        }
        worst
    }

    fn geometry(&self, n: usize) -> Result<Arc<GridGeometry>> {
        Ok(Arc::new(GridGeometry::new(
            Domain::unit_box(self.dim)?,
            n,
            self.classification,
        )?))
    }
}

/// One rung of the ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSample {
    pub h: f64,
    pub rho: f64,
    /// `‖R_h e_h‖²_{h,grid}`.
    pub error_sq: f64,
    pub bound: f64,
}

/// Solves `L_h u_h = R_h f` at `h = 1/n` and measures the error against `u`.
pub fn measure_error(case: &ConvergenceCase, n: usize) -> Result<ErrorSample> {
    let g = case.geometry(n)?;
    let h = g.h();
    let rho = case.rho.eval(h);
    let spec = MixedOperatorSpec::new(case.kind, rho, h)?;
    let f: Vec<f64> = (0..g.num_unknowns())
        .map(|i| case.datum(&g.unknown_position(i)))
        .collect();
    let fact = Factorization::new(assemble(spec, g.clone(), Normalization::Unnormalized)?)?;
    let uh = fact.solve(&f);
    let s: f64 = uh
        .iter()
        .enumerate()
        .map(|(i, v)| (case.u(&g.unknown_position(i)) - v).powi(2))
        .sum();
    Ok(ErrorSample {
        h,
        rho,
        error_sq: s * h.powi(case.dim as i32),
        bound: case.bound(h),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub h: f64,
    /// Squared error `‖R_h e_h‖²`.
    pub error: f64,
    pub bound: f64,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub kind: OperatorKind,
    pub dim: usize,
    pub rho: RhoRule,
    /// Largest ratio on the two coarsest meshes.
    pub c_fit: f64,
    pub rows: Vec<RateRow>,
}

impl RateReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Largest over smallest ratio across the ladder.
    pub fn ratio_spread(&self) -> f64 {
        let max = self.rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
        let min = self.rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        max / min
    }

    /// CSV `h,error,bound,ratio,pass`.
    pub fn write_csv<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "h,error,bound,ratio,pass")?;
        for r in &self.rows {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.h,
                r.error,
                r.bound,
                r.ratio,
                if r.pass { "PASS" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Runs the ladder, fits `C` on the two coarsest meshes and flags every finer
/// mesh whose ratio exceeds `1.1 C`.
pub fn rate_report(case: &ConvergenceCase) -> Result<RateReport> {
    if case.ladder.len() < 3 {
        return Err(Error::InsufficientLadder {
            len: case.ladder.len(),
            required: 3,
        });
    }
    let mut ladder = case.ladder.clone();
    ladder.sort_unstable();
    ladder.dedup();
    let samples = ladder
        .par_iter()
        .map(|&n| measure_error(case, n))
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = samples.iter().map(|s| s.error_sq / s.bound).collect();
    let c_fit = ratios[0].max(ratios[1]);
    let rows = samples
        .iter()
        .zip(&ratios)
        .enumerate()
        .map(|(i, (s, &ratio))| RateRow {
            h: s.h,
            error: s.error_sq,
            bound: s.bound,
            ratio,
            pass: i < 2 || ratio <= 1.1 * c_fit,
        })
        .collect();
    Ok(RateReport {
        kind: case.kind,
        dim: case.dim,
        rho: case.rho,
        c_fit,
        rows,
    })
}
