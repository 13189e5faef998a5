//! Grid functions, difference stencils, the mixed operator `L_h`, its boundary
//! truncation `L_{h,2}`, discrete norms and the characteristic polynomial.

use std::collections::BTreeMap;

use crate::error::{invalid, Error, Result};
use crate::grid::{GridGeometry, PointClass};

/// Which Laplacian is meant.
///
/// `Unnormalized` is `Δ_h u(x) = h^{-2} Σ_i (u(x+he_i) + u(x-he_i) - 2u(x))`;
/// `Normalized` divides it by `2d` (the probabilistic convention).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Normalization {
    Unnormalized,
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    /// `-Δ_h + ρ₁ Δ_h²`, order `m = 1`.
    NegLaplacian,
    /// `-ρ₂ Δ_h + Δ_h²`, order `m = 2`.
    Bilaplacian,
    /// `-Δ_h + ρ₃ Δ_h²`, order `m = 2`.
    Mixed,
}

impl OperatorKind {
    pub fn m(self) -> usize {
        match self {
            OperatorKind::NegLaplacian => 1,
            OperatorKind::Bilaplacian | OperatorKind::Mixed => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            OperatorKind::NegLaplacian => "neg-laplacian",
            OperatorKind::Bilaplacian => "bilaplacian",
            OperatorKind::Mixed => "mixed",
        }
    }
}

impl std::str::FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neg-laplacian" | "laplacian" | "gff" => Ok(OperatorKind::NegLaplacian),
            "bilaplacian" | "membrane" => Ok(OperatorKind::Bilaplacian),
            "mixed" => Ok(OperatorKind::Mixed),
            other => invalid(format!("unknown operator kind '{other}'")),
        }
    }
}

/// The discrete operator `L_h` with its coefficient `ρ` and mesh width `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedOperatorSpec {
    pub kind: OperatorKind,
    pub rho: f64,
    pub h: f64,
}

impl MixedOperatorSpec {
    pub fn new(kind: OperatorKind, rho: f64, h: f64) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return invalid(format!("rho must be finite and nonnegative, got {rho}"));
        }
        if !(h > 0.0) || !h.is_finite() {
            return invalid(format!("h must be positive, got {h}"));
        }
        Ok(Self { kind, rho, h })
    }

    pub fn m(&self) -> usize {
        self.kind.m()
    }

    /// Stencil of `L_h` in dimension `dim`.
    ///
    /// Built as `a·S + b·S∘S` where `S` is the integer second-difference sum,
    /// so the coefficients of `η` and `-η` are bitwise equal.
    pub fn stencil(&self, dim: usize, norm: Normalization) -> Stencil {
        let c = laplacian_factor(dim, self.h, norm);
        let (a, b) = match self.kind {
            OperatorKind::NegLaplacian | OperatorKind::Mixed => (-c, self.rho * c * c),
            OperatorKind::Bilaplacian => (-self.rho * c, c * c),
        };
        let s = Stencil::second_difference_sum(dim);
        let s2 = s.compose(&s);
        s.scaled(a).add(&s2.scaled(b))
    }
}

fn laplacian_factor(dim: usize, h: f64, norm: Normalization) -> f64 {
    match norm {
        Normalization::Unnormalized => 1.0 / (h * h),
        Normalization::Normalized => 1.0 / (2.0 * dim as f64 * h * h),
    }
}

/// Constant-coefficient difference stencil `(Su)(x) = Σ_η c_η u(x + hη)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    dim: usize,
    coeffs: BTreeMap<Vec<i64>, f64>,
}

impl Stencil {
    pub fn identity(dim: usize) -> Self {
        Self::from_pairs(dim, [(vec![0; dim], 1.0)])
    }

    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (Vec<i64>, f64)>) -> Self {
        let mut coeffs = BTreeMap::new();
        for (k, v) in pairs {
            debug_assert_eq!(k.len(), dim);
            *coeffs.entry(k).or_insert(0.0) += v;
        }
        coeffs.retain(|_, v| *v != 0.0);
        Self { dim, coeffs }
    }

    /// `Σ_i (δ_{e_i} + δ_{-e_i} - 2δ_0)` with integer coefficients.
    pub fn second_difference_sum(dim: usize) -> Self {
        let mut pairs = vec![(vec![0; dim], -2.0 * dim as f64)];
        for i in 0..dim {
            for s in [-1, 1] {
                let mut e = vec![0; dim];
                e[i] = s;
                pairs.push((e, 1.0));
            }
        }
        Self::from_pairs(dim, pairs)
    }

    /// `(u(x + he_j) - u(x)) / h`
    pub fn forward(dim: usize, axis: usize, h: f64) -> Self {
        let mut e = vec![0; dim];
        e[axis] = 1;
        Self::from_pairs(dim, [(e, 1.0 / h), (vec![0; dim], -1.0 / h)])
    }

    /// `(u(x) - u(x - he_j)) / h`
    pub fn backward(dim: usize, axis: usize, h: f64) -> Self {
        let mut e = vec![0; dim];
        e[axis] = -1;
        Self::from_pairs(dim, [(vec![0; dim], 1.0 / h), (e, -1.0 / h)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeff(&self, offset: &[i64]) -> f64 {
        self.coeffs.get(offset).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[i64], f64)> {
        self.coeffs.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    /// Largest `|η_i|` over the stencil.
    pub fn reach(&self) -> i64 {
        self.coeffs
            .keys()
            .flat_map(|k| k.iter().map(|c| c.abs()))
            .max()
            .unwrap_or(0)
    }

    pub fn compose(&self, other: &Stencil) -> Stencil {
        let mut pairs = Vec::with_capacity(self.coeffs.len() * other.coeffs.len());
        for (a, ca) in &self.coeffs {
            for (b, cb) in &other.coeffs {
                pairs.push((a.iter().zip(b).map(|(x, y)| x + y).collect(), ca * cb));
            }
        }
        Self::from_pairs(self.dim, pairs)
    }

    pub fn scaled(&self, s: f64) -> Stencil {
        Self::from_pairs(self.dim, self.coeffs.iter().map(|(k, v)| (k.clone(), v * s)))
    }

    pub fn add(&self, other: &Stencil) -> Stencil {
        Self::from_pairs(
            self.dim,
            self.coeffs
                .iter()
                .chain(&other.coeffs)
                .map(|(k, v)| (k.clone(), *v)),
        )
    }

    /// Fourier symbol `Σ_η c_η e^{i⟨η,θ⟩}` as `(re, im)`.
    pub fn symbol(&self, theta: &[f64]) -> (f64, f64) {
        let mut re = 0.0;
        let mut im = 0.0;
        for (k, c) in &self.coeffs {
            let phase: f64 = k.iter().zip(theta).map(|(&a, t)| a as f64 * t).sum();
            re += c * phase.cos();
            im += c * phase.sin();
        }
        (re, im)
    }

    pub fn apply(&self, u: &GridFunction) -> GridFunction {
        let r = self.reach();
        let lo: Vec<i64> = u.lo.iter().map(|c| c - r).collect();
        let hi: Vec<i64> = u.hi().iter().map(|c| c + r).collect();
        let mut out = GridFunction::zeros(u.h, &lo, &hi);
        let mut y = vec![0i64; u.dim()];
        for idx in 0..out.values.len() {
            out.coords_into(idx, &mut y);
            let mut acc = 0.0;
            let mut z = y.clone();
            for (k, c) in &self.coeffs {
                for ((zi, yi), ki) in z.iter_mut().zip(&y).zip(k) {
                    *zi = yi + ki;
                }
                acc += c * u.get(&z);
            }
            out.values[idx] = acc;
        }
        out
    }
}

/// Real values on the lattice `hZ^d`, stored on a box and zero outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    h: f64,
    lo: Vec<i64>,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl GridFunction {
    /// Zero function on the box `lo..=hi` (integer lattice coordinates).
    pub fn zeros(h: f64, lo: &[i64], hi: &[i64]) -> Self {
        let shape: Vec<usize> = lo
            .iter()
            .zip(hi)
            .map(|(a, b)| (b - a + 1).max(0) as usize)
            .collect();
        let len = shape.iter().product();
        Self {
            h,
            lo: lo.to_vec(),
            shape,
            values: vec![0.0; len],
        }
    }

    /// `f(k)` on the box `lo..=hi`.
    pub fn from_lattice_fn(h: f64, lo: &[i64], hi: &[i64], f: impl Fn(&[i64]) -> f64) -> Self {
        let mut u = Self::zeros(h, lo, hi);
        let mut k = vec![0; lo.len()];
        for idx in 0..u.values.len() {
            u.coords_into(idx, &mut k);
            u.values[idx] = f(&k);
        }
        u
    }

    /// Values on the unknowns of `g`, zero elsewhere.
    pub fn from_unknowns(g: &GridGeometry, values: &[f64]) -> Self {
        assert_eq!(values.len(), g.num_unknowns());
        let (lo, side) = g.bounding_cube();
        let lo_v = vec![lo; g.dim()];
        let hi_v = vec![lo + side as i64 - 1; g.dim()];
        let mut u = Self::zeros(g.h(), &lo_v, &hi_v);
        for (i, v) in values.iter().enumerate() {
            u.set(&g.unknown_coords(i), *v);
        }
        u
    }

    /// The restriction `R_h f`: `f(x)` at interior points, zero elsewhere.
    pub fn restrict(g: &GridGeometry, f: impl Fn(&[f64]) -> f64) -> Self {
        Self::from_unknowns(g, &restrict_to_unknowns(g, f))
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> Vec<i64> {
        self.lo
            .iter()
            .zip(&self.shape)
            .map(|(a, s)| a + *s as i64 - 1)
            .collect()
    }

    pub fn get(&self, k: &[i64]) -> f64 {
        self.index(k).map_or(0.0, |i| self.values[i])
    }

    /// Sets a value; panics if `k` lies outside the storage box.
    pub fn set(&mut self, k: &[i64], v: f64) {
        let i = self
            .index(k)
            .unwrap_or_else(|| panic!("{k:?} outside grid function storage"));
        self.values[i] = v;
    }

    /// Nonzero entries in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| {
                let mut k = vec![0; self.dim()];
                self.coords_into(i, &mut k);
                (k, *v)
            })
    }

    /// Values at the unknowns of `g`, in unknown order.
    pub fn to_unknowns(&self, g: &GridGeometry) -> Vec<f64> {
        (0..g.num_unknowns())
            .map(|i| self.get(&g.unknown_coords(i)))
            .collect()
    }

    /// Keeps values on points of `g` with an interior class, zeros the rest.
    pub fn restricted_to_interior(&self, g: &GridGeometry) -> GridFunction {
        self.masked(|k| g.class_of(k).is_interior())
    }

    pub fn masked(&self, keep: impl Fn(&[i64]) -> bool) -> GridFunction {
        let mut out = self.clone();
        let mut k = vec![0; self.dim()];
        for i in 0..out.values.len() {
            out.coords_into(i, &mut k);
            if !keep(&k) {
                out.values[i] = 0.0;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn linear_combination(&self, a: f64, other: &GridFunction, b: f64) -> GridFunction {
        let lo: Vec<i64> = self.lo.iter().zip(&other.lo).map(|(x, y)| *x.min(y)).collect();
        let hi: Vec<i64> = self
            .hi()
            .iter()
            .zip(other.hi())
            .map(|(x, y)| *x.max(&y))
            .collect();
        GridFunction::from_lattice_fn(self.h, &lo, &hi, |k| a * self.get(k) + b * other.get(k))
    }

    fn index(&self, k: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for ((c, l), s) in k.iter().zip(&self.lo).zip(&self.shape) {
            let off = c - l;
            if off < 0 || off >= *s as i64 {
                return None;
            }
            idx = idx * s + off as usize;
        }
        Some(idx)
    }

    fn coords_into(&self, mut idx: usize, out: &mut [i64]) {
        for d in (0..self.dim()).rev() {
            out[d] = (idx % self.shape[d]) as i64 + self.lo[d];
            idx /= self.shape[d];
        }
    }
}

/// `f(kh)` at every unknown of `g`.
pub fn restrict_to_unknowns(g: &GridGeometry, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..g.num_unknowns())
        .map(|i| f(&g.unknown_position(i)))
        .collect()
}

pub fn forward_diff(u: &GridFunction, axis: usize) -> GridFunction {
    Stencil::forward(u.dim(), axis, u.h).apply(u)
}

pub fn backward_diff(u: &GridFunction, axis: usize) -> GridFunction {
    Stencil::backward(u.dim(), axis, u.h).apply(u)
}

/// `∂^α u` as a composition of forward differences.
pub fn forward_diff_multi(u: &GridFunction, alpha: &[usize]) -> GridFunction {
    let mut s = Stencil::identity(u.dim());
    for (axis, &a) in alpha.iter().enumerate() {
        for _ in 0..a {
            s = s.compose(&Stencil::forward(u.dim(), axis, u.h));
        }
    }
    s.apply(u)
}

pub fn laplacian_stencil(dim: usize, h: f64, norm: Normalization) -> Stencil {
    Stencil::second_difference_sum(dim).scaled(laplacian_factor(dim, h, norm))
}

pub fn bilaplacian_stencil(dim: usize, h: f64, norm: Normalization) -> Stencil {
    let s = Stencil::second_difference_sum(dim);
    let c = laplacian_factor(dim, h, norm);
    s.compose(&s).scaled(c * c)
}

pub fn laplacian_h(u: &GridFunction, norm: Normalization) -> GridFunction {
    laplacian_stencil(u.dim(), u.h, norm).apply(u)
}

pub fn bilaplacian_h(u: &GridFunction, norm: Normalization) -> GridFunction {
    bilaplacian_stencil(u.dim(), u.h, norm).apply(u)
}

pub fn apply_lh(spec: &MixedOperatorSpec, u: &GridFunction, norm: Normalization) -> GridFunction {
    spec.stencil(u.dim(), norm).apply(u)
}

/// `L_{h,2} u`: `L_h u` on deep points, `h² L_h u` on near-boundary points,
/// zero outside `R_h`.
pub fn apply_lh2(
    spec: &MixedOperatorSpec,
    u: &GridFunction,
    g: &GridGeometry,
    norm: Normalization,
) -> Result<GridFunction> {
    if spec.m() != 2 {
        return invalid("the truncated operator is defined for fourth-order operators only");
    }
    let lu = apply_lh(spec, u, norm);
    let h2 = spec.h * spec.h;
    let lo = lu.lo.clone();
    let hi = lu.hi();
    Ok(GridFunction::from_lattice_fn(lu.h, &lo, &hi, |k| match g.class_of(k) {
        PointClass::Deep => lu.get(k),
        PointClass::NearBoundary => h2 * lu.get(k),
        _ => 0.0,
    }))
}

/// `⟨u, v⟩_{h,grid} = h^d Σ u(x) v(x)`
pub fn grid_inner(u: &GridFunction, v: &GridFunction) -> f64 {
    let s: f64 = u.iter().map(|(k, a)| a * v.get(&k)).sum();
    s * u.h.powi(u.dim() as i32)
}

pub fn grid_norm(u: &GridFunction) -> f64 {
    grid_inner(u, u).sqrt()
}

/// Multi-indices `α ∈ N^d` with `|α| <= m`, in a fixed order.
pub fn multi_indices(dim: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == dim {
            out.push(cur.clone());
            return;
        }
        for a in 0..=left {
            cur.push(a);
            rec(dim, left - a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, m, &mut Vec::new(), &mut out);
    out
}

/// `‖u‖_{h,m}² = Σ_{|α|<=m} ‖∂^α u‖²_{h,grid}`
pub fn sobolev_norm_m(u: &GridFunction, m: usize) -> f64 {
    multi_indices(u.dim(), m)
        .iter()
        .map(|a| grid_norm(&forward_diff_multi(u, a)).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `|||u|||_{h,m}² = h^d (Σ_{R*_h} u² + Σ_{B*_h} (h^{-m} u)²)`
pub fn weighted_norm_m(u: &GridFunction, m: usize, g: &GridGeometry) -> f64 {
    let w = u.h.powi(-(m as i32));
    let s: f64 = u
        .iter()
        .map(|(k, v)| match g.class_of(&k) {
            PointClass::Deep => v * v,
            PointClass::NearBoundary => (w * v).powi(2),
            _ => 0.0,
        })
        .sum();
    (s * u.h.powi(u.dim() as i32)).sqrt()
}

/// Characteristic polynomial `p(θ)` of `h^{2m} L_h` (unnormalized Laplacian).
pub fn char_poly(spec: &MixedOperatorSpec, theta: &[f64]) -> Result<f64> {
    let dim = theta.len();
    let stencil = spec
        .stencil(dim, Normalization::Unnormalized)
        .scaled(spec.h.powi(2 * spec.m() as i32));
    let (re, im) = stencil.symbol(theta);
    let scale: f64 = stencil.iter().map(|(_, c)| c.abs()).sum::<f64>().max(1.0);
    if im.abs() > 1e-12 * scale {
        return Err(Error::NonSymmetricStencil { imag: im });
    }
    Ok(re)
}

/// Norm inequalities of the discrete Sobolev theory, audited on random smooth
/// grid functions supported in `R_h`.
pub mod audit {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub enum Inequality {
        /// `‖u‖ <= C ‖∂_j u‖`
        Poincare { axis: usize },
        /// `‖u‖²_{h,m} <= C Σ_j ‖∂_j^m u‖²`
        PureDerivatives { m: usize },
        /// `|||u|||_{h,m} <= C ‖u‖_{h,m}`
        WeightedNorm { m: usize },
        /// `‖u‖_{h,2} <= C ‖L_{h,2} u‖`
        Truncated { kind: OperatorKind, rho: f64 },
    }

    /// `R_h` restriction of `Π sin²(πx_i) · P(x)` with `P` a random cosine
    /// polynomial of degree <= 3 per axis.
    pub fn random_smooth(g: &GridGeometry, seed: u64, index: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let d = g.dim();
        let modes: Vec<(Vec<i64>, f64)> = multi_indices(d, 3)
            .into_iter()
            .map(|a| {
                (
                    a.into_iter().map(|c| c as i64).collect(),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let pi = std::f64::consts::PI;
        GridFunction::restrict(g, |x| {
            let bump: f64 = x.iter().map(|t| (pi * t).sin().powi(2)).product();
            let p: f64 = modes
                .iter()
                .map(|(k, a)| {
                    a * k
                        .iter()
                        .zip(x)
                        .map(|(&kk, t)| (kk as f64 * pi * t).cos())
                        .product::<f64>()
                })
                .sum();
            bump * p
        })
    }

    /// Ratio `lhs / rhs` of one inequality for one function.
    pub fn ratio(ineq: Inequality, u: &GridFunction, g: &GridGeometry) -> Result<f64> {
        let d = u.dim();
        Ok(match ineq {
            Inequality::Poincare { axis } => grid_norm(u) / grid_norm(&forward_diff(u, axis)),
            Inequality::PureDerivatives { m } => {
                let rhs: f64 = (0..d)
                    .map(|j| {
                        let mut a = vec![0; d];
                        a[j] = m;
                        grid_norm(&forward_diff_multi(u, &a)).powi(2)
                    })
                    .sum();
                sobolev_norm_m(u, m).powi(2) / rhs
            }
            Inequality::WeightedNorm { m } => weighted_norm_m(u, m, g) / sobolev_norm_m(u, m),
            Inequality::Truncated { kind, rho } => {
                let spec = MixedOperatorSpec::new(kind, rho, g.h())?;
                let l = apply_lh2(&spec, u, g, Normalization::Unnormalized)?;
                sobolev_norm_m(u, 2) / grid_norm(&l)
            }
        })
    }

    /// Largest ratio over `samples` random functions.
    pub fn fitted_constant(
        ineq: Inequality,
        g: &GridGeometry,
        samples: usize,
        seed: u64,
    ) -> Result<f64> {
        let mut c: f64 = 0.0;
        for i in 0..samples {
            let u = random_smooth(g, seed, i as u64);
            c = c.max(ratio(ineq, &u, g)?);
        }
        Ok(c)
    }
}
