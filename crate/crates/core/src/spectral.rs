//! Smallest eigenpairs of the assembled operators, Weyl-law fits, truncated
//! series fields and negative Sobolev norms in the discrete eigenbasis.
//!
//! Eigenvectors are normalized in the grid inner product
//! `⟨u, v⟩_{h,grid} = h^d Σ u v`, with `h` the mesh width of the operator.

use std::io;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dirichlet::{assemble, Factorization, SparseOperator};
use crate::error::{invalid, Error, Result};
use crate::grid::GridGeometry;
use crate::operators::{GridFunction, MixedOperatorSpec, Normalization, OperatorKind};

/// Operators are solved densely up to this many unknowns.
pub const DENSE_EIGEN_LIMIT: usize = 1200;
/// Trusted window: eigenvalues `<= (WEYL_CUTOFF / h)^order`.
pub const WEYL_CUTOFF: f64 = 0.5;
/// Minimum number of eigenvalues in the trusted window.
pub const WEYL_MIN_WINDOW: usize = 30;

const BLOCK: usize = 8;
const RESIDUAL_TOL: f64 = 1e-9;
const MAX_RESTARTS: usize = 50;

/// Continuum operator whose discretization is analysed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpectralTag {
    /// `-Δ`
    NegLaplacian,
    /// `Δ²`
    Bilaplacian,
    /// `-Δ + Δ²`
    Mixed,
}

impl SpectralTag {
    /// Differential order: 2 or 4.
    pub fn order(self) -> u32 {
        match self {
            SpectralTag::NegLaplacian => 2,
            SpectralTag::Bilaplacian | SpectralTag::Mixed => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SpectralTag::NegLaplacian => "neg-laplacian",
            SpectralTag::Bilaplacian => "bilaplacian",
            SpectralTag::Mixed => "mixed",
        }
    }

    /// Exponent `e` with `‖f‖²_{-s} = Σ eig^{-e s} ⟨f, v⟩²`: 1 for `-Δ`,
    /// 1/2 for the fourth-order operators.
    pub fn norm_exponent(self) -> f64 {
        match self {
            SpectralTag::NegLaplacian => 1.0,
            SpectralTag::Bilaplacian | SpectralTag::Mixed => 0.5,
        }
    }

    fn of_spec(spec: &MixedOperatorSpec) -> Self {
        match spec.kind {
            OperatorKind::NegLaplacian if spec.rho == 0.0 => SpectralTag::NegLaplacian,
            OperatorKind::Bilaplacian if spec.rho == 0.0 => SpectralTag::Bilaplacian,
            _ => SpectralTag::Mixed,
        }
    }
}

impl std::str::FromStr for SpectralTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neg-laplacian" | "laplacian" => Ok(SpectralTag::NegLaplacian),
            "bilaplacian" => Ok(SpectralTag::Bilaplacian),
            "mixed" => Ok(SpectralTag::Mixed),
            other => invalid(format!("unknown operator '{other}'")),
        }
    }
}

/// The discretization `-Δ_h`, `Δ_h²` or `-Δ_h + Δ_h²` (unnormalized) on `g`.
pub fn continuum_operator(tag: SpectralTag, g: Arc<GridGeometry>) -> Result<SparseOperator> {
    let h = g.h();
    let spec = match tag {
        SpectralTag::NegLaplacian => MixedOperatorSpec::new(OperatorKind::NegLaplacian, 0.0, h)?,
        SpectralTag::Bilaplacian => MixedOperatorSpec::new(OperatorKind::Bilaplacian, 0.0, h)?,
        SpectralTag::Mixed => MixedOperatorSpec::new(OperatorKind::Mixed, 1.0, h)?,
    };
    assemble(spec, g, Normalization::Unnormalized)
}

#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub tag: SpectralTag,
    /// Mesh width used for the grid normalization.
    pub h: f64,
    pub geometry: Arc<GridGeometry>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Grid-orthonormal eigenvectors over the unknowns, if requested.
    pub eigenvectors: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumOptions {
    pub vectors: bool,
    pub seed: u64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            vectors: true,
            seed: 0x5eed,
        }
    }
}

/// The `k` smallest eigenpairs of `a`.
pub fn spectrum(a: &SparseOperator, k: usize) -> Result<SpectrumResult> {
    spectrum_with(a, k, SpectrumOptions::default())
}

pub fn spectrum_with(a: &SparseOperator, k: usize, opts: SpectrumOptions) -> Result<SpectrumResult> {
    let n = a.n();
    if k == 0 || k > n {
        return invalid(format!("need 1 <= k <= n = {n}, got k = {k}"));
    }
    // a Krylov basis of several times k costs about as much as a dense solve
    let (vals, mut vecs) = if n <= DENSE_EIGEN_LIMIT || 6 * k >= n {
        dense_eigen(a, k)
    } else {
        let fact = Factorization::new(a.clone())?;
        block_shift_invert(a, &fact, k, opts.seed)?
    };
    let h = a.spec().h;
    let scale = h.powf(-(a.geometry().dim() as f64) / 2.0);
    for v in &mut vecs {
        orient(v);
        v.iter_mut().for_each(|x| *x *= scale);
    }
    Ok(SpectrumResult {
        tag: SpectralTag::of_spec(a.spec()),
        h,
        geometry: a.geometry().clone(),
        eigenvalues: vals,
        eigenvectors: opts.vectors.then_some(vecs),
    })
}

/// First component above `1e-8 · max|v|` made positive.
fn orient(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-8 * max) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn dense_eigen(a: &SparseOperator, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(a.to_dense());
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    idx.truncate(k);
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = idx
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (vals, vecs)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Orthonormalizes `w` against `a` and `b` (two Gram-Schmidt passes); `None`
/// if it lies in their span.
fn orthonormalize(mut w: Vec<f64>, a: &[Vec<f64>], b: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n0 = dot(&w, &w).sqrt();
    if n0 == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for basis in [a, b] {
            let coeffs: Vec<f64> = basis.par_iter().map(|v| dot(v, &w)).collect();
            for (v, c) in basis.iter().zip(coeffs) {
                axpy(-c, v, &mut w);
            }
        }
    }
    let nw = dot(&w, &w).sqrt();
    if nw <= 1e-10 * n0 {
        return None;
    }
    w.iter_mut().for_each(|x| *x /= nw);
    Some(w)
}

/// Block Krylov iteration on `A⁻¹` with full reorthogonalization,
/// Rayleigh-Ritz on `H = Vᵀ A⁻¹ V` and thick restarts.
fn block_shift_invert(
    a: &SparseOperator,
    fact: &Factorization,
    k: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.n();
    let norm_inf = (0..n)
        .map(|i| a.row(i).map(|(_, c)| c.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let max_basis = n.min((2 * k + 4 * BLOCK).max(k + 64));
    let keep = n.min(k + 2 * BLOCK).min(max_basis.saturating_sub(BLOCK).max(k));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = move || -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };

    let mut v: Vec<Vec<f64>> = Vec::new();
    let mut z: Vec<Vec<f64>> = Vec::new();
    let mut hm: Vec<Vec<f64>> = Vec::new();
    let mut pending: Vec<Vec<f64>> = (0..BLOCK.min(n)).map(|_| random()).collect();
    let mut solves = 0usize;
    let mut restarts = 0usize;

    loop {
        // extend the basis by the pending block
        let mut added = Vec::new();
        for w in pending.drain(..) {
            if v.len() + added.len() >= n {
                break;
            }
            if let Some(q) = orthonormalize(w, &v, &added) {
                added.push(q);
            }
        }
        while added.is_empty() && v.len() < n {
            if let Some(q) = orthonormalize(random(), &v, &[]) {
                added.push(q);
            }
        }
        let zs: Vec<Vec<f64>> = added.par_iter().map(|q| fact.solve(q)).collect();
        solves += zs.len();
        for (q, zq) in added.into_iter().zip(zs) {
            let j = v.len();
            v.push(q);
            z.push(zq);
            for row in hm.iter_mut() {
                row.push(0.0);
            }
            hm.push(vec![0.0; j + 1]);
            for i in 0..=j {
                let hij = 0.5 * (dot(&v[i], &z[j]) + dot(&v[j], &z[i]));
                hm[i][j] = hij;
                hm[j][i] = hij;
            }
        }

        let m = v.len();
        let full = m + BLOCK > max_basis || m == n;
        if m < k {
            pending = z[m.saturating_sub(BLOCK)..].to_vec();
            continue;
        }

        // Rayleigh-Ritz
        let h = DMatrix::from_fn(m, m, |i, j| hm[i][j]);
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let combine = |cols: &[Vec<f64>], s: usize| -> Vec<f64> {
            let mut y = vec![0.0; n];
            for (c, col) in cols.iter().enumerate() {
                axpy(eig.eigenvectors[(c, s)], col, &mut y);
            }
            y
        };
        let ritz: Vec<(f64, Vec<f64>, Vec<f64>)> = order[..k.min(m)]
            .par_iter()
            .map(|&s| (eig.eigenvalues[s], combine(&v, s), combine(&z, s)))
            .collect();
        // residual of A⁻¹: ‖A⁻¹y - θy‖ <= tol·θ, with tol at least the
        // round-off floor eps·‖A‖·‖A⁻¹‖ of the solves
        let theta_max = eig.eigenvalues.max();
        let tol = RESIDUAL_TOL.max(4.0 * f64::EPSILON * norm_inf * theta_max);
        let residual_ok: Vec<bool> = ritz
            .par_iter()
            .map(|(theta, y, zy)| {
                let r: f64 = zy
                    .iter()
                    .zip(y)
                    .map(|(p, q)| (p - theta * q).powi(2))
                    .sum::<f64>()
                    .sqrt();
                *theta > 0.0 && r <= tol * theta
            })
            .collect();
        let converged = residual_ok.iter().take_while(|ok| **ok).count();
        if converged == k || m == n {
            let vals: Vec<f64> = ritz.iter().map(|(t, _, _)| 1.0 / t).collect();
            let vecs = ritz.into_iter().map(|(_, y, _)| y).collect();
            return Ok((vals, vecs));
        }

        if full {
            restarts += 1;
            if restarts > MAX_RESTARTS {
                return Err(Error::NoConvergence {
                    requested: k,
                    converged,
                    iterations: solves,
                });
            }
            let kept: Vec<usize> = order[..keep.min(m)].to_vec();
            let (nv, nz): (Vec<Vec<f64>>, Vec<Vec<f64>>) = kept
                .par_iter()
                .map(|&s| (combine(&v, s), combine(&z, s)))
                .unzip();
            let thetas: Vec<f64> = kept.iter().map(|&s| eig.eigenvalues[s]).collect();
            v = nv;
            z = nz;
            hm = (0..v.len())
                .map(|i| (0..v.len()).map(|j| if i == j { thetas[i] } else { 0.0 }).collect())
                .collect();
            pending = (0..k)
                .filter(|i| !residual_ok[*i])
                .take(BLOCK)
                .map(|i| z[i].clone())
                .collect();
        } else {
            pending = z[m - BLOCK.min(m)..].to_vec();
        }
    }
}

/// Least-squares fit of `log eig_j` against `log j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylFit {
    pub slope: f64,
    pub intercept: f64,
    /// Number of eigenvalues below the cutoff.
    pub window: usize,
    /// 1-based range `[first, last]` of the fitted indices.
    pub fitted: (usize, usize),
    pub cutoff: f64,
}

/// Fits the Weyl exponent over the upper half of the trusted window
/// `eig <= (WEYL_CUTOFF / h)^order`.
pub fn weyl_check(result: &SpectrumResult) -> Result<WeylFit> {
    let order = result.tag.order();
    let cutoff = (WEYL_CUTOFF / result.h).powi(order as i32);
    let window = result.eigenvalues.iter().take_while(|e| **e <= cutoff).count();
    if window < WEYL_MIN_WINDOW {
        return Err(Error::InsufficientTrustedWindow {
            found: window,
            required: WEYL_MIN_WINDOW,
        });
    }
    let first = window / 2 + 1;
    let pts: Vec<(f64, f64)> = (first..=window)
        .map(|j| ((j as f64).ln(), result.eigenvalues[j - 1].ln()))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(WeylFit {
        slope,
        intercept: my - slope * mx,
        window,
        fitted: (first, window),
        cutoff,
    })
}

fn vectors(result: &SpectrumResult) -> Result<&[Vec<f64>]> {
    result
        .eigenvectors
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("spectrum was computed without eigenvectors".into()))
}

fn check_truncation(result: &SpectrumResult, j: usize) -> Result<()> {
    if j == 0 || j > result.eigenvalues.len() {
        return invalid(format!(
            "truncation J = {j} must lie in 1..={}",
            result.eigenvalues.len()
        ));
    }
    Ok(())
}

/// `Σ_{j<=J} eig_j^{-1/2} ξ_j v_j` with `ξ` from ChaCha stream 0 of `seed`.
pub fn series_field(result: &SpectrumResult, seed: u64, j: usize) -> Result<GridFunction> {
    check_truncation(result, j)?;
    let vecs = vectors(result)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; result.geometry.num_unknowns()];
    for (e, v) in result.eigenvalues.iter().zip(vecs).take(j) {
        let xi: f64 = StandardNormal.sample(&mut rng);
        axpy(xi / e.sqrt(), v, &mut out);
    }
    Ok(GridFunction::from_unknowns(&result.geometry, &out))
}

/// Covariance of [`series_field`] over the unknowns: `Σ_{j<=J} eig_j^{-1} v_j v_jᵀ`.
pub fn series_covariance(result: &SpectrumResult, j: usize) -> Result<DMatrix<f64>> {
    check_truncation(result, j)?;
    let vecs = vectors(result)?;
    let n = result.geometry.num_unknowns();
    let mut c = DMatrix::<f64>::zeros(n, n);
    for (e, v) in result.eigenvalues.iter().zip(vecs).take(j) {
        let dv = nalgebra::DVector::from_column_slice(v);
        c.ger(1.0 / e, &dv, &dv, 1.0);
    }
    Ok(c)
}

/// `Σ_{j<=J} eig_j^{-1-s/2} ξ_j²`, the squared `s`-norm of the truncated series.
pub fn series_partial_norm(result: &SpectrumResult, s: f64, seed: u64, j: usize) -> Result<Vec<f64>> {
    check_truncation(result, j)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    Ok(result
        .eigenvalues
        .iter()
        .take(j)
        .map(|e| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            acc += e.powf(-1.0 - s / 2.0) * xi * xi;
            acc
        })
        .collect())
}

/// `⟨f, v_j⟩_{h,grid}` for the computed modes.
pub fn coefficients(f: &[f64], result: &SpectrumResult) -> Result<Vec<f64>> {
    let vecs = vectors(result)?;
    if f.len() != result.geometry.num_unknowns() {
        return invalid("test function must be sampled on the unknowns");
    }
    let w = result.h.powi(result.geometry.dim() as i32);
    Ok(vecs.iter().map(|v| w * dot(f, v)).collect())
}

/// `‖f‖²_{-s} = Σ_j eig_j^{-e s} ⟨f, v_j⟩²` over the computed modes, with
/// `e` from [`SpectralTag::norm_exponent`].
pub fn negative_norm(f: &[f64], result: &SpectrumResult, s: f64) -> Result<f64> {
    let e = result.tag.norm_exponent();
    Ok(coefficients(f, result)?
        .iter()
        .zip(&result.eigenvalues)
        .map(|(c, l)| l.powf(-e * s) * c * c)
        .sum())
}

impl SpectrumResult {
    /// CSV `j,eigenvalue` (1-based `j`).
    pub fn write_csv<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "j,eigenvalue")?;
        for (j, e) in self.eigenvalues.iter().enumerate() {
            writeln!(out, "{},{e:.16e}", j + 1)?;
        }
        Ok(())
    }

    /// CSV `j,eigenvalue,log_j,log_eigenvalue,trusted,fitted`.
    pub fn write_weyl_csv<W: io::Write>(&self, fit: &WeylFit, mut out: W) -> io::Result<()> {
        writeln!(out, "j,eigenvalue,log_j,log_eigenvalue,trusted,fitted")?;
        for (i, e) in self.eigenvalues.iter().enumerate() {
            let j = i + 1;
            writeln!(
                out,
                "{j},{e:.16e},{:.16e},{:.16e},{},{}",
                (j as f64).ln(),
                e.ln(),
                j <= fit.window,
                (fit.fitted.0..=fit.fitted.1).contains(&j)
            )?;
        }
        Ok(())
    }
}
