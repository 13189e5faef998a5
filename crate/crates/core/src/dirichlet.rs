//! Assembly and solution of the discrete Dirichlet problems, and the Green's
//! function of the model.
//!
//! Unknowns are the interior points `R_h` in lexicographic order; values on
//! `B_h` and outside the domain are zero. The right-hand side `δ_x` has unit
//! mass at the lattice point.

use std::collections::VecDeque;
use std::io;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::grid::GridGeometry;
use crate::linalg::{BandCholesky, SymCsr};
use crate::operators::{GridFunction, MixedOperatorSpec, Normalization, OperatorKind};

/// Matrix of `L_h` on the unknowns of a grid.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    spec: MixedOperatorSpec,
    normalization: Normalization,
    geometry: Arc<GridGeometry>,
    matrix: SymCsr,
}

pub fn assemble(
    spec: MixedOperatorSpec,
    geometry: Arc<GridGeometry>,
    normalization: Normalization,
) -> Result<SparseOperator> {
    let stencil = spec.stencil(geometry.dim(), normalization);
    let n = geometry.num_unknowns();
    let mut rows = Vec::with_capacity(n);
    let mut y = vec![0i64; geometry.dim()];
    for i in 0..n {
        let x = geometry.unknown_coords(i);
        let mut row = Vec::new();
        for (off, c) in stencil.iter() {
            for ((yi, xi), oi) in y.iter_mut().zip(&x).zip(off) {
                *yi = xi + oi;
            }
            if let Some(j) = geometry.unknown_index(&y) {
                row.push((j, c));
            }
        }
        rows.push(row);
    }
    Ok(SparseOperator {
        spec,
        normalization,
        geometry,
        matrix: SymCsr::from_rows(rows),
    })
}

impl SparseOperator {
    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    pub fn spec(&self) -> &MixedOperatorSpec {
        &self.spec
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn geometry(&self) -> &Arc<GridGeometry> {
        &self.geometry
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.matrix.row(i)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.matrix.matvec(x, &mut y);
        y
    }

    pub fn is_symmetric(&self) -> bool {
        self.matrix.is_symmetric()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub(crate) fn csr(&self) -> &SymCsr {
        &self.matrix
    }
}

/// Cholesky factorization `A = L Lᵀ` of an assembled operator, shared by the
/// solver, the sampler and the eigensolver.
#[derive(Debug, Clone)]
pub struct Factorization {
    operator: SparseOperator,
    chol: BandCholesky,
}

impl Factorization {
    pub fn new(operator: SparseOperator) -> Result<Self> {
        let chol = BandCholesky::factor(operator.csr())?;
        Ok(Self { operator, chol })
    }

    pub fn operator(&self) -> &SparseOperator {
        &self.operator
    }

    pub fn n(&self) -> usize {
        self.chol.n()
    }

    /// `A⁻¹ b` with one step of iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.chol.solve_refined(self.operator.csr(), b)
    }

    /// `A⁻¹ b` without refinement.
    pub fn solve_plain(&self, b: &mut [f64]) {
        self.chol.solve(b)
    }

    /// Replaces `ξ` by `L⁻ᵀ ξ`; for standard normal `ξ` the result has
    /// covariance `A⁻¹`.
    pub fn correlate(&self, xi: &mut [f64]) {
        self.chol.solve_upper(xi)
    }
}

/// Solves `L_h u = f` on `R_h` with `u = 0` on `B_h`.
pub fn solve_dirichlet(a: &SparseOperator, f: &GridFunction) -> Result<GridFunction> {
    let fact = Factorization::new(a.clone())?;
    let u = fact.solve(&f.to_unknowns(a.geometry()));
    Ok(GridFunction::from_unknowns(a.geometry(), &u))
}

/// `‖A u - f‖ / ‖f‖` over the unknowns (zero when `f = 0` and `u = 0`).
pub fn relative_residual(a: &SparseOperator, u: &[f64], f: &[f64]) -> f64 {
    let au = a.matvec(u);
    let r: f64 = au.iter().zip(f).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let nf: f64 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nf == 0.0 {
        r
    } else {
        r / nf
    }
}

/// Spec of the model precision `-Δ + κΔ²` (normalized Laplacian, unit lattice).
pub fn model_spec(kappa: f64) -> Result<MixedOperatorSpec> {
    MixedOperatorSpec::new(OperatorKind::NegLaplacian, kappa, 1.0)
}

/// Largest number of unknowns for which the Green's function is stored densely.
pub const DENSE_LIMIT: usize = 2000;
const CACHE_COLUMNS: usize = 64;

#[derive(Debug)]
enum Store {
    Dense(Vec<f64>),
    OnDemand(Mutex<VecDeque<(usize, Arc<Vec<f64>>)>>),
}

/// `G_Λ(x, y)`, the covariance of the field, i.e. the inverse of `-Δ + κΔ²`
/// with zero boundary values.
#[derive(Debug)]
pub struct GreenFunction {
    kappa: f64,
    factor: Arc<Factorization>,
    store: Store,
}

pub fn green_function(geometry: Arc<GridGeometry>, kappa: f64) -> Result<GreenFunction> {
    if !kappa.is_finite() || kappa < 0.0 {
        return invalid(format!("kappa must be finite and nonnegative, got {kappa}"));
    }
    let op = assemble(model_spec(kappa)?, geometry, Normalization::Normalized)?;
    GreenFunction::from_factorization(kappa, Arc::new(Factorization::new(op)?))
}

impl GreenFunction {
    pub fn from_factorization(kappa: f64, factor: Arc<Factorization>) -> Result<Self> {
        let n = factor.n();
        let store = if n <= DENSE_LIMIT {
            let cols: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|j| factor.solve(&unit(n, j)))
                .collect();
            let mut dense = vec![0.0; n * n];
            for (j, col) in cols.iter().enumerate() {
                for i in 0..n {
                    dense[i * n + j] = col[i];
                }
            }
            // the inverse of a symmetric matrix is symmetric; average away round-off
            for i in 0..n {
                for j in i + 1..n {
                    let v = 0.5 * (dense[i * n + j] + dense[j * n + i]);
                    dense[i * n + j] = v;
                    dense[j * n + i] = v;
                }
            }
            Store::Dense(dense)
        } else {
            Store::OnDemand(Mutex::new(VecDeque::new()))
        };
        Ok(Self {
            kappa,
            factor,
            store,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn n(&self) -> usize {
        self.factor.n()
    }

    pub fn geometry(&self) -> &Arc<GridGeometry> {
        self.factor.operator().geometry()
    }

    pub fn factorization(&self) -> &Arc<Factorization> {
        &self.factor
    }

    /// `G(x_i, ·)` over the unknowns.
    pub fn column(&self, i: usize) -> Arc<Vec<f64>> {
        let n = self.n();
        match &self.store {
            Store::Dense(d) => Arc::new(d[i * n..(i + 1) * n].to_vec()),
            Store::OnDemand(cache) => {
                if let Some((_, c)) = cache.lock().unwrap().iter().find(|(k, _)| *k == i) {
                    return c.clone();
                }
                let col = Arc::new(self.factor.solve(&unit(n, i)));
                let mut cache = cache.lock().unwrap();
                if cache.len() >= CACHE_COLUMNS {
                    cache.pop_front();
                }
                cache.push_back((i, col.clone()));
                col
            }
        }
    }

    /// Entry for two unknown indices.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.store {
            Store::Dense(d) => d[i * self.n() + j],
            Store::OnDemand(_) => self.column(i)[j],
        }
    }

    /// Entry for two lattice points; zero unless both are interior.
    pub fn at(&self, x: &[i64], y: &[i64]) -> f64 {
        let g = self.geometry();
        match (g.unknown_index(x), g.unknown_index(y)) {
            (Some(i), Some(j)) => self.get(i, j),
            _ => 0.0,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// `Σ_{x,y} a(x) G(x,y) b(y)` over the unknowns.
    pub fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        let gb = self.factor.solve(b);
        a.iter().zip(&gb).map(|(p, q)| p * q).sum()
    }

    /// CSV `x_index,y_index,value` over all pairs of unknowns.
    pub fn write_csv<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x_index,y_index,value")?;
        for i in 0..self.n() {
            let col = self.column(i);
            for (j, v) in col.iter().enumerate() {
                writeln!(out, "{i},{j},{v:.16e}")?;
            }
        }
        Ok(())
    }
}

fn unit(n: usize, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[j] = 1.0;
    e
}
