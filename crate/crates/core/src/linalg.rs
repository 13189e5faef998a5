//! Compressed symmetric storage and a banded Cholesky factorization.

use crate::error::{Error, Result};

/// Symmetric matrix in compressed sparse row form, both triangles stored,
/// column indices sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SymCsr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SymCsr {
    /// Builds from per-row `(column, value)` lists; zero entries are dropped.
    pub(crate) fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if v != 0.0 {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub(crate) fn n(&self) -> usize {
        self.n
    }

    pub(crate) fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub(crate) fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(p) => self.vals[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub(crate) fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub(crate) fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub(crate) fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }
}

/// `A = L Lᵀ` for a symmetric positive definite band matrix.
///
/// Row `i` of `L` is stored at `data[i * (bw + 1)..]`, column `j` of that row
/// at offset `j + bw - i`.
#[derive(Debug, Clone)]
pub(crate) struct BandCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandCholesky {
    pub(crate) fn factor(a: &SymCsr) -> Result<Self> {
        let n = a.n();
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut data = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    data[i * w + j + bw - i] = v;
                }
            }
        }
        for i in 0..n {
            let i0 = i.saturating_sub(bw);
            for j in i0..=i {
                let k0 = i0.max(j.saturating_sub(bw));
                let ri = &data[i * w + k0 + bw - i..i * w + j + bw - i];
                let rj = &data[j * w + k0 + bw - j..j * w + j + bw - j];
                let dot: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                let s = data[i * w + j + bw - i] - dot;
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::FactorizationFailure { pivot: i, value: s });
                    }
                    data[i * w + bw] = s.sqrt();
                } else {
                    data[i * w + j + bw - i] = s / data[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, data })
    }

    pub(crate) fn n(&self) -> usize {
        self.n
    }

    /// Solves `L y = b` in place.
    pub(crate) fn solve_lower(&self, b: &mut [f64]) {
        let (bw, w) = (self.bw, self.bw + 1);
        for i in 0..self.n {
            let i0 = i.saturating_sub(bw);
            let row = &self.data[i * w + i0 + bw - i..i * w + bw];
            let dot: f64 = row.iter().zip(&b[i0..i]).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - dot) / self.data[i * w + bw];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub(crate) fn solve_upper(&self, b: &mut [f64]) {
        let (bw, w) = (self.bw, self.bw + 1);
        for i in (0..self.n).rev() {
            b[i] /= self.data[i * w + bw];
            let xi = b[i];
            let i0 = i.saturating_sub(bw);
            let row = &self.data[i * w + i0 + bw - i..i * w + bw];
            for (bj, l) in b[i0..i].iter_mut().zip(row) {
                *bj -= l * xi;
            }
        }
    }

    /// Solves `A x = b` in place.
    pub(crate) fn solve(&self, b: &mut [f64]) {
        self.solve_lower(b);
        self.solve_upper(b);
    }

    /// Solves `A x = b` with one step of iterative refinement against `a`.
    pub(crate) fn solve_refined(&self, a: &SymCsr, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve(&mut x);
        let mut r = vec![0.0; self.n];
        a.matvec(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        self.solve(&mut r);
        for (xi, ri) in x.iter_mut().zip(&r) {
            *xi += ri;
        }
        x
    }
}
