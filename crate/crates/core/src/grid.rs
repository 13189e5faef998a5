//! Lattice approximation of the unit box and unit disc.
//!
//! Every lattice point `k/N` of the closed domain is classified as
//!
//! * `Deep`: interior point all of whose neighbors are interior (R*_h),
//! * `NearBoundary`: interior point with at least one non-interior neighbor (B*_h),
//! * `Boundary`: point of the closed domain that is not interior (B_h).
//!
//! A point is interior when all of its neighbors `x ± h e_i`, `x ± h(e_i ± e_j)`
//! (`1 <= i, j <= d`) lie in the closed domain. Interior points are the unknowns
//! of every Dirichlet problem; they are numbered lexicographically.

use std::fmt::Write as _;
use std::io;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainKind {
    /// `(0, 1)^d`
    UnitBox,
    /// Open unit ball in `d ∈ {2, 3}`.
    UnitDisc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Domain {
    kind: DomainKind,
    dim: usize,
}

impl Domain {
    pub fn unit_box(dim: usize) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be positive");
        }
        Ok(Self {
            kind: DomainKind::UnitBox,
            dim,
        })
    }

    pub fn unit_disc(dim: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return invalid(format!("disc domain supports d ∈ {{2, 3}}, got {dim}"));
        }
        Ok(Self {
            kind: DomainKind::UnitDisc,
            dim,
        })
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Exact membership test of the lattice point `k / n` in the closed domain.
    pub fn contains_lattice(&self, k: &[i64], n: i64) -> bool {
        match self.kind {
            DomainKind::UnitBox => k.iter().all(|&c| (0..=n).contains(&c)),
            DomainKind::UnitDisc => {
                let r2: i128 = k.iter().map(|&c| (c as i128) * (c as i128)).sum();
                r2 <= (n as i128) * (n as i128)
            }
        }
    }

    /// Membership of a physical point, with a small tolerance for round-off
    /// at the boundary.
    pub fn contains(&self, x: &[f64]) -> bool {
        const TOL: f64 = 1e-12;
        if x.len() != self.dim || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self.kind {
            DomainKind::UnitBox => x.iter().all(|&v| (-TOL..=1.0 + TOL).contains(&v)),
            DomainKind::UnitDisc => x.iter().map(|v| v * v).sum::<f64>() <= 1.0 + TOL,
        }
    }

    fn lattice_range(&self, n: i64) -> (i64, i64) {
        match self.kind {
            DomainKind::UnitBox => (0, n),
            DomainKind::UnitDisc => (-n, n),
        }
    }
}

/// How interior points are selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Classification {
    /// Neighbor rule on the closed domain; `R_h = Λ_N / N`.
    General,
    /// One-dimensional chain `{1, .., N-1}` with zero values at `0`, `N` and
    /// the phantom site `N + 1`. Matches the conditioning `W_N = W_{N+1} = 0`
    /// of the random-walk representation.
    Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PointClass {
    Deep,
    NearBoundary,
    Boundary,
    Outside,
}

impl PointClass {
    pub fn is_interior(self) -> bool {
        matches!(self, PointClass::Deep | PointClass::NearBoundary)
    }

    pub fn label(self) -> &'static str {
        match self {
            PointClass::Deep => "deep",
            PointClass::NearBoundary => "near_boundary",
            PointClass::Boundary => "boundary",
            PointClass::Outside => "outside",
        }
    }
}

/// Neighbor offsets `±e_i`, `±(e_i ± e_j)` for `1 <= i, j <= d`, deduplicated,
/// zero removed, in lexicographic order.
pub fn neighbor_offsets(dim: usize) -> Vec<Vec<i64>> {
    let unit = |i: usize| {
        let mut e = vec![0i64; dim];
        e[i] = 1;
        e
    };
    let mut out: Vec<Vec<i64>> = Vec::new();
    for i in 0..dim {
        let ei = unit(i);
        out.push(ei.clone());
        out.push(ei.iter().map(|v| -v).collect());
        for j in 0..dim {
            let ej = unit(j);
            for sj in [1i64, -1] {
                let s: Vec<i64> = ei.iter().zip(&ej).map(|(a, b)| a + sj * b).collect();
                out.push(s.iter().map(|v| -v).collect());
                out.push(s);
            }
        }
    }
    out.retain(|v| v.iter().any(|&c| c != 0));
    out.sort();
    out.dedup();
    out
}

/// Classified lattice approximation of a domain at mesh width `h = 1/N`.
///
/// Storage is a dense cube of lattice cells padded by two cells beyond the
/// closed domain, so every stencil of reach two applied at an interior point
/// stays inside the cube.
#[derive(Debug, Clone)]
pub struct GridGeometry {
    domain: Domain,
    n: usize,
    classification: Classification,
    lo: i64,
    side: usize,
    classes: Vec<PointClass>,
    unknown_of_cell: Vec<u32>,
    unknown_cells: Vec<usize>,
}

const NO_UNKNOWN: u32 = u32::MAX;
const PAD: i64 = 2;

/// Builds the general (neighbor-rule) classification.
pub fn build_grid(domain: Domain, n: usize) -> Result<GridGeometry> {
    GridGeometry::new(domain, n, Classification::General)
}

impl GridGeometry {
    pub fn new(domain: Domain, n: usize, classification: Classification) -> Result<Self> {
        if n == 0 {
            return invalid("N must be positive");
        }
        if classification == Classification::Chain
            && (domain.dim != 1 || domain.kind != DomainKind::UnitBox)
        {
            return invalid("chain classification is only defined for the one-dimensional box");
        }
        let dim = domain.dim;
        let ni = n as i64;
        let (dlo, mut dhi) = domain.lattice_range(ni);
        if classification == Classification::Chain {
            dhi += 1;
        }
        let lo = dlo - PAD;
        let side = (dhi + PAD - lo + 1) as usize;
        let total = side
            .checked_pow(dim as u32)
            .filter(|&t| t <= 50_000_000)
            .ok_or_else(|| Error::InvalidInput(format!("grid with N={n}, d={dim} is too large")))?;

        let mut geom = GridGeometry {
            domain,
            n,
            classification,
            lo,
            side,
            classes: vec![PointClass::Outside; total],
            unknown_of_cell: vec![NO_UNKNOWN; total],
            unknown_cells: Vec::new(),
        };

        let mut in_domain = vec![false; total];
        let mut coords = vec![0i64; dim];
        for cell in 0..total {
            geom.decode_into(cell, &mut coords);
            in_domain[cell] = match classification {
                Classification::General => domain.contains_lattice(&coords, ni),
                Classification::Chain => (0..=ni + 1).contains(&coords[0]),
            };
        }

        let offsets = neighbor_offsets(dim);
        let mut interior = vec![false; total];
        for cell in 0..total {
            if !in_domain[cell] {
                continue;
            }
            geom.decode_into(cell, &mut coords);
            interior[cell] = match classification {
                Classification::General => offsets.iter().all(|off| {
                    geom.cell_of_offset(&coords, off)
                        .is_some_and(|c| in_domain[c])
                }),
                Classification::Chain => (1..ni).contains(&coords[0]),
            };
        }

        for cell in 0..total {
            if !in_domain[cell] {
                continue;
            }
            geom.classes[cell] = if interior[cell] {
                geom.decode_into(cell, &mut coords);
                let deep = offsets.iter().all(|off| {
                    geom.cell_of_offset(&coords, off)
                        .is_some_and(|c| interior[c])
                });
                if deep {
                    PointClass::Deep
                } else {
                    PointClass::NearBoundary
                }
            } else {
                PointClass::Boundary
            };
        }

        for cell in 0..total {
            if geom.classes[cell].is_interior() {
                geom.unknown_of_cell[cell] = geom.unknown_cells.len() as u32;
                geom.unknown_cells.push(cell);
            }
        }
        if geom.unknown_cells.is_empty() {
            return Err(Error::EmptyInterior);
        }
        Ok(geom)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn classification(&self) -> Classification {
        self.classification
    }

    /// Number of unknowns `|R_h|`.
    pub fn num_unknowns(&self) -> usize {
        self.unknown_cells.len()
    }

    /// Lower corner and side length of the padded storage cube.
    pub fn bounding_cube(&self) -> (i64, usize) {
        (self.lo, self.side)
    }

    pub fn class_of(&self, k: &[i64]) -> PointClass {
        self.cell_of(k)
            .map_or(PointClass::Outside, |c| self.classes[c])
    }

    pub fn unknown_index(&self, k: &[i64]) -> Option<usize> {
        self.cell_of(k)
            .map(|c| self.unknown_of_cell[c])
            .filter(|&u| u != NO_UNKNOWN)
            .map(|u| u as usize)
    }

    pub fn unknown_coords(&self, index: usize) -> Vec<i64> {
        let mut out = vec![0; self.dim()];
        self.decode_into(self.unknown_cells[index], &mut out);
        out
    }

    /// Physical position `k / N` of an unknown.
    pub fn unknown_position(&self, index: usize) -> Vec<f64> {
        let h = self.h();
        self.unknown_coords(index)
            .into_iter()
            .map(|c| c as f64 * h)
            .collect()
    }

    /// Class of each unknown, in unknown order.
    pub fn unknown_classes(&self) -> impl Iterator<Item = PointClass> + '_ {
        self.unknown_cells.iter().map(|&c| self.classes[c])
    }

    /// All classified points (everything except `Outside`) in lexicographic order.
    pub fn points(&self) -> impl Iterator<Item = (Vec<i64>, PointClass)> + '_ {
        (0..self.classes.len())
            .filter(|&c| self.classes[c] != PointClass::Outside)
            .map(|c| {
                let mut k = vec![0; self.dim()];
                self.decode_into(c, &mut k);
                (k, self.classes[c])
            })
    }

    pub fn count(&self, class: PointClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    /// Neighbors of a lattice point, in the fixed order of [`neighbor_offsets`].
    pub fn neighbors(&self, k: &[i64]) -> Vec<Vec<i64>> {
        neighbor_offsets(self.dim())
            .into_iter()
            .map(|off| k.iter().zip(&off).map(|(a, b)| a + b).collect())
            .collect()
    }

    /// Writes `x_1,..,x_d,class` rows for every classified point.
    pub fn write_csv<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        let h = self.h();
        let header: Vec<String> = (1..=self.dim()).map(|i| format!("x_{i}")).collect();
        writeln!(out, "{},class", header.join(","))?;
        let mut line = String::new();
        for (k, class) in self.points() {
            line.clear();
            for c in &k {
                let _ = write!(line, "{:.17e},", *c as f64 * h);
            }
            line.push_str(class.label());
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub(crate) fn cell_of(&self, k: &[i64]) -> Option<usize> {
        let mut cell = 0usize;
        for &c in k {
            let off = c - self.lo;
            if off < 0 || off >= self.side as i64 {
                return None;
            }
            cell = cell * self.side + off as usize;
        }
        Some(cell)
    }

    fn cell_of_offset(&self, k: &[i64], off: &[i64]) -> Option<usize> {
        let mut cell = 0usize;
        for (&c, &o) in k.iter().zip(off) {
            let p = c + o - self.lo;
            if p < 0 || p >= self.side as i64 {
                return None;
            }
            cell = cell * self.side + p as usize;
        }
        Some(cell)
    }

    fn decode_into(&self, mut cell: usize, out: &mut [i64]) {
        for slot in out.iter_mut().rev() {
            *slot = (cell % self.side) as i64 + self.lo;
            cell /= self.side;
        }
    }
}
