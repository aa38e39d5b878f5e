//! Thin-plate (Kirchhoff–Love) eigenmodes on the source grid.
//!
//! A plate occupies a set of active cells of the cell-centred source grid: the
//! cells whose centres fall inside its centred `length_x × length_y` rectangle,
//! further restricted by an optional outline mask.
//!
//! The finite-difference operator is the 13-point biharmonic stencil closed
//! with ghost points:
//!
//! * simply supported: the edge lies on the cell faces around the active set;
//!   ghosts mirror `w` with odd symmetry, so the operator is `L²` for the
//!   cell-centred Dirichlet Laplacian `L` and reproduces the analytic
//!   rectangular modes exactly in shape.
//! * clamped: the edge lies on the centres of the inactive rim cells
//!   (`w = 0` there) and the ghost beyond mirrors `w` with even symmetry
//!   (`∂w/∂n = 0`).

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::config::Grid;
use crate::error::{NahError, Result};
use crate::field::BinaryMask;
use crate::sample::MAX_FREQUENCY_HZ;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryCondition {
    SimplySupported,
    Clamped,
}

/// Geometry and material of an isotropic plate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateSpec {
    /// Extent along the grid columns (m).
    pub length_x: f64,
    /// Extent along the grid rows (m).
    pub length_y: f64,
    pub thickness: f64,
    pub youngs: f64,
    pub poisson: f64,
    pub density: f64,
    pub bc: BoundaryCondition,
    /// Irregular outline; cells outside are not part of the plate.
    #[serde(skip)]
    pub mask: Option<BinaryMask>,
}

impl PlateSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length_x", self.length_x),
            ("length_y", self.length_y),
            ("thickness", self.thickness),
            ("youngs", self.youngs),
            ("density", self.density),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(NahError::Config(format!("plate {name} must be > 0, got {v}")));
            }
        }
        if !(self.poisson > 0.0 && self.poisson < 0.5) {
            return Err(NahError::Config(format!("poisson ratio {} outside (0, 0.5)", self.poisson)));
        }
        Ok(())
    }

    /// `D = E h³ / (12 (1 − ν²))`.
    pub fn flexural_rigidity(&self) -> f64 {
        self.youngs * self.thickness.powi(3) / (12.0 * (1.0 - self.poisson * self.poisson))
    }

    pub fn mass_per_area(&self) -> f64 {
        self.density * self.thickness
    }

    /// Closed-form simply-supported frequency of the `(m, n)` mode (Hz).
    pub fn ss_frequency(&self, m: usize, n: usize) -> f64 {
        let a = m as f64 / self.length_x;
        let b = n as f64 / self.length_y;
        0.5 * PI * (self.flexural_rigidity() / self.mass_per_area()).sqrt() * (a * a + b * b)
    }

    /// Cells of `grid` belonging to the plate.
    pub fn footprint(&self, grid: &Grid) -> Result<BinaryMask> {
        let (hx, hy) = (0.5 * self.length_x, 0.5 * self.length_y);
        let base = |r: usize, c: usize| grid.x(c).abs() < hx && grid.y(r).abs() < hy;
        match &self.mask {
            Some(m) => {
                m.check_shape(grid.rows, grid.cols)?;
                BinaryMask::from_fn(grid.rows, grid.cols, |r, c| base(r, c) && m.get(r, c))
            }
            None => BinaryMask::from_fn(grid.rows, grid.cols, base),
        }
        .map_err(|_| NahError::Config("plate covers no grid cell".into()))
    }
}

/// One eigenmode sampled on the source grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub frequency: f64,
    /// Row-major real shape, unit max-modulus, zero outside the plate.
    pub shape: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    /// 1-based position in the ascending spectrum.
    pub index: usize,
    /// `(m, n)` half-wave counts for analytic modes.
    pub order: Option<(usize, usize)>,
}

fn normalize_shape(shape: &mut [f64]) {
    let peak = shape.iter().fold(0.0f64, |b, &v| if v.abs() > b.abs() { v } else { b });
    if peak != 0.0 {
        shape.iter_mut().for_each(|v| *v /= peak);
    }
}

/// Analytic simply-supported modes of a rectangular plate, ascending, `f ≤ 2000 Hz`.
pub fn analytic_ss_modes(spec: &PlateSpec, grid: &Grid) -> Result<Vec<Mode>> {
    spec.validate()?;
    if spec.bc != BoundaryCondition::SimplySupported || spec.mask.is_some() {
        return Err(NahError::Config(
            "analytic modes need a simply-supported plate without outline mask".into(),
        ));
    }
    let footprint = spec.footprint(grid)?;
    let mut orders = Vec::new();
    let mut m = 1;
    while spec.ss_frequency(m, 1) <= MAX_FREQUENCY_HZ {
        let mut n = 1;
        while spec.ss_frequency(m, n) <= MAX_FREQUENCY_HZ {
            orders.push((m, n));
            n += 1;
        }
        m += 1;
    }
    if orders.is_empty() {
        return Err(NahError::EmptyModeSet { limit_hz: MAX_FREQUENCY_HZ });
    }
    orders.sort_by(|a, b| {
        spec.ss_frequency(a.0, a.1)
            .total_cmp(&spec.ss_frequency(b.0, b.1))
            .then(a.cmp(b))
    });
    let x0 = -0.5 * spec.length_x;
    let y0 = -0.5 * spec.length_y;
    let modes = orders
        .into_iter()
        .enumerate()
        .map(|(i, (m, n))| {
            let mut shape = vec![0.0; grid.len()];
            for r in 0..grid.rows {
                for c in 0..grid.cols {
                    if footprint.get(r, c) {
                        let sx = (m as f64 * PI * (grid.x(c) - x0) / spec.length_x).sin();
                        let sy = (n as f64 * PI * (grid.y(r) - y0) / spec.length_y).sin();
                        shape[r * grid.cols + c] = sx * sy;
                    }
                }
            }
            normalize_shape(&mut shape);
            Mode {
                frequency: spec.ss_frequency(m, n),
                shape,
                rows: grid.rows,
                cols: grid.cols,
                index: i + 1,
                order: Some((m, n)),
            }
        })
        .collect();
    Ok(modes)
}

/// Dense biharmonic operator over the active cells, in active-cell order.
pub fn biharmonic_operator(footprint: &BinaryMask, grid: &Grid, bc: BoundaryCondition) -> (DMatrix<f64>, Vec<usize>) {
    let rows = grid.rows as isize;
    let cols = grid.cols as isize;
    let active: Vec<usize> = (0..footprint.bits().len()).filter(|&i| footprint.bits()[i]).collect();
    let mut slot = vec![usize::MAX; footprint.bits().len()];
    for (a, &i) in active.iter().enumerate() {
        slot[i] = a;
    }
    let lookup = |r: isize, c: isize| -> Option<usize> {
        if r < 0 || c < 0 || r >= rows || c >= cols {
            return None;
        }
        let s = slot[(r * cols + c) as usize];
        (s != usize::MAX).then_some(s)
    };
    let na = active.len();
    let (hx2, hy2) = (grid.pitch_x * grid.pitch_x, grid.pitch_y * grid.pitch_y);
    let mut k = DMatrix::<f64>::zeros(na, na);

    match bc {
        BoundaryCondition::SimplySupported => {
            // Cell-centred Dirichlet Laplacian, then square it.
            let mut lap: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(5); na];
            for (a, &i) in active.iter().enumerate() {
                let (r, c) = ((i as isize) / cols, (i as isize) % cols);
                let mut diag = -2.0 / hx2 - 2.0 / hy2;
                for (dr, dc, h2) in [(0, -1, hx2), (0, 1, hx2), (-1, 0, hy2), (1, 0, hy2)] {
                    match lookup(r + dr, c + dc) {
                        Some(b) => lap[a].push((b, 1.0 / h2)),
                        None => diag -= 1.0 / h2,
                    }
                }
                lap[a].push((a, diag));
            }
            for a in 0..na {
                for &(b, lab) in &lap[a] {
                    for &(c, lbc) in &lap[b] {
                        k[(a, c)] += lab * lbc;
                    }
                }
            }
        }
        BoundaryCondition::Clamped => {
            let (hx4, hy4, hxy) = (hx2 * hx2, hy2 * hy2, hx2 * hy2);
            let center = 6.0 / hx4 + 6.0 / hy4 + 8.0 / hxy;
            let near_x = -4.0 / hx4 - 4.0 / hxy;
            let near_y = -4.0 / hy4 - 4.0 / hxy;
            let diag_c = 2.0 / hxy;
            for (a, &i) in active.iter().enumerate() {
                let (r, c) = ((i as isize) / cols, (i as isize) % cols);
                k[(a, a)] += center;
                for (dr, dc, near, far) in [
                    (0, 1, near_x, 1.0 / hx4),
                    (0, -1, near_x, 1.0 / hx4),
                    (1, 0, near_y, 1.0 / hy4),
                    (-1, 0, near_y, 1.0 / hy4),
                ] {
                    let mid = lookup(r + dr, c + dc);
                    if let Some(b) = mid {
                        k[(a, b)] += near;
                        if let Some(f) = lookup(r + 2 * dr, c + 2 * dc) {
                            k[(a, f)] += far;
                        }
                    } else {
                        // Even ghost across the rim node: w(ghost) = w(self).
                        k[(a, a)] += far;
                    }
                }
                for (dr, dc) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                    if let Some(b) = lookup(r + dr, c + dc) {
                        k[(a, b)] += diag_c;
                    }
                }
            }
        }
    }
    (k, active)
}

/// Finite-difference eigenmodes with `f ≤ 2000 Hz`, ascending.
pub fn fd_eigensolve(spec: &PlateSpec, grid: &Grid) -> Result<Vec<Mode>> {
    spec.validate()?;
    let footprint = spec.footprint(grid)?;
    let (k, active) = biharmonic_operator(&footprint, grid, spec.bc);
    let scale = spec.flexural_rigidity() / spec.mass_per_area();
    let knorm = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let eig = SymmetricEigen::try_new(k.clone(), f64::EPSILON, 0)
        .ok_or_else(|| NahError::Eigensolver("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut modes = Vec::new();
    for &j in &order {
        let lambda = eig.eigenvalues[j];
        if lambda <= 0.0 {
            return Err(NahError::Eigensolver(format!("non-positive eigenvalue {lambda:e}")));
        }
        let f = (lambda * scale).sqrt() / (2.0 * PI);
        if f > MAX_FREQUENCY_HZ {
            break;
        }
        let vec = eig.eigenvectors.column(j);
        let resid = (&k * vec - vec * lambda).norm() / knorm;
        if resid > 1e-9 {
            return Err(NahError::Eigensolver(format!(
                "eigenpair {j} residual {resid:e} exceeds 1e-9"
            )));
        }
        let mut shape = vec![0.0; grid.len()];
        for (a, &i) in active.iter().enumerate() {
            shape[i] = vec[a];
        }
        normalize_shape(&mut shape);
        modes.push(Mode {
            frequency: f,
            shape,
            rows: grid.rows,
            cols: grid.cols,
            index: modes.len() + 1,
            order: None,
        });
    }
    if modes.is_empty() {
        return Err(NahError::EmptyModeSet { limit_hz: MAX_FREQUENCY_HZ });
    }
    Ok(modes)
}
