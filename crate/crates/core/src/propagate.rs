//! Free-field Green's functions and the discrete velocity-to-pressure map.
//!
//! Time convention is `e^{jωt}`, so outgoing waves carry `e^{-jkR}`. The
//! propagator discretizes the velocity term of the Kirchhoff–Helmholtz
//! integral with midpoint quadrature:
//!
//! `P[m, n] = β · (−jωρ₀) · g(r_m, s_n) · ΔS`
//!
//! where `β` is the baffle factor (2 gives the Rayleigh integral).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;

use crate::config::NahConfig;
use crate::error::{NahError, Result};
use crate::field::{ComplexField, Quantity};
use crate::par::Exec;

pub type Point = [f64; 3];

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn distance(r: &Point, s: &Point) -> f64 {
    let dx = r[0] - s[0];
    let dy = r[1] - s[1];
    let dz = r[2] - s[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// `e^{-j(ω/c)R} / (4πR)` with `R = ‖r − s‖`.
pub fn green(r: &Point, s: &Point, omega: f64, c: f64) -> Result<Complex64> {
    let d = distance(r, s);
    if d == 0.0 {
        return Err(NahError::SingularGreen);
    }
    Ok(Complex64::from_polar(1.0 / (4.0 * PI * d), -omega / c * d))
}

/// Derivative of [`green`] with respect to the `z` coordinate of `r`.
pub fn green_dndz(r: &Point, s: &Point, omega: f64, c: f64) -> Result<Complex64> {
    let d = distance(r, s);
    if d == 0.0 {
        return Err(NahError::SingularGreen);
    }
    let g = Complex64::from_polar(1.0 / (4.0 * PI * d), -omega / c * d);
    let dz = r[2] - s[2];
    Ok((dz / d) * (-J * (omega / c) - 1.0 / d) * g)
}

/// Dense `M × N` map from source-plane velocity to hologram pressure.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    rows: usize,
    cols: usize,
    matrix: Vec<Complex64>,
    omega: f64,
    geometry_hash: [u8; 32],
    out_shape: (usize, usize),
    in_shape: (usize, usize),
}

impl Propagator {
    /// Assemble from explicit point lists (row-major target and source grids).
    #[allow(clippy::too_many_arguments)]
    pub fn between(
        targets: &[Point],
        sources: &[Point],
        cell_area: f64,
        omega: f64,
        c: f64,
        rho0: f64,
        baffle_factor: f64,
        exec: Exec,
    ) -> Result<Propagator> {
        let n = sources.len();
        let scale = baffle_factor * (-J * omega * rho0) * cell_area;
        let mut matrix = vec![Complex64::new(0.0, 0.0); targets.len() * n];
        let failed = std::sync::atomic::AtomicBool::new(false);
        if n > 0 {
            exec.for_each_chunk(&mut matrix, n, |m, row| {
                for (entry, s) in row.iter_mut().zip(sources) {
                    match green(&targets[m], s, omega, c) {
                        Ok(g) => *entry = scale * g,
                        Err(_) => failed.store(true, std::sync::atomic::Ordering::Relaxed),
                    }
                }
            });
        }
        if failed.into_inner() {
            return Err(NahError::SingularGreen);
        }
        Ok(Propagator {
            rows: targets.len(),
            cols: n,
            matrix,
            omega,
            geometry_hash: [0; 32],
            out_shape: (1, targets.len()),
            in_shape: (1, n),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn geometry_hash(&self) -> &[u8; 32] {
        &self.geometry_hash
    }

    pub fn matrix(&self) -> &[Complex64] {
        &self.matrix
    }

    pub fn entry(&self, m: usize, n: usize) -> Complex64 {
        self.matrix[m * self.cols + n]
    }

    /// Build from a single complex entry; used in scalar tests.
    pub fn from_matrix(rows: usize, cols: usize, matrix: Vec<Complex64>, omega: f64) -> Result<Self> {
        if matrix.len() != rows * cols {
            return Err(NahError::shape(rows * cols, matrix.len()));
        }
        Ok(Propagator {
            rows,
            cols,
            matrix,
            omega,
            geometry_hash: [0; 32],
            out_shape: (1, rows),
            in_shape: (1, cols),
        })
    }

    /// `P · v` on raw slices.
    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.cols {
            return Err(NahError::shape(self.cols, v.len()));
        }
        Ok(self
            .matrix
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `Pᴴ · p` on raw slices.
    pub fn apply_adjoint(&self, p: &[Complex64]) -> Result<Vec<Complex64>> {
        if p.len() != self.rows {
            return Err(NahError::shape(self.rows, p.len()));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        for (row, pm) in self.matrix.chunks_exact(self.cols.max(1)).zip(p) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.conj() * pm;
            }
        }
        Ok(out)
    }

    /// Grid shape of the output field.
    pub fn output_shape(&self) -> (usize, usize) {
        if self.out_shape.0 * self.out_shape.1 == self.rows {
            self.out_shape
        } else {
            (1, self.rows)
        }
    }

    /// Grid shape of the input field.
    pub fn input_shape(&self) -> (usize, usize) {
        if self.in_shape.0 * self.in_shape.1 == self.cols {
            self.in_shape
        } else {
            (1, self.cols)
        }
    }

    pub fn forward(&self, v: &ComplexField) -> Result<ComplexField> {
        let p = self.apply(v.values())?;
        let (r, c) = self.output_shape();
        ComplexField::new(r, c, p, Quantity::Pressure)
    }

    pub fn adjoint(&self, p: &ComplexField) -> Result<ComplexField> {
        let v = self.apply_adjoint(p.values())?;
        let (r, c) = self.input_shape();
        ComplexField::new(r, c, v, Quantity::NormalVelocity)
    }
}

/// Propagator from the source grid (z = 0) to the hologram grid (z = z_h).
pub fn build_propagator(config: &NahConfig, omega: f64) -> Result<Propagator> {
    build_propagator_with(config, omega, Exec::default())
}

pub fn build_propagator_with(config: &NahConfig, omega: f64, exec: Exec) -> Result<Propagator> {
    config.validate()?;
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(NahError::Config(format!("omega must be positive, got {omega}")));
    }
    let src = config.source_grid();
    let holo = config.hologram_grid();
    let mut p = Propagator::between(
        &holo.points(config.z_h),
        &src.points(0.0),
        src.cell_area(),
        omega,
        config.c,
        config.rho0,
        config.baffle_factor,
        exec,
    )?;
    p.geometry_hash = config.geometry_hash();
    p.out_shape = (holo.rows, holo.cols);
    p.in_shape = (src.rows, src.cols);
    Ok(p)
}

/// Per-run memo of propagators keyed by geometry and frequency.
#[derive(Debug, Default)]
pub struct PropagatorCache {
    inner: Mutex<HashMap<([u8; 32], u64), Arc<Propagator>>>,
}

impl PropagatorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, config: &NahConfig, omega: f64) -> Result<Arc<Propagator>> {
        let key = (config.geometry_hash(), omega.to_bits());
        if let Some(p) = self.inner.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(p));
        }
        let p = Arc::new(build_propagator(config, omega)?);
        self.inner
            .lock()
            .expect("cache lock")
            .insert(key, Arc::clone(&p));
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }

    #[test]
    fn static_limit() {
        let g = green(&[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0], 0.0, 343.0).unwrap();
        assert!((g - Complex64::new(1.0 / (4.0 * PI), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn one_wavelength_wraps_phase() {
        let c = 343.0;
        let omega = 2.0 * PI * 500.0;
        let lambda = 2.0 * PI * c / omega;
        let g = green(&[lambda, 0.0, 0.0], &[0.0, 0.0, 0.0], omega, c).unwrap();
        let expect = 1.0 / (4.0 * PI * lambda);
        assert!((g.re - expect).abs() < 1e-12 * expect);
        assert!(g.im.abs() < 1e-12 * expect);
    }

    #[test]
    fn modulus_is_spherical_spreading() {
        let r = [0.1, -0.2, 0.3];
        let s = [0.0, 0.05, 0.0];
        let d = distance(&r, &s);
        for omega in [1.0, 100.0, 1e4] {
            let g = green(&r, &s, omega, 343.0).unwrap();
            assert!((g.norm() - 1.0 / (4.0 * PI * d)).abs() < 1e-14);
        }
    }

    #[test]
    fn coincident_points_are_singular() {
        let p = [0.1, 0.2, 0.3];
        assert!(matches!(green(&p, &p, 1.0, 343.0), Err(NahError::SingularGreen)));
        assert!(matches!(green_dndz(&p, &p, 1.0, 343.0), Err(NahError::SingularGreen)));
    }

    #[test]
    fn dndz_directly_above() {
        let (omega, c, d) = (2000.0, 343.0, 0.04);
        let k = omega / c;
        let g = green(&[0.0, 0.0, d], &[0.0; 3], omega, c).unwrap();
        let dg = green_dndz(&[0.0, 0.0, d], &[0.0; 3], omega, c).unwrap();
        let expect = Complex64::new(-1.0 / d, -k).norm() * g.norm();
        assert!((dg.norm() - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn dndz_vanishes_in_plane() {
        let dg = green_dndz(&[0.3, 0.1, 0.0], &[0.0, 0.0, 0.0], 900.0, 343.0).unwrap();
        assert_eq!(dg, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn dndz_matches_central_difference() {
        let s = [0.01, -0.02, -0.02];
        let (omega, c) = (2.0 * PI * 1200.0, 343.0);
        for r in [[0.0, 0.0, 0.03], [0.1, 0.05, 0.0], [-0.2, 0.3, 0.5]] {
            let h = 1e-6;
            let up = green(&[r[0], r[1], r[2] + h], &s, omega, c).unwrap();
            let dn = green(&[r[0], r[1], r[2] - h], &s, omega, c).unwrap();
            let fd = (up - dn) / (2.0 * h);
            let an = green_dndz(&r, &s, omega, c).unwrap();
            assert!((fd - an).norm() <= 1e-7 * an.norm(), "{fd} vs {an}");
        }
    }

    #[test]
    fn default_shape_and_bound() {
        let cfg = NahConfig::default();
        let omega = 2.0 * PI * 1000.0;
        let p = build_propagator(&cfg, omega).unwrap();
        assert_eq!((p.rows(), p.cols()), (64, 1024));
        let bound = cfg.baffle_factor * omega * cfg.rho0 * cfg.source_grid().cell_area() / (4.0 * PI * cfg.z_h);
        assert!(p.matrix().iter().all(|e| e.norm() <= bound * (1.0 + 1e-12) && e.re.is_finite()));
    }

    #[test]
    fn basis_vector_selects_column() {
        let cfg = NahConfig::default();
        let p = build_propagator(&cfg, 2.0 * PI * 300.0).unwrap();
        let mut v = vec![Complex64::new(0.0, 0.0); 1024];
        let a = Complex64::new(0.3, -1.2);
        v[517] = a;
        let out = p.apply(&v).unwrap();
        for (m, o) in out.iter().enumerate() {
            assert!((o - p.entry(m, 517) * a).norm() <= 1e-15 * o.norm().max(1e-300));
        }
    }

    #[test]
    fn forward_is_linear_and_zero_preserving() {
        let cfg = NahConfig::default();
        let p = build_propagator(&cfg, 2.0 * PI * 700.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v1 = rand_vec(&mut rng, 1024);
        let v2 = rand_vec(&mut rng, 1024);
        let sum: Vec<_> = v1.iter().zip(&v2).map(|(a, b)| a + b).collect();
        let a = p.apply(&v1).unwrap();
        let b = p.apply(&v2).unwrap();
        let ab = p.apply(&sum).unwrap();
        for ((x, y), z) in a.iter().zip(&b).zip(&ab) {
            assert!((x + y - z).norm() <= 1e-12 * z.norm().max(1.0));
        }
        let zero = p.apply(&vec![Complex64::new(0.0, 0.0); 1024]).unwrap();
        assert!(zero.iter().all(|z| z.norm() == 0.0));
        let f = ComplexField::new(16, 64, v1, Quantity::NormalVelocity).unwrap();
        assert_eq!(p.forward(&f).unwrap().shape(), (8, 8));
        assert!(p.forward(&ComplexField::zeros(8, 8, Quantity::NormalVelocity)).is_err());
    }

    #[test]
    fn adjoint_dot_product_test() {
        let cfg = NahConfig::default();
        let p = build_propagator(&cfg, 2.0 * PI * 1500.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let v = rand_vec(&mut rng, 1024);
            let q = rand_vec(&mut rng, 64);
            let lhs = dot(&q, &p.apply(&v).unwrap());
            let rhs = dot(&p.apply_adjoint(&q).unwrap(), &v);
            assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm());
        }
        assert!(p.apply_adjoint(&[Complex64::new(0.0, 0.0); 64]).unwrap().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn scalar_adjoint_is_conjugate() {
        let a = Complex64::new(2.0, -3.0);
        let p = Propagator::from_matrix(1, 1, vec![a], 1.0).unwrap();
        let x = Complex64::new(0.5, 0.25);
        assert_eq!(p.apply_adjoint(&[x]).unwrap()[0], a.conj() * x);
    }

    #[test]
    fn swapping_sources_swaps_columns() {
        let targets = vec![[0.0, 0.0, 0.03], [0.05, 0.01, 0.03]];
        let s1 = vec![[0.0, 0.0, 0.0], [0.02, 0.0, 0.0], [0.0, 0.04, 0.0]];
        let s2 = vec![s1[2], s1[1], s1[0]];
        let a = Propagator::between(&targets, &s1, 1e-4, 3000.0, 343.0, 1.225, 2.0, Exec::Sequential).unwrap();
        let b = Propagator::between(&targets, &s2, 1e-4, 3000.0, 343.0, 1.225, 2.0, Exec::Sequential).unwrap();
        for m in 0..2 {
            assert_eq!(a.entry(m, 0), b.entry(m, 2));
            assert_eq!(a.entry(m, 2), b.entry(m, 0));
            assert_eq!(a.entry(m, 1), b.entry(m, 1));
        }
    }

    #[test]
    fn sequential_and_parallel_assembly_agree() {
        let cfg = NahConfig::default();
        let a = build_propagator_with(&cfg, 4000.0, Exec::Sequential).unwrap();
        let b = build_propagator_with(&cfg, 4000.0, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cache_memoizes() {
        let cache = PropagatorCache::new();
        let cfg = NahConfig::default();
        let a = cache.get(&cfg, 1000.0).unwrap();
        let b = cache.get(&cfg, 1000.0).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        cache.get(&cfg, 1001.0).unwrap();
        assert_eq!(cache.len(), 2);
    }
}
