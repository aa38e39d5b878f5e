//! Compressive equivalent source baseline.
//!
//! Monopoles on a plane retreated behind the source surface explain the
//! hologram through `Gp`; their strengths are recovered by L1-regularized
//! least squares (FISTA) and mapped to surface velocity through `Gv`.
//!
//! The solve runs on a scaled problem: dictionary columns are normalized to
//! unit norm and the hologram to unit peak modulus, so the regularization
//! grid does not depend on physical units.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{Grid, NahConfig};
use crate::error::{NahError, Result};
use crate::field::{ComplexField, Quantity};
use crate::naht;
use crate::par::Exec;
use crate::propagate::{green, green_dndz};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const J: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EsmConfig {
    /// Distance of the source plane behind `z = 0` (m).
    pub retreat_distance: f64,
    /// Equivalent-source grid; `None` reuses the source grid.
    pub es_rows: Option<usize>,
    pub es_cols: Option<usize>,
    pub lambda_grid: Vec<f64>,
    pub fista_iters: usize,
    pub fista_tol: f64,
}

impl Default for EsmConfig {
    fn default() -> Self {
        EsmConfig {
            retreat_distance: 0.02,
            es_rows: None,
            es_cols: None,
            lambda_grid: linspace(0.001, 0.1, 5),
            fista_iters: 2000,
            fista_tol: 1e-6,
        }
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl EsmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.retreat_distance > 0.0) {
            return Err(NahError::Config("retreat_distance must be positive".into()));
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(*l >= 0.0)) {
            return Err(NahError::Config("lambda grid must be non-empty and non-negative".into()));
        }
        if self.lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(NahError::Config("lambda grid must be ascending".into()));
        }
        if matches!(self.es_rows, Some(0)) || matches!(self.es_cols, Some(0)) {
            return Err(NahError::Config("equivalent-source grid must be non-empty".into()));
        }
        Ok(())
    }

    /// Equivalent-source grid spanning the source aperture.
    pub fn es_grid(&self, config: &NahConfig) -> Grid {
        let src = config.source_grid();
        let rows = self.es_rows.unwrap_or(src.rows);
        let cols = self.es_cols.unwrap_or(src.cols);
        Grid {
            rows,
            cols,
            pitch_x: src.width() / cols as f64,
            pitch_y: src.height() / rows as f64,
        }
    }
}

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(NahError::shape(rows * cols, data.len()));
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![ZERO; n * n];
        for i in 0..n {
            data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        CMatrix { rows: n, cols: n, data }
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.data
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn apply_adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.cols];
        for (row, yr) in self.data.chunks_exact(self.cols.max(1)).zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.conj() * yr;
            }
        }
        out
    }

    pub fn column_norms(&self) -> Vec<f64> {
        let mut n = vec![0.0; self.cols];
        for row in self.data.chunks_exact(self.cols.max(1)) {
            for (acc, a) in n.iter_mut().zip(row) {
                *acc += a.norm_sqr();
            }
        }
        n.into_iter().map(f64::sqrt).collect()
    }

    fn scale_columns(&mut self, s: &[f64]) {
        for row in self.data.chunks_exact_mut(self.cols.max(1)) {
            for (a, k) in row.iter_mut().zip(s) {
                *a *= *k;
            }
        }
    }
}

/// Equivalent sources to hologram pressure and to surface velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct EsmDictionary {
    pub gp: CMatrix,
    pub gv: CMatrix,
    pub omega: f64,
}

fn assemble(
    targets: &[[f64; 3]],
    sources: &[[f64; 3]],
    exec: Exec,
    entry: impl Fn(&[f64; 3], &[f64; 3]) -> Result<Complex64> + Sync,
) -> Result<CMatrix> {
    let q = sources.len();
    let mut data = vec![ZERO; targets.len() * q];
    let failed = std::sync::atomic::AtomicBool::new(false);
    if q > 0 {
        exec.for_each_chunk(&mut data, q, |m, row| {
            for (e, s) in row.iter_mut().zip(sources) {
                match entry(&targets[m], s) {
                    Ok(v) => *e = v,
                    Err(_) => failed.store(true, std::sync::atomic::Ordering::Relaxed),
                }
            }
        });
    }
    if failed.into_inner() {
        return Err(NahError::SingularGreen);
    }
    CMatrix::new(targets.len(), q, data)
}

/// `Gp = −jωρ0·g` from the retreated plane to the hologram, and the matching
/// surface velocity `Gv = (∂Gp/∂z)/(jωρ0) = −∂g/∂z` on the source plane. The
/// velocity relation follows the same sign convention as the propagator's
/// `−jωρ0·v·g` kernel, so that the propagator applied to `Gv·q` reproduces
/// `Gp·q`.
pub fn build_dictionary(config: &NahConfig, esm: &EsmConfig, omega: f64, exec: Exec) -> Result<EsmDictionary> {
    config.validate()?;
    esm.validate()?;
    if !(omega > 0.0) {
        return Err(NahError::Config("omega must be positive".into()));
    }
    let es = esm.es_grid(config).points(-esm.retreat_distance);
    let holo = config.hologram_grid().points(config.z_h);
    let src = config.source_grid().points(0.0);
    let (c, rho0) = (config.c, config.rho0);
    let kp = -J * omega * rho0;
    let gp = assemble(&holo, &es, exec, |r, s| Ok(kp * green(r, s, omega, c)?))?;
    let gv = assemble(&src, &es, exec, |r, s| Ok(-green_dndz(r, s, omega, c)?))?;
    Ok(EsmDictionary { gp, gv, omega })
}

/// Largest eigenvalue of `AᴴA` by power iteration from a fixed start.
pub fn lipschitz(a: &CMatrix) -> f64 {
    if a.cols == 0 || a.rows == 0 {
        return 0.0;
    }
    let mut x = vec![Complex64::new(1.0, 0.0); a.cols];
    let mut est = 0.0;
    for _ in 0..1000 {
        let y = a.apply_adjoint(&a.apply(&x));
        let n = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if n == 0.0 {
            return 0.0;
        }
        let xn = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let next = n / xn;
        x = y.into_iter().map(|v| v / n).collect();
        if (next - est).abs() <= 1e-12 * next {
            est = next;
            break;
        }
        est = next;
    }
    est
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FistaReport {
    pub iterations: usize,
    pub objective: f64,
    pub restarts: usize,
    pub converged: bool,
    /// Objective after every iteration.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

fn soft_threshold(v: Complex64, t: f64) -> Complex64 {
    let r = v.norm();
    if r <= t {
        ZERO
    } else {
        v * (1.0 - t / r)
    }
}

fn objective(a: &CMatrix, b: &[Complex64], q: &[Complex64], lambda: f64) -> f64 {
    let r: f64 = a.apply(q).iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    0.5 * r + lambda * q.iter().map(|v| v.norm()).sum::<f64>()
}

fn prox_step(a: &CMatrix, b: &[Complex64], y: &[Complex64], step: f64, lambda: f64) -> Vec<Complex64> {
    let resid: Vec<Complex64> = a.apply(y).iter().zip(b).map(|(x, t)| x - t).collect();
    let grad = a.apply_adjoint(&resid);
    y.iter()
        .zip(&grad)
        .map(|(yi, gi)| soft_threshold(yi - step * gi, step * lambda))
        .collect()
}

/// Minimize `½‖Aq − b‖² + λ‖q‖₁` with FISTA and objective-based restart: an
/// accelerated step that raises the objective is discarded in favour of a
/// plain proximal step from the current iterate, so the objective never
/// increases.
pub fn fista(a: &CMatrix, b: &[Complex64], lambda: f64, iters: usize, tol: f64) -> Result<(Vec<Complex64>, FistaReport)> {
    if b.len() != a.rows {
        return Err(NahError::shape(a.rows, b.len()));
    }
    if !(lambda >= 0.0) {
        return Err(NahError::Config("lambda must be non-negative".into()));
    }
    let mut q = vec![ZERO; a.cols];
    let l = lipschitz(a) * (1.0 + 1e-6);
    let mut report = FistaReport {
        iterations: 0,
        objective: objective(a, b, &q, lambda),
        restarts: 0,
        converged: false,
        trace: Vec::new(),
    };
    if l == 0.0 {
        report.converged = true;
        return Ok((q, report));
    }
    let step = 1.0 / l;
    let mut y = q.clone();
    let mut t = 1.0f64;
    let mut f = report.objective;
    for k in 0..iters {
        let mut next = prox_step(a, b, &y, step, lambda);
        let mut f_next = objective(a, b, &next, lambda);
        if f_next > f {
            report.restarts += 1;
            t = 1.0;
            next = prox_step(a, b, &q, step, lambda);
            f_next = objective(a, b, &next, lambda);
            if f_next > f {
                // Rounding at the optimum; keep the current iterate.
                next = q.clone();
                f_next = f;
            }
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / t_next;
        y = next.iter().zip(&q).map(|(n, o)| n + mom * (n - o)).collect();
        q = next;
        t = t_next;
        let change = (f - f_next).abs() / f.abs().max(f64::MIN_POSITIVE);
        f = f_next;
        report.trace.push(f);
        report.iterations = k + 1;
        if !f.is_finite() {
            break;
        }
        if change < tol {
            report.converged = true;
            break;
        }
    }
    report.objective = f;
    Ok((q, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub lambda: f64,
    /// Mean absolute hologram misfit at physical scale.
    pub mae: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsmResult {
    pub q: Vec<Complex64>,
    pub lambda_chosen: f64,
    pub p_rec: ComplexField,
    pub v_rec: ComplexField,
    pub table: Vec<LambdaRow>,
}

/// Solve for each λ on the grid and keep the one with the smallest hologram
/// MAE. `p_h` is the physical-scale hologram pressure.
pub fn cesm_solve(p_h: &ComplexField, dict: &EsmDictionary, config: &NahConfig, esm: &EsmConfig, exec: Exec) -> Result<EsmResult> {
    esm.validate()?;
    if p_h.len() != dict.gp.rows {
        return Err(NahError::shape(dict.gp.rows, p_h.len()));
    }
    let peak = p_h.max_modulus();
    if peak == 0.0 {
        return Err(NahError::ZeroReference);
    }
    let norms = dict.gp.column_norms();
    let inv: Vec<f64> = norms.iter().map(|&n| if n > 0.0 { 1.0 / n } else { 0.0 }).collect();
    let mut a = dict.gp.clone();
    a.scale_columns(&inv);
    let b: Vec<Complex64> = p_h.values().iter().map(|v| v / peak).collect();

    let solves = exec.map(&esm.lambda_grid, |&lambda| {
        fista(&a, &b, lambda, esm.fista_iters, esm.fista_tol).map(|(qs, rep)| {
            let q: Vec<Complex64> = qs.iter().zip(&inv).map(|(v, k)| v * k * peak).collect();
            let p = dict.gp.apply(&q);
            let mae = p.iter().zip(p_h.values()).map(|(x, y)| (x - y).norm()).sum::<f64>() / p.len() as f64;
            (q, p, mae, rep)
        })
    });

    let mut table = Vec::with_capacity(solves.len());
    let mut best: Option<(usize, f64)> = None;
    let mut outcomes = Vec::with_capacity(solves.len());
    for (i, (s, &lambda)) in solves.into_iter().zip(&esm.lambda_grid).enumerate() {
        let (q, p, mae, rep) = s?;
        let finite = mae.is_finite() && q.iter().all(|v| v.re.is_finite() && v.im.is_finite());
        table.push(LambdaRow {
            lambda,
            mae,
            iterations: rep.iterations,
            converged: rep.converged && finite,
        });
        if finite && best.is_none_or(|(_, m)| mae < m) {
            best = Some((i, mae));
        }
        outcomes.push((q, p));
    }
    let Some((bi, _)) = best else {
        return Err(NahError::SolverFailure(format!("all regularization levels diverged: {table:?}")));
    };
    let (q, p) = outcomes.swap_remove(bi);
    let v = dict.gv.apply(&q);
    let holo = config.hologram_grid();
    let src = config.source_grid();
    Ok(EsmResult {
        lambda_chosen: esm.lambda_grid[bi],
        p_rec: ComplexField::new(holo.rows, holo.cols, p, Quantity::Pressure)?,
        v_rec: ComplexField::new(src.rows, src.cols, v, Quantity::NormalVelocity)?,
        q,
        table,
    })
}

#[derive(Serialize)]
struct ResultJson<'a> {
    id: &'a str,
    lambda_chosen: f64,
    table: &'a [LambdaRow],
}

/// `<dir>/<id>.cesm.json` plus the reconstructed fields as NAHT.
pub fn export_result(dir: impl AsRef<Path>, id: &str, r: &EsmResult, hash: &[u8; 32]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| NahError::io(dir, e))?;
    let json = serde_json::to_string_pretty(&ResultJson {
        id,
        lambda_chosen: r.lambda_chosen,
        table: &r.table,
    })?;
    let path = dir.join(format!("{id}.cesm.json"));
    std::fs::write(&path, json).map_err(|e| NahError::io(&path, e))?;
    naht::write_tensor(dir.join(format!("{id}.cesm.v.naht")), &r.v_rec, hash)?;
    naht::write_tensor(dir.join(format!("{id}.cesm.p.naht")), &r.p_rec, hash)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagate::build_propagator;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        (0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn lambda_grid_is_linear() {
        let g = EsmConfig::default().lambda_grid;
        assert_eq!(g.len(), 5);
        let want = [0.001, 0.02575, 0.0505, 0.07525, 0.1];
        for (a, b) in g.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn config_validation() {
        let mut e = EsmConfig::default();
        e.retreat_distance = 0.0;
        assert!(e.validate().is_err());
        let mut e = EsmConfig::default();
        e.lambda_grid = vec![0.1, 0.01];
        assert!(e.validate().is_err());
    }

    #[test]
    fn identity_dictionary_soft_thresholds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b: Vec<Complex64> = rand_vec(30, &mut rng).into_iter().map(|v| v + v / v.norm()).collect();
        let lambda = 0.5;
        let (q, _) = fista(&CMatrix::identity(30), &b, lambda, 2000, 1e-6).unwrap();
        for (qi, bi) in q.iter().zip(&b) {
            assert!(bi.norm() > lambda);
            let want = bi * (1.0 - lambda / bi.norm());
            assert!((qi - want).norm() < 1e-8, "{qi} {want}");
        }
    }

    #[test]
    fn large_lambda_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = CMatrix::new(8, 20, rand_vec(160, &mut rng)).unwrap();
        let b = rand_vec(8, &mut rng);
        let bound = a.apply_adjoint(&b).iter().map(|v| v.norm()).fold(0.0, f64::max);
        let (q, _) = fista(&a, &b, bound, 500, 1e-6).unwrap();
        assert!(q.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn zero_lambda_matches_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 12;
        let mut data = rand_vec(n * n, &mut rng);
        for v in data.iter_mut() {
            *v *= 0.1;
        }
        for i in 0..n {
            data[i * n + i] += 1.0;
        }
        let a = CMatrix::new(n, n, data.clone()).unwrap();
        let b = rand_vec(n, &mut rng);
        let (q, _) = fista(&a, &b, 0.0, 2000, 0.0).unwrap();
        let m = DMatrix::from_row_slice(n, n, &data);
        let x = m.lu().solve(&DVector::from_column_slice(&b)).unwrap();
        for (qi, xi) in q.iter().zip(x.iter()) {
            assert!((qi - xi).norm() < 1e-6);
        }
    }

    #[test]
    fn zero_matrix_returns_zero() {
        let a = CMatrix::new(3, 4, vec![ZERO; 12]).unwrap();
        let (q, _) = fista(&a, &[c(1.0, 0.0); 3], 0.0, 10, 1e-6).unwrap();
        assert!(q.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..5 {
            let a = CMatrix::new(16, 60, rand_vec(960, &mut rng)).unwrap();
            let b = rand_vec(16, &mut rng);
            let (_, rep) = fista(&a, &b, 0.05 * (trial + 1) as f64, 1500, 0.0).unwrap();
            for w in rep.trace.windows(2) {
                assert!(w[1] <= w[0], "{} > {}", w[1], w[0]);
            }
        }
    }

    #[test]
    fn solution_is_positively_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = CMatrix::new(10, 25, rand_vec(250, &mut rng)).unwrap();
        let b = rand_vec(10, &mut rng);
        let (q1, _) = fista(&a, &b, 0.1, 300, 0.0).unwrap();
        let alpha = 3.5;
        let bs: Vec<Complex64> = b.iter().map(|v| v * alpha).collect();
        let (q2, _) = fista(&a, &bs, 0.1 * alpha, 300, 0.0).unwrap();
        for (x, y) in q1.iter().zip(&q2) {
            assert!((x * alpha - y).norm() < 1e-9 * (1.0 + y.norm()));
        }
    }

    fn dict(omega: f64) -> (NahConfig, EsmConfig, EsmDictionary) {
        let cfg = NahConfig::default();
        let esm = EsmConfig::default();
        let d = build_dictionary(&cfg, &esm, omega, Exec::Parallel).unwrap();
        (cfg, esm, d)
    }

    #[test]
    fn dictionary_shapes_and_columns() {
        let (_, _, d) = dict(2.0 * std::f64::consts::PI * 500.0);
        assert_eq!((d.gp.rows, d.gp.cols), (64, 1024));
        assert_eq!((d.gv.rows, d.gv.cols), (1024, 1024));
        assert!(d.gp.column_norms().iter().all(|n| *n > 0.0 && n.is_finite()));
    }

    #[test]
    fn velocity_dictionary_is_euler_consistent() {
        // v = (∂p/∂z)/(jωρ0) for the field p = −jωρ0·g of each source.
        let omega = 2.0 * std::f64::consts::PI * 640.0;
        let (cfg, esm, d) = dict(omega);
        let es = esm.es_grid(&cfg).points(-esm.retreat_distance);
        let src = cfg.source_grid().points(0.0);
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let (n, q) = (rng.random_range(0..1024), rng.random_range(0..1024));
            let p_at = |z: f64| {
                let r = [src[n][0], src[n][1], z];
                -J * omega * cfg.rho0 * green(&r, &es[q], omega, cfg.c).unwrap()
            };
            let dpdz = (p_at(h) - p_at(-h)) / (2.0 * h);
            let want = dpdz / (J * omega * cfg.rho0);
            assert!((d.gv.get(n, q) - want).norm() <= 1e-6 * want.norm(), "{} {}", d.gv.get(n, q), want);
        }
    }

    #[test]
    fn propagated_velocity_reproduces_pressure() {
        // The propagator applied to Gv·q should approximate Gp·q; the sign of
        // Gv decides whether the correlation is +1 or −1.
        let omega = 2.0 * std::f64::consts::PI * 400.0;
        let (cfg, _, d) = dict(omega);
        let p = build_propagator(&cfg, omega).unwrap();
        let mut q = vec![ZERO; 1024];
        q[8 * 64 + 32] = c(1.0, 0.0);
        let v = d.gv.apply(&q);
        let direct = d.gp.apply(&q);
        let via = p.apply(&v).unwrap();
        let dot: Complex64 = via.iter().zip(&direct).map(|(a, b)| a.conj() * b).sum();
        let na = via.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let nb = direct.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let corr = dot / (na * nb);
        assert!(corr.re > 0.9, "{corr}");
    }

    #[test]
    fn planted_atom_dominates_l1_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (m, n) = (32, 128);
        let mut a = CMatrix::new(m, n, rand_vec(m * n, &mut rng)).unwrap();
        let inv: Vec<f64> = a.column_norms().iter().map(|v| 1.0 / v).collect();
        a.scale_columns(&inv);
        let atom = 77;
        let b: Vec<Complex64> = a.column(atom).iter().map(|v| v * c(0.6, -0.8)).collect();
        let (q, _) = fista(&a, &b, 0.01, 2000, 1e-10).unwrap();
        let total: f64 = q.iter().map(|v| v.norm()).sum();
        assert!(q[atom].norm() >= 0.9 * total, "{} of {}", q[atom].norm(), total);
    }

    #[test]
    fn solve_picks_smallest_misfit() {
        let omega = 2.0 * std::f64::consts::PI * 500.0;
        let cfg = NahConfig::default();
        let esm = EsmConfig {
            es_rows: Some(4),
            es_cols: Some(8),
            ..EsmConfig::default()
        };
        let d = build_dictionary(&cfg, &esm, omega, Exec::Parallel).unwrap();
        let atom = 2 * 8 + 5;
        let p = ComplexField::new(8, 8, d.gp.column(atom), Quantity::Pressure).unwrap();
        let r = cesm_solve(&p, &d, &cfg, &esm, Exec::Parallel).unwrap();
        let total: f64 = r.q.iter().map(|v| v.norm()).sum();
        assert!(r.q[atom].norm() >= 0.9 * total, "{} of {}", r.q[atom].norm(), total);
        let best = r.table.iter().map(|t| t.mae).fold(f64::INFINITY, f64::min);
        let chosen = r.table.iter().find(|t| t.lambda == r.lambda_chosen).unwrap();
        assert_eq!(chosen.mae, best);
        assert_eq!(r.v_rec.shape(), (16, 64));
    }

    #[test]
    fn solve_is_deterministic_and_exports() {
        let omega = 2.0 * std::f64::consts::PI * 300.0;
        let (cfg, mut esm, d) = dict(omega);
        esm.fista_iters = 100;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = ComplexField::new(8, 8, rand_vec(64, &mut rng), Quantity::Pressure).unwrap();
        let a = cesm_solve(&p, &d, &cfg, &esm, Exec::Parallel).unwrap();
        let b = cesm_solve(&p, &d, &cfg, &esm, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        export_result(dir.path(), "x", &a, &cfg.geometry_hash()).unwrap();
        let v = naht::read_tensor(dir.path().join("x.cesm.v.naht")).unwrap();
        assert_eq!(v, a.v_rec);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("x.cesm.json")).unwrap()).unwrap();
        assert_eq!(json["table"].as_array().unwrap().len(), 5);
    }

    #[test]
    fn zero_hologram_is_rejected() {
        let (cfg, esm, d) = dict(1000.0);
        let p = ComplexField::zeros(8, 8, Quantity::Pressure);
        assert!(matches!(cesm_solve(&p, &d, &cfg, &esm, Exec::Sequential), Err(NahError::ZeroReference)));
    }
}
