//! Central finite-difference gradient checks.

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CTensor, Tape, Var};
use crate::error::{NahError, Result};

#[derive(Debug, Clone)]
pub struct FdOptions {
    /// Perturbation applied to each real or imaginary component.
    pub h: f64,
    /// Lower bound on the denominator of the relative error.
    pub floor: f64,
    /// Check a random subset of this many components instead of all.
    pub max_components: Option<usize>,
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions {
            h: 1e-6,
            floor: 1e-5,
            max_components: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(input, entry, imaginary)` of the worst component.
    pub worst: Option<(usize, usize, bool)>,
}

fn eval<F>(inputs: &[CTensor], f: &F) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let l = f(&tape, &vars)?;
    Ok(l.value().values()[0].re)
}

/// Compare the analytic gradient of the real scalar `f(inputs)` with central
/// differences on every (or a sampled subset of) real/imaginary component.
pub fn check<F>(inputs: &[CTensor], f: F, opts: &FdOptions) -> Result<FdReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let analytic: Vec<CTensor> = {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let l = f(&tape, &vars)?;
        let g = tape.backward(l)?;
        vars.iter().map(|&v| g.get(v).cloned().ok_or(NahError::NoGraph)).collect::<Result<_>>()?
    };

    let mut components = Vec::new();
    for (i, t) in inputs.iter().enumerate() {
        for j in 0..t.len() {
            components.push((i, j, false));
            components.push((i, j, true));
        }
    }
    if let Some(k) = opts.max_components {
        if k < components.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut picked: Vec<usize> = sample(&mut rng, components.len(), k).into_vec();
            picked.sort_unstable();
            components = picked.into_iter().map(|p| components[p]).collect();
        }
    }

    let mut report = FdReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    let mut work = inputs.to_vec();
    for &(i, j, imag) in &components {
        let delta = if imag {
            Complex64::new(0.0, opts.h)
        } else {
            Complex64::new(opts.h, 0.0)
        };
        let orig = work[i].values()[j];
        work[i].values_mut()[j] = orig + delta;
        let plus = eval(&work, &f)?;
        work[i].values_mut()[j] = orig - delta;
        let minus = eval(&work, &f)?;
        work[i].values_mut()[j] = orig;

        let fd = (plus - minus) / (2.0 * opts.h);
        let g = analytic[i].values()[j];
        let a = if imag { g.im } else { g.re };
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(opts.floor);
        report.checked += 1;
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = rel;
            report.worst = Some((i, j, imag));
        }
    }
    Ok(report)
}
