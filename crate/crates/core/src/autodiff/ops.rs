use std::sync::Arc;

use num_complex::Complex64;

use super::{check_same_shape, CTensor, Var, ZERO};
use crate::error::{NahError, Result};
use crate::propagate::Propagator;

const J: Complex64 = Complex64::new(0.0, 1.0);

fn cardioid_value(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        ZERO
    } else {
        0.5 * (1.0 + z.re / r) * z
    }
}

/// Wirtinger partials `(∂f/∂z, ∂f/∂z̄)` of the cardioid at `z`. At the origin
/// the positive-real limit `(½, 0)` is used.
pub fn cardioid_partials(z: Complex64) -> (Complex64, Complex64) {
    let r = z.norm();
    if r == 0.0 {
        return (Complex64::new(0.5, 0.0), ZERO);
    }
    let (cos, sin) = (z.re / r, z.im / r);
    let df_dz = 0.5 + 0.5 * cos + 0.25 * J * sin;
    // z / z̄ = e^{2j∠z}
    let rot = Complex64::new(cos * cos - sin * sin, 2.0 * sin * cos);
    let df_dzbar = -0.25 * J * sin * rot;
    (df_dz, df_dzbar)
}

/// `f(z) = ½(1 + cos∠z)·z`, elementwise.
pub fn cardioid(z: Var<'_>) -> Var<'_> {
    let zv = z.value();
    let out = CTensor {
        shape: zv.shape.clone(),
        values: zv.values.iter().map(|&v| cardioid_value(v)).collect(),
    };
    z.tape().push_op(
        out,
        &[z],
        Box::new(move |gy, _| {
            let values = zv
                .values
                .iter()
                .zip(&gy.values)
                .map(|(&z, &g)| {
                    let (fz, fzb) = cardioid_partials(z);
                    fz.conj() * g + fzb * g.conj()
                })
                .collect();
            vec![Some(CTensor {
                shape: zv.shape.clone(),
                values,
            })]
        }),
    )
}

/// Concatenate `[C1, ...]` and `[C2, ...]` along the leading axis.
pub fn concat<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let (av, bv) = (a.value(), b.value());
    if av.shape.is_empty() || bv.shape.is_empty() || av.shape[1..] != bv.shape[1..] {
        return Err(NahError::Config(format!(
            "concat: incompatible shapes {:?} and {:?}",
            av.shape, bv.shape
        )));
    }
    let mut shape = av.shape.clone();
    shape[0] += bv.shape[0];
    let mut values = Vec::with_capacity(av.len() + bv.len());
    values.extend_from_slice(&av.values);
    values.extend_from_slice(&bv.values);
    let split = av.len();
    let (sa, sb) = (av.shape.clone(), bv.shape.clone());
    Ok(a.tape().push_op(
        CTensor { shape, values },
        &[a, b],
        Box::new(move |g, _| {
            vec![
                Some(CTensor {
                    shape: sa.clone(),
                    values: g.values[..split].to_vec(),
                }),
                Some(CTensor {
                    shape: sb.clone(),
                    values: g.values[split..].to_vec(),
                }),
            ]
        }),
    ))
}

/// `c · z` for a single-entry `c`.
pub fn scale<'t>(z: Var<'t>, c: Var<'t>) -> Result<Var<'t>> {
    let (zv, cv) = (z.value(), c.value());
    if cv.len() != 1 {
        return Err(NahError::shape(1, cv.len()));
    }
    let k = cv.values[0];
    let out = CTensor {
        shape: zv.shape.clone(),
        values: zv.values.iter().map(|v| k * v).collect(),
    };
    Ok(z.tape().push_op(
        out,
        &[z, c],
        Box::new(move |g, needs| {
            let gz = needs[0].then(|| CTensor {
                shape: zv.shape.clone(),
                values: g.values.iter().map(|v| k.conj() * v).collect(),
            });
            let gc = needs[1].then(|| CTensor {
                shape: cv.shape.clone(),
                values: vec![zv.values.iter().zip(&g.values).map(|(z, g)| z.conj() * g).sum()],
            });
            vec![gz, gc]
        }),
    ))
}

/// `P · v` with a constant propagator; output shaped `[1, rows, cols]` of the
/// propagator's target grid.
pub fn linear_apply<'t>(p: &Arc<Propagator>, v: Var<'t>) -> Result<Var<'t>> {
    let vv = v.value();
    let y = p.apply(&vv.values)?;
    let (r, c) = p.output_shape();
    let out = CTensor::new(vec![1, r, c], y)?;
    let p = Arc::clone(p);
    let vshape = vv.shape.clone();
    Ok(v.tape().push_op(
        out,
        &[v],
        Box::new(move |g, _| {
            let values = p.apply_adjoint(&g.values).expect("cotangent matches propagator rows");
            vec![Some(CTensor {
                shape: vshape.clone(),
                values,
            })]
        }),
    ))
}

/// Elementwise sum of two same-shaped values.
pub fn add<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let (av, bv) = (a.value(), b.value());
    check_same_shape(&av, &bv)?;
    let out = CTensor {
        shape: av.shape.clone(),
        values: av.values.iter().zip(&bv.values).map(|(x, y)| x + y).collect(),
    };
    Ok(a.tape().push_op(out, &[a, b], Box::new(|g, _| vec![Some(g.clone()), Some(g.clone())])))
}

fn loss_op<'t>(
    pred: Var<'t>,
    target: Var<'t>,
    value: impl Fn(&[Complex64]) -> f64,
    slope: impl Fn(Complex64) -> Complex64 + 'static,
) -> Result<Var<'t>> {
    let (pv, tv) = (pred.value(), target.value());
    check_same_shape(&pv, &tv)?;
    if pv.is_empty() {
        return Err(NahError::EmptyInput);
    }
    let err: Vec<Complex64> = pv.values.iter().zip(&tv.values).map(|(p, t)| p - t).collect();
    let loss = value(&err);
    let shape = pv.shape.clone();
    Ok(pred.tape().push_op(
        CTensor::scalar(Complex64::new(loss, 0.0)),
        &[pred, target],
        Box::new(move |g, needs| {
            let gl = g.values[0].re;
            let gp: Vec<Complex64> = err.iter().map(|&e| gl * slope(e)).collect();
            let gt = needs[1].then(|| CTensor {
                shape: shape.clone(),
                values: gp.iter().map(|v| -v).collect(),
            });
            vec![
                Some(CTensor {
                    shape: shape.clone(),
                    values: gp,
                }),
                gt,
            ]
        }),
    ))
}

/// `(1/N)·Σ|pred − target|²`.
pub fn mse_loss<'t>(pred: Var<'t>, target: Var<'t>) -> Result<Var<'t>> {
    let n = pred.value().len() as f64;
    loss_op(
        pred,
        target,
        move |e| e.iter().map(|v| v.norm_sqr()).sum::<f64>() / n,
        move |e| 2.0 * e / n,
    )
}

/// `(1/M)·Σ|pred − target|`, with zero slope at exact matches.
pub fn mae_loss<'t>(pred: Var<'t>, target: Var<'t>) -> Result<Var<'t>> {
    let m = pred.value().len() as f64;
    loss_op(
        pred,
        target,
        move |e| e.iter().map(|v| v.norm()).sum::<f64>() / m,
        move |e| {
            let r = e.norm();
            if r == 0.0 {
                ZERO
            } else {
                e / (r * m)
            }
        },
    )
}
