use std::rc::Rc;

use num_complex::Complex64;

use super::gemm::{conj, gemm, View};
use super::{CTensor, Var, ZERO};
use crate::error::{NahError, Result};

fn dims3(t: &CTensor, what: &str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(NahError::Config(format!("{what}: expected [C, H, W], got {s:?}"))),
    }
}

fn dims4(t: &CTensor, what: &str) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [a, b, c, d] => Ok((a, b, c, d)),
        ref s => Err(NahError::Config(format!("{what}: expected a rank-4 kernel, got {s:?}"))),
    }
}

fn check_bias(b: &CTensor, channels: usize) -> Result<()> {
    if b.shape() != [channels] {
        return Err(NahError::Config(format!(
            "bias shape {:?} does not match {channels} output channels",
            b.shape()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy)]
struct Geometry {
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn k(&self) -> usize {
        self.ci * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.ho * self.wo
    }

    /// Input index for kernel row `kr` (flattened `c, i, j`) and output
    /// position `q`, or `None` in the padding.
    fn source(&self, kr: usize, q: usize) -> Option<usize> {
        let (c, ij) = (kr / (self.kh * self.kw), kr % (self.kh * self.kw));
        let (i, j) = (ij / self.kw, ij % self.kw);
        let (oh, ow) = (q / self.wo, q % self.wo);
        let y = (oh * self.sh + i).checked_sub(self.ph)?;
        let x = (ow * self.sw + j).checked_sub(self.pw)?;
        (y < self.h && x < self.w).then(|| (c * self.h + y) * self.w + x)
    }

    fn im2col(&self, x: &[Complex64]) -> Vec<Complex64> {
        let p = self.p();
        let mut cols = vec![ZERO; self.k() * p];
        for kr in 0..self.k() {
            for q in 0..p {
                if let Some(s) = self.source(kr, q) {
                    cols[kr * p + q] = x[s];
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[Complex64]) -> Vec<Complex64> {
        let p = self.p();
        let mut x = vec![ZERO; self.ci * self.h * self.w];
        for kr in 0..self.k() {
            for q in 0..p {
                if let Some(s) = self.source(kr, q) {
                    x[s] += cols[kr * p + q];
                }
            }
        }
        x
    }
}

/// Complex cross-correlation: `x [C_in, H, W]`, `w [C_out, C_in, kH, kW]`,
/// `b [C_out]`.
pub fn conv2d<'t>(
    x: Var<'t>,
    w: Var<'t>,
    b: Var<'t>,
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<Var<'t>> {
    let (xv, wv, bv) = (x.value(), w.value(), b.value());
    let (ci, h, wd) = dims3(&xv, "conv2d input")?;
    let (co, wci, kh, kw) = dims4(&wv, "conv2d kernel")?;
    if wci != ci {
        return Err(NahError::Config(format!("conv2d: kernel expects {wci} channels, input has {ci}")));
    }
    check_bias(&bv, co)?;
    if stride.0 == 0 || stride.1 == 0 || h + 2 * padding.0 < kh || wd + 2 * padding.1 < kw {
        return Err(NahError::Config("conv2d: incompatible stride, padding or kernel size".into()));
    }
    let g = Geometry {
        ci,
        h,
        w: wd,
        kh,
        kw,
        sh: stride.0,
        sw: stride.1,
        ph: padding.0,
        pw: padding.1,
        ho: (h + 2 * padding.0 - kh) / stride.0 + 1,
        wo: (wd + 2 * padding.1 - kw) / stride.1 + 1,
    };
    let (k, p) = (g.k(), g.p());
    let cols = Rc::new(g.im2col(xv.values()));
    let mut y = vec![ZERO; co * p];
    gemm(co, k, p, View::rows(wv.values(), k), View::rows(&cols, p), &mut y, false);
    for (o, row) in y.chunks_exact_mut(p).enumerate() {
        let bo = bv.values()[o];
        row.iter_mut().for_each(|v| *v += bo);
    }
    let out = CTensor::new(vec![co, g.ho, g.wo], y)?;

    let (wshape, bshape) = (wv.shape().to_vec(), bv.shape().to_vec());
    Ok(x.tape().push_op(
        out,
        &[x, w, b],
        Box::new(move |gy, needs| {
            let gyv = gy.values();
            let gx = needs[0].then(|| {
                let wc = conj(wv.values());
                let mut gcols = vec![ZERO; k * p];
                gemm(k, co, p, View::transposed(&wc, k), View::rows(gyv, p), &mut gcols, false);
                CTensor {
                    shape: vec![ci, h, wd],
                    values: g.col2im(&gcols),
                }
            });
            let gw = needs[1].then(|| {
                let cc = conj(&cols);
                let mut gw = vec![ZERO; co * k];
                gemm(co, p, k, View::rows(gyv, p), View::transposed(&cc, p), &mut gw, false);
                CTensor {
                    shape: wshape.clone(),
                    values: gw,
                }
            });
            let gb = needs[2].then(|| CTensor {
                shape: bshape.clone(),
                values: gyv.chunks_exact(p.max(1)).map(|r| r.iter().sum()).collect(),
            });
            vec![gx, gw, gb]
        }),
    ))
}

/// Transposed convolution with kernel size equal to the stride:
/// `x [C_in, H, W]`, `w [C_in, C_out, sH, sW]`, `b [C_out]`, output
/// `[C_out, H·sH, W·sW]`.
pub fn upconv2d<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>, stride: (usize, usize)) -> Result<Var<'t>> {
    let (xv, wv, bv) = (x.value(), w.value(), b.value());
    let (ci, h, wd) = dims3(&xv, "upconv2d input")?;
    let (wci, co, sh, sw) = dims4(&wv, "upconv2d kernel")?;
    if wci != ci {
        return Err(NahError::Config(format!("upconv2d: kernel expects {wci} channels, input has {ci}")));
    }
    if (sh, sw) != stride || sh == 0 || sw == 0 {
        return Err(NahError::Config(format!(
            "upconv2d: kernel {sh}x{sw} must equal stride {stride:?}"
        )));
    }
    check_bias(&bv, co)?;
    let hw = h * wd;
    let css = co * sh * sw;
    let (ho, wo) = (h * sh, wd * sw);

    // ycols[(o, i, j), q] = Σ_c w[c, (o, i, j)] · x[c, q]
    let mut ycols = vec![ZERO; css * hw];
    gemm(css, ci, hw, View::transposed(wv.values(), css), View::rows(xv.values(), hw), &mut ycols, false);
    let scatter = move |r: usize, q: usize| {
        let (o, ij) = (r / (sh * sw), r % (sh * sw));
        let (i, j) = (ij / sw, ij % sw);
        let (yy, xx) = (q / wd, q % wd);
        (o * ho + yy * sh + i) * wo + xx * sw + j
    };
    let mut y = vec![ZERO; co * ho * wo];
    for r in 0..css {
        let bo = bv.values()[r / (sh * sw)];
        for q in 0..hw {
            y[scatter(r, q)] = ycols[r * hw + q] + bo;
        }
    }
    let out = CTensor::new(vec![co, ho, wo], y)?;

    let (wshape, bshape) = (wv.shape().to_vec(), bv.shape().to_vec());
    Ok(x.tape().push_op(
        out,
        &[x, w, b],
        Box::new(move |gy, needs| {
            let gyv = gy.values();
            let mut gcols = vec![ZERO; css * hw];
            for r in 0..css {
                for q in 0..hw {
                    gcols[r * hw + q] = gyv[scatter(r, q)];
                }
            }
            let gx = needs[0].then(|| {
                let wc = conj(wv.values());
                let mut gx = vec![ZERO; ci * hw];
                gemm(ci, css, hw, View::rows(&wc, css), View::rows(&gcols, hw), &mut gx, false);
                CTensor {
                    shape: vec![ci, h, wd],
                    values: gx,
                }
            });
            let gw = needs[1].then(|| {
                let xc = conj(xv.values());
                let mut gw = vec![ZERO; ci * css];
                gemm(ci, hw, css, View::rows(&xc, hw), View::transposed(&gcols, hw), &mut gw, false);
                CTensor {
                    shape: wshape.clone(),
                    values: gw,
                }
            });
            let gb = needs[2].then(|| CTensor {
                shape: bshape.clone(),
                values: gcols
                    .chunks_exact((sh * sw * hw).max(1))
                    .map(|r| r.iter().sum())
                    .collect(),
            });
            vec![gx, gw, gb]
        }),
    ))
}
