//! Network layers built on the graph ops, plus the double-backprop
//! input-gradient-norm helpers used by gradient-penalty training.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{AutodiffError, Result};
use crate::graph::Var;
use crate::kernels::ColGeom;
use crate::param::Parameter;

/// Glorot-uniform initial weights.
pub fn glorot_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
}

/// He-normal initial weights (ReLU-family layers).
pub fn he_normal(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// Fully connected layer: y = x W + b with x: (M, in), W: (in, out).
pub struct Dense {
    pub w: Parameter,
    pub b: Parameter,
}

impl Dense {
    pub fn new(name: &str, n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = glorot_uniform(rng, n_in, n_out, n_in * n_out);
        Dense {
            w: Parameter::new(format!("{name}.weight"), &[n_in, n_out], w),
            b: Parameter::new(format!("{name}.bias"), &[1, n_out], vec![0.0; n_out]),
        }
    }

    pub fn forward(&self, x: &Var) -> Result<Var> {
        let g = x.graph().clone();
        let y = x.matmul(&g.param(&self.w))?;
        let m = y.shape()[0];
        y.add(&g.param(&self.b).broadcast_row(m)?)
    }

    pub fn params(&self) -> Vec<Parameter> {
        vec![self.w.clone(), self.b.clone()]
    }
}

/// 1-D convolution over (B, C_in, L) inputs, implemented as im2col + matmul.
/// Output length is floor((L + 2*pad - k)/stride) + 1.
pub struct Conv1d {
    pub w: Parameter,
    pub b: Parameter,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1d {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = c_in * k;
        let w = he_normal(rng, fan_in, c_out * fan_in);
        Conv1d {
            w: Parameter::new(format!("{name}.weight"), &[c_out, fan_in], w),
            b: Parameter::new(format!("{name}.bias"), &[1, c_out], vec![0.0; c_out]),
            c_in,
            c_out,
            k,
            stride,
            pad,
        }
    }

    pub fn out_len(&self, l_in: usize) -> Option<usize> {
        let lp = l_in + 2 * self.pad;
        if lp < self.k {
            return None;
        }
        Some((lp - self.k) / self.stride + 1)
    }

    pub fn forward(&self, x: &Var) -> Result<Var> {
        let g = x.graph().clone();
        let s = x.shape();
        if s.len() != 3 || s[1] != self.c_in {
            return Err(AutodiffError::BadShape {
                op: "conv1d",
                expected: "(batch, c_in, length)",
                got: s,
            });
        }
        let (batch, l_in) = (s[0], s[2]);
        let geom = ColGeom::new(batch, self.c_in, l_in + 2 * self.pad, self.k, self.stride)
            .ok_or(AutodiffError::BadShape {
                op: "conv1d",
                expected: "padded length >= kernel",
                got: x.shape(),
            })?;
        let cols = x.pad1d(self.pad)?.im2col_geom(geom)?; // (B*Lout, Cin*K)
        let y = cols.matmul(&g.param(&self.w).t()?)?; // (B*Lout, Cout)
        let y = y.add(&g.param(&self.b).broadcast_row(batch * geom.lout)?)?;
        y.reshape(&[batch, geom.lout, self.c_out])?.swap_axes12()
    }

    pub fn params(&self) -> Vec<Parameter> {
        vec![self.w.clone(), self.b.clone()]
    }
}

/// Transposed 1-D convolution (the adjoint map of `Conv1d` in its input).
/// Output length is (L-1)*stride + k - 2*pad + out_pad, with out_pad < stride
/// disambiguating lengths that stride-s convolution collapses.
pub struct Conv1dTranspose {
    pub w: Parameter,
    pub b: Parameter,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_pad: usize,
}

impl Conv1dTranspose {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        out_pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(out_pad < stride, "out_pad must be < stride");
        let fan_in = c_in * k;
        let w = he_normal(rng, fan_in, c_out * fan_in);
        Conv1dTranspose {
            w: Parameter::new(format!("{name}.weight"), &[c_in, c_out * k], w),
            b: Parameter::new(format!("{name}.bias"), &[1, c_out], vec![0.0; c_out]),
            c_in,
            c_out,
            k,
            stride,
            pad,
            out_pad,
        }
    }

    pub fn out_len(&self, l_in: usize) -> usize {
        (l_in - 1) * self.stride + self.k + self.out_pad - 2 * self.pad
    }

    pub fn forward(&self, x: &Var) -> Result<Var> {
        let g = x.graph().clone();
        let s = x.shape();
        if s.len() != 3 || s[1] != self.c_in {
            return Err(AutodiffError::BadShape {
                op: "conv1d_transpose",
                expected: "(batch, c_in, length)",
                got: s,
            });
        }
        let (batch, l_in) = (s[0], s[2]);
        // scatter length before removing `pad` from each side
        let l_full = (l_in - 1) * self.stride + self.k + self.out_pad;
        let geom = ColGeom {
            batch,
            ch: self.c_out,
            len: l_full,
            k: self.k,
            stride: self.stride,
            lout: l_in,
        };
        let x_mat = x.swap_axes12()?.reshape(&[batch * l_in, self.c_in])?;
        let cols = x_mat.matmul(&g.param(&self.w))?; // (B*Lin, Cout*K)
        let y = cols.col2im(geom)?.crop1d(self.pad)?; // (B, Cout, Lout)
        let l_out = self.out_len(l_in);
        let y_mat = y.swap_axes12()?.reshape(&[batch * l_out, self.c_out])?;
        let y_mat = y_mat.add(&g.param(&self.b).broadcast_row(batch * l_out)?)?;
        y_mat.reshape(&[batch, l_out, self.c_out])?.swap_axes12()
    }

    pub fn params(&self) -> Vec<Parameter> {
        vec![self.w.clone(), self.b.clone()]
    }
}

/// Per-channel batch normalization over (B, C, L), statistics taken across
/// batch and length. Running statistics are used at eval time.
pub struct BatchNorm1d {
    pub gamma: Parameter,
    pub beta: Parameter,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    ch: usize,
}

impl BatchNorm1d {
    pub fn new(name: &str, ch: usize, momentum: f64, eps: f64) -> Self {
        BatchNorm1d {
            gamma: Parameter::new(format!("{name}.gamma"), &[1, ch], vec![1.0; ch]),
            beta: Parameter::new(format!("{name}.beta"), &[1, ch], vec![0.0; ch]),
            running_mean: vec![0.0; ch],
            running_var: vec![1.0; ch],
            momentum,
            eps,
            ch,
        }
    }

    pub fn forward(&mut self, x: &Var, train: bool) -> Result<Var> {
        let g = x.graph().clone();
        let s = x.shape();
        if s.len() != 3 || s[1] != self.ch {
            return Err(AutodiffError::BadShape {
                op: "batchnorm1d",
                expected: "(batch, ch, length)",
                got: s,
            });
        }
        let (b, c, l) = (s[0], s[1], s[2]);
        let rows = b * l;
        let x_mat = x.swap_axes12()?.reshape(&[rows, c])?;
        let (mu, var) = if train {
            let mu = x_mat.sum_axis0()?.scale(1.0 / rows as f64); // (1,C)
            let centered = x_mat.sub(&mu.broadcast_row(rows)?)?;
            let var = centered.mul(&centered)?.sum_axis0()?.scale(1.0 / rows as f64);
            let (mv, vv) = (mu.value(), var.value());
            for i in 0..c {
                self.running_mean[i] =
                    self.momentum * self.running_mean[i] + (1.0 - self.momentum) * mv[i];
                self.running_var[i] =
                    self.momentum * self.running_var[i] + (1.0 - self.momentum) * vv[i];
            }
            (mu, var)
        } else {
            (
                g.constant(&[1, c], self.running_mean.clone()),
                g.constant(&[1, c], self.running_var.clone()),
            )
        };
        let inv = var.add_scalar(self.eps).sqrt0().recip0().broadcast_row(rows)?;
        let xhat = x_mat.sub(&mu.broadcast_row(rows)?)?.mul(&inv)?;
        let y = xhat
            .mul(&g.param(&self.gamma).broadcast_row(rows)?)?
            .add(&g.param(&self.beta).broadcast_row(rows)?)?;
        y.reshape(&[b, l, c])?.swap_axes12()
    }

    pub fn params(&self) -> Vec<Parameter> {
        vec![self.gamma.clone(), self.beta.clone()]
    }
}

/// Inverted dropout; identity at eval time.
pub struct Dropout {
    pub p: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(p: f64, rng: ChaCha8Rng) -> Self {
        assert!((0.0..1.0).contains(&p));
        Dropout { p, rng }
    }

    pub fn forward(&mut self, x: &Var, train: bool) -> Result<Var> {
        if !train || self.p == 0.0 {
            return Ok(x.clone());
        }
        let keep = 1.0 - self.p;
        let n = x.shape().iter().product();
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if self.rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let m = x.graph().constant(&x.shape(), mask);
        x.mul(&m)
    }
}

/// Per-row L2 norms of d(output)/d(input), recorded on the graph.
///
/// `output` must be (B,1) with row b depending only on row b of `x`
/// (no cross-row layers on the path). Returns norms of shape (B,1).
/// Rows with exactly zero gradient get norm 0 with subgradient 0 (logged).
pub fn input_gradient_norms(output: &Var, x: &Var) -> Result<Var> {
    let g = output.graph().clone();
    let s = output.shape();
    if s.len() != 2 || s[1] != 1 {
        return Err(AutodiffError::BadShape {
            op: "input_gradient_norms",
            expected: "(batch, 1) critic output",
            got: s,
        });
    }
    let batch = s[0];
    let seed = g.full(&[batch, 1], 1.0);
    let grad = g.grad_wrt(output, x, Some(&seed))?;
    let per_feat: usize = x.shape().iter().skip(1).product();
    let sq = grad.reshape(&[batch, per_feat])?;
    let sumsq = sq.mul(&sq)?.sum_axis1()?; // (B,1)
    let zero_rows = sumsq.value().iter().filter(|&&v| v == 0.0).count();
    if zero_rows > 0 {
        log::warn!("input_gradient_norms: {zero_rows} rows with exactly zero gradient; using subgradient 0");
    }
    Ok(sumsq.sqrt0())
}

/// mean((norm - 1)^2) over the batch, differentiable w.r.t. everything the
/// norms depend on (second order via the recorded backward pass).
pub fn unit_norm_penalty(norms: &Var) -> Result<Var> {
    let d = norms.add_scalar(-1.0);
    Ok(d.mul(&d)?.mean_all())
}
