//! Flat-slice numeric kernels behind the graph ops.
//!
//! Everything is row-major `f64`. Reduction order inside each output
//! element is fixed (ascending index), so results are bit-reproducible.

/// Geometry shared by `im2col` and its adjoint `col2im`.
///
/// `len` is the (already padded) input length; `lout` the number of
/// window positions: `lout = (len - k) / stride + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColGeom {
    pub batch: usize,
    pub ch: usize,
    pub len: usize,
    pub k: usize,
    pub stride: usize,
    pub lout: usize,
}

impl ColGeom {
    pub fn new(batch: usize, ch: usize, len: usize, k: usize, stride: usize) -> Option<Self> {
        if k == 0 || stride == 0 || len < k {
            return None;
        }
        let lout = (len - k) / stride + 1;
        Some(ColGeom {
            batch,
            ch,
            len,
            k,
            stride,
            lout,
        })
    }
}

/// c(m,n) += a(m,k) * b(k,n); plain ikj with contiguous inner axpy.
pub fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    matmul_acc(a, b, &mut c, m, k, n);
    c
}

/// (m,n) -> (n,m)
pub fn transpose(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

/// (B,C,L) -> (B*Lout, C*K): row (b,t) holds the window starting at t*stride
/// for every channel, channel-major within the row.
pub fn im2col(x: &[f64], g: ColGeom) -> Vec<f64> {
    let mut out = vec![0.0; g.batch * g.lout * g.ch * g.k];
    let row_w = g.ch * g.k;
    for b in 0..g.batch {
        let xb = &x[b * g.ch * g.len..(b + 1) * g.ch * g.len];
        for t in 0..g.lout {
            let start = t * g.stride;
            let orow = &mut out[(b * g.lout + t) * row_w..(b * g.lout + t + 1) * row_w];
            for c in 0..g.ch {
                let src = &xb[c * g.len + start..c * g.len + start + g.k];
                orow[c * g.k..(c + 1) * g.k].copy_from_slice(src);
            }
        }
    }
    out
}

/// Adjoint of `im2col`: scatter-add columns back to (B,C,L).
pub fn col2im(cols: &[f64], g: ColGeom) -> Vec<f64> {
    let mut out = vec![0.0; g.batch * g.ch * g.len];
    let row_w = g.ch * g.k;
    for b in 0..g.batch {
        let ob = &mut out[b * g.ch * g.len..(b + 1) * g.ch * g.len];
        for t in 0..g.lout {
            let start = t * g.stride;
            let crow = &cols[(b * g.lout + t) * row_w..(b * g.lout + t + 1) * row_w];
            for c in 0..g.ch {
                let dst = &mut ob[c * g.len + start..c * g.len + start + g.k];
                for (d, &v) in dst.iter_mut().zip(&crow[c * g.k..(c + 1) * g.k]) {
                    *d += v;
                }
            }
        }
    }
    out
}

/// Zero-pad both ends of the last axis: (B,C,L) -> (B,C,L+2p).
pub fn pad1d(x: &[f64], batch: usize, ch: usize, len: usize, p: usize) -> Vec<f64> {
    let lp = len + 2 * p;
    let mut out = vec![0.0; batch * ch * lp];
    for bc in 0..batch * ch {
        out[bc * lp + p..bc * lp + p + len].copy_from_slice(&x[bc * len..(bc + 1) * len]);
    }
    out
}

/// Adjoint of `pad1d`: (B,C,L) -> (B,C,L-2p).
pub fn crop1d(x: &[f64], batch: usize, ch: usize, len: usize, p: usize) -> Vec<f64> {
    let lc = len - 2 * p;
    let mut out = vec![0.0; batch * ch * lc];
    for bc in 0..batch * ch {
        out[bc * lc..(bc + 1) * lc].copy_from_slice(&x[bc * len + p..bc * len + p + lc]);
    }
    out
}

/// (B,A,C) -> (B,C,A)
pub fn swap_axes12(x: &[f64], b: usize, a: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; b * a * c];
    for ib in 0..b {
        for ia in 0..a {
            for ic in 0..c {
                out[ib * a * c + ic * a + ia] = x[ib * a * c + ia * c + ic];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let c = matmul(&[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0, 7.0, 8.0], 2, 2, 2);
        assert_eq!(c, vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transpose_roundtrip() {
        let a: Vec<f64> = (0..12).map(|v| v as f64).collect();
        assert_eq!(transpose(&transpose(&a, 3, 4), 4, 3), a);
    }

    #[test]
    fn im2col_col2im_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for the pair to be true adjoints
        let g = ColGeom::new(2, 3, 7, 3, 2).unwrap();
        let x: Vec<f64> = (0..2 * 3 * 7).map(|v| (v as f64).sin()).collect();
        let y: Vec<f64> = (0..2 * g.lout * 3 * 3).map(|v| (v as f64).cos()).collect();
        let fx = im2col(&x, g);
        let aty = col2im(&y, g);
        let lhs: f64 = fx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn pad_crop_inverse() {
        let x: Vec<f64> = (0..2 * 2 * 5).map(|v| v as f64).collect();
        let p = pad1d(&x, 2, 2, 5, 2);
        assert_eq!(crop1d(&p, 2, 2, 9, 2), x);
    }

    #[test]
    fn swap_axes_involution() {
        let x: Vec<f64> = (0..2 * 3 * 4).map(|v| v as f64).collect();
        let s = swap_axes12(&x, 2, 3, 4);
        assert_eq!(swap_axes12(&s, 2, 4, 3), x);
    }
}
