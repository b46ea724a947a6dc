//! Dilated convolution / deconvolution kernels.
//!
//! Both operators are lowered onto the same gather-then-GEMM form. For an
//! output position `t` and kernel tap `j`, the input sample read is
//! `t + off0 + step * j` (reads outside `[0, len)` contribute zero):
//!
//! * convolution with dilation `d` and zero padding `pad`:
//!   `off0 = -pad`, `step = +d`, output length `L + 2*pad - d*(r-1)`;
//! * deconvolution with dilation `d` (anchored at `j = 0`, then shifted
//!   by `d*(r-1)/2` so an identity kernel maps a signal to itself):
//!   `off0 = +d*(r-1)/2`, `step = -d`, output length `L`.
//!
//! The heavy lifting is `matrixmultiply::dgemm` over an im2col buffer;
//! batches are split in two for the wide training shapes. The split is a
//! fixed function of the shape, so results are bit-identical from run to
//! run regardless of thread scheduling.

use matrixmultiply::dgemm;

use crate::tensor::Shape;

/// Index map from (output position, tap) to input position.
#[derive(Clone, Copy, Debug)]
pub struct GatherSpec {
    pub off0: isize,
    pub step: isize,
}

impl GatherSpec {
    pub fn conv(dilation: usize, pad: usize) -> Self {
        GatherSpec { off0: -(pad as isize), step: dilation as isize }
    }

    pub fn deconv(dilation: usize, kernel: usize) -> Self {
        GatherSpec {
            off0: (dilation * (kernel - 1) / 2) as isize,
            step: -(dilation as isize),
        }
    }

    #[inline]
    fn src(&self, t: usize, j: usize) -> isize {
        t as isize + self.off0 + self.step * j as isize
    }
}

/// Output length of a padded dilated convolution; `None` when the kernel
/// spans more than the padded input.
pub fn conv_output_len(len: usize, kernel: usize, dilation: usize, pad: usize) -> Option<usize> {
    let span = dilation * (kernel - 1);
    (len + 2 * pad).checked_sub(span).filter(|l| *l >= 1)
}

/// Work size above which a batch is split across two threads.
const PAR_THRESHOLD: usize = 1 << 21;

fn macs(batch: usize, wshape: Shape, lout: usize) -> usize {
    batch * wshape.numel() * lout
}

/// Gather `x[bs, :, :]` into an im2col buffer of shape
/// `(in_ch * kernel, chunk_batch * lout)`, row-major.
fn im2col(
    x: &[f64],
    xshape: Shape,
    bs: std::ops::Range<usize>,
    kernel: usize,
    lout: usize,
    spec: GatherSpec,
) -> Vec<f64> {
    let (ci, len) = (xshape.channels, xshape.len);
    let nb = bs.len();
    let n = nb * lout;
    let mut a = vec![0.0; ci * kernel * n];
    for (bi, b) in bs.enumerate() {
        for i in 0..ci {
            let xrow = &x[(b * ci + i) * len..(b * ci + i) * len + len];
            for j in 0..kernel {
                let arow = &mut a[(i * kernel + j) * n + bi * lout..(i * kernel + j) * n + (bi + 1) * lout];
                for (t, slot) in arow.iter_mut().enumerate() {
                    let src = spec.src(t, j);
                    if src >= 0 && (src as usize) < len {
                        *slot = xrow[src as usize];
                    }
                }
            }
        }
    }
    a
}

/// Scatter-add the im2col-layout gradient back onto the input gradient.
fn col2im_add(
    da: &[f64],
    dx: &mut [f64],
    xshape: Shape,
    bs: std::ops::Range<usize>,
    kernel: usize,
    lout: usize,
    spec: GatherSpec,
) {
    let (ci, len) = (xshape.channels, xshape.len);
    let nb = bs.len();
    let n = nb * lout;
    for (bi, b) in bs.enumerate() {
        for i in 0..ci {
            let drow = &mut dx[(b * ci + i) * len..(b * ci + i) * len + len];
            for j in 0..kernel {
                let arow = &da[(i * kernel + j) * n + bi * lout..(i * kernel + j) * n + (bi + 1) * lout];
                for (t, v) in arow.iter().enumerate() {
                    let src = spec.src(t, j);
                    if src >= 0 && (src as usize) < len {
                        drow[src as usize] += *v;
                    }
                }
            }
        }
    }
}

fn forward_chunk(
    x: &[f64],
    xshape: Shape,
    w: &[f64],
    wshape: Shape,
    bias: &[f64],
    spec: GatherSpec,
    lout: usize,
    bs: std::ops::Range<usize>,
    y_chunk: &mut [f64],
) {
    let (co, ci, kernel) = (wshape.batch, wshape.channels, wshape.len);
    let k = ci * kernel;
    let nb = bs.len();
    let n = nb * lout;
    let a = im2col(x, xshape, bs, kernel, lout, spec);
    let mut c = vec![0.0; co * n];
    unsafe {
        dgemm(
            co, k, n, 1.0,
            w.as_ptr(), k as isize, 1,
            a.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
    // c is (co, nb*lout); y is (nb, co, lout)
    for bi in 0..nb {
        for o in 0..co {
            let src = &c[o * n + bi * lout..o * n + bi * lout + lout];
            let dst = &mut y_chunk[(bi * co + o) * lout..(bi * co + o) * lout + lout];
            let bv = bias[o];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s + bv;
            }
        }
    }
}

/// Forward pass. `x` is `(B, Ci, L)`, `w` is `(Co, Ci, r)`, `bias` has
/// `Co` entries; returns `(B, Co, lout)` values.
pub fn forward(
    x: &[f64],
    xshape: Shape,
    w: &[f64],
    wshape: Shape,
    bias: &[f64],
    spec: GatherSpec,
    lout: usize,
) -> Vec<f64> {
    let (batch, co) = (xshape.batch, wshape.batch);
    let mut y = vec![0.0; batch * co * lout];
    if batch >= 2 && macs(batch, wshape, lout) >= PAR_THRESHOLD {
        let half = batch / 2;
        let (y0, y1) = y.split_at_mut(half * co * lout);
        rayon::join(
            || forward_chunk(x, xshape, w, wshape, bias, spec, lout, 0..half, y0),
            || forward_chunk(x, xshape, w, wshape, bias, spec, lout, half..batch, y1),
        );
    } else {
        forward_chunk(x, xshape, w, wshape, bias, spec, lout, 0..batch, &mut y);
    }
    y
}

fn backward_chunk(
    x: &[f64],
    xshape: Shape,
    w: &[f64],
    wshape: Shape,
    gy: &[f64],
    spec: GatherSpec,
    lout: usize,
    bs: std::ops::Range<usize>,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (co, ci, kernel) = (wshape.batch, wshape.channels, wshape.len);
    let k = ci * kernel;
    let nb = bs.len();
    let n = nb * lout;

    // Repack gy (nb, co, lout) -> g (co, nb*lout).
    let mut g = vec![0.0; co * n];
    for (bi, b) in bs.clone().enumerate() {
        for o in 0..co {
            let src = &gy[(b * co + o) * lout..(b * co + o) * lout + lout];
            g[o * n + bi * lout..o * n + bi * lout + lout].copy_from_slice(src);
        }
    }

    let mut db = vec![0.0; co];
    for o in 0..co {
        db[o] = g[o * n..(o + 1) * n].iter().sum();
    }

    let a = im2col(x, xshape, bs.clone(), kernel, lout, spec);

    // dw = g . a^T
    let mut dw = vec![0.0; co * k];
    unsafe {
        dgemm(
            co, n, k, 1.0,
            g.as_ptr(), n as isize, 1,
            a.as_ptr(), 1, n as isize,
            0.0,
            dw.as_mut_ptr(), k as isize, 1,
        );
    }

    // da = w^T . g, then scatter back onto dx.
    let mut da = vec![0.0; k * n];
    unsafe {
        dgemm(
            k, co, n, 1.0,
            w.as_ptr(), 1, k as isize,
            g.as_ptr(), n as isize, 1,
            0.0,
            da.as_mut_ptr(), n as isize, 1,
        );
    }
    let mut dx = vec![0.0; nb * ci * xshape.len];
    let chunk_shape = Shape::new(nb, ci, xshape.len);
    col2im_add(&da, &mut dx, chunk_shape, 0..nb, kernel, lout, spec);
    (dx, dw, db)
}

/// Backward pass: gradients for input, weights, and bias given the
/// output gradient `gy` of shape `(B, Co, lout)`.
pub fn backward(
    x: &[f64],
    xshape: Shape,
    w: &[f64],
    wshape: Shape,
    gy: &[f64],
    spec: GatherSpec,
    lout: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let batch = xshape.batch;
    if batch >= 2 && macs(batch, wshape, lout) >= PAR_THRESHOLD {
        let half = batch / 2;
        let (lo, hi) = rayon::join(
            || backward_chunk(x, xshape, w, wshape, gy, spec, lout, 0..half),
            || backward_chunk(x, xshape, w, wshape, gy, spec, lout, half..batch),
        );
        let (mut dx, mut dw, mut db) = lo;
        let (dx1, dw1, db1) = hi;
        dx.extend_from_slice(&dx1);
        for (acc, v) in dw.iter_mut().zip(&dw1) {
            *acc += v;
        }
        for (acc, v) in db.iter_mut().zip(&db1) {
            *acc += v;
        }
        (dx, dw, db)
    } else {
        backward_chunk(x, xshape, w, wshape, gy, spec, lout, 0..batch)
    }
}
