//! Forward and backward kernels for the building blocks of the network.
//!
//! Feature maps are stored channel-major (`c`, `h`, `w`). Each backward
//! function accumulates parameter gradients into a flat buffer laid out like
//! the parameters and returns the gradient with respect to its input.

use rand::Rng;

use super::params::{Init, ParamLayout, Slot};

/// Channel-major feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), c * h * w);
        Tensor { c, h, w, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }
}

impl std::ops::Deref for Tensor {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.data
    }
}

/// `c = a · b + beta · c` for row-major operands, with optional transposes of
/// the stored `a` (`m × k`, or `k × m` when transposed) and `b`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices hold exactly m*k, k*n and m*n elements and the
    // strides describe dense row- or column-major views of them.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Elementwise `dy * silu'(pre)`.
pub fn silu_backward(pre: &[f64], dy: &[f64]) -> Vec<f64> {
    pre.iter().zip(dy).map(|(&x, &g)| g * silu_grad(x)).collect()
}

/// 2-D convolution with square kernel, computed as im2col + GEMM.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Slot,
    pub bias: Slot,
}

impl Conv2d {
    /// Registers `<name>.weight` (He-normal scaled by `gain`) and `<name>.bias`.
    pub fn new(
        layout: &mut ParamLayout,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        gain: f64,
        bias: Init,
    ) -> Self {
        let fan_in = (cin * kernel * kernel) as f64;
        Conv2d {
            cin,
            cout,
            kernel,
            stride,
            pad: kernel / 2,
            weight: layout.register(
                format!("{name}.weight"),
                &[cout, cin, kernel, kernel],
                Init::Normal(gain * (2.0 / fan_in).sqrt()),
            ),
            bias: layout.register(format!("{name}.bias"), &[cout], bias),
        }
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    /// Unfolds `x` into a `(cin·k·k) × (ho·wo)` matrix.
    pub fn im2col(&self, x: &Tensor) -> Vec<f64> {
        let (ho, wo) = self.out_size(x.h, x.w);
        let k = self.kernel;
        let n = ho * wo;
        let mut cols = vec![0.0; self.cin * k * k * n];
        for ci in 0..self.cin {
            let plane = &x.data[ci * x.h * x.w..(ci + 1) * x.h * x.w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * n..][..n];
                    for oy in 0..ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= x.h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * x.w..(iy as usize + 1) * x.w];
                        let dst = &mut row[oy * wo..(oy + 1) * wo];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < x.w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], h: usize, w: usize) -> Tensor {
        let (ho, wo) = self.out_size(h, w);
        let k = self.kernel;
        let n = ho * wo;
        let mut out = Tensor::zeros(self.cin, h, w);
        for ci in 0..self.cin {
            let plane = &mut out.data[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ci * k + ky) * k + kx) * n..][..n];
                    for oy in 0..ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += row[oy * wo + ox];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Applies the convolution to already unfolded input.
    pub fn forward_cols(&self, cols: &[f64], ho: usize, wo: usize, params: &[f64]) -> Tensor {
        let n = ho * wo;
        let kk = self.cin * self.kernel * self.kernel;
        let bias = self.bias.of(params);
        let mut out = Tensor::zeros(self.cout, ho, wo);
        for (co, b) in bias.iter().enumerate() {
            out.data[co * n..(co + 1) * n].iter_mut().for_each(|v| *v = *b);
        }
        gemm(self.cout, kk, n, self.weight.of(params), false, cols, false, 1.0, &mut out.data);
        out
    }

    /// Returns the output and the unfolded input needed for the backward pass.
    pub fn forward(&self, x: &Tensor, params: &[f64]) -> (Tensor, Vec<f64>) {
        debug_assert_eq!(x.c, self.cin);
        let (ho, wo) = self.out_size(x.h, x.w);
        let cols = self.im2col(x);
        (self.forward_cols(&cols, ho, wo, params), cols)
    }

    /// Accumulates parameter gradients and returns d(cols).
    pub fn backward_cols(&self, cols: &[f64], dy: &Tensor, params: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let n = dy.h * dy.w;
        let kk = self.cin * self.kernel * self.kernel;
        gemm(self.cout, n, kk, &dy.data, false, cols, true, 1.0, self.weight.of_mut(grads));
        for (co, g) in self.bias.of_mut(grads).iter_mut().enumerate() {
            *g += dy.data[co * n..(co + 1) * n].iter().sum::<f64>();
        }
        let mut dcols = vec![0.0; kk * n];
        gemm(kk, self.cout, n, self.weight.of(params), true, &dy.data, false, 0.0, &mut dcols);
        dcols
    }

    /// Accumulates parameter gradients only (for layers fed by the network input).
    pub fn backward_params(&self, cols: &[f64], dy: &Tensor, grads: &mut [f64]) {
        let n = dy.h * dy.w;
        let kk = self.cin * self.kernel * self.kernel;
        gemm(self.cout, n, kk, &dy.data, false, cols, true, 1.0, self.weight.of_mut(grads));
        for (co, g) in self.bias.of_mut(grads).iter_mut().enumerate() {
            *g += dy.data[co * n..(co + 1) * n].iter().sum::<f64>();
        }
    }

    /// Folds d(cols) back onto an input of size `h × w`.
    pub fn fold(&self, dcols: &[f64], h: usize, w: usize) -> Tensor {
        self.col2im(dcols, h, w)
    }

    pub fn backward(&self, cols: &[f64], in_h: usize, in_w: usize, dy: &Tensor, params: &[f64], grads: &mut [f64]) -> Tensor {
        let dcols = self.backward_cols(cols, dy, params, grads);
        self.col2im(&dcols, in_h, in_w)
    }
}

/// Fully connected layer `y = W x + b`, `W` stored `out × in`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub nin: usize,
    pub nout: usize,
    pub weight: Slot,
    pub bias: Slot,
}

impl Linear {
    pub fn new(layout: &mut ParamLayout, name: &str, nin: usize, nout: usize, gain: f64) -> Self {
        Linear {
            nin,
            nout,
            weight: layout.register(
                format!("{name}.weight"),
                &[nout, nin],
                Init::Normal(gain / (nin as f64).sqrt()),
            ),
            bias: layout.register(format!("{name}.bias"), &[nout], Init::Constant(0.0)),
        }
    }

    pub fn forward(&self, x: &[f64], params: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.nin);
        let mut y = self.bias.of(params).to_vec();
        gemm(self.nout, self.nin, 1, self.weight.of(params), false, x, false, 1.0, &mut y);
        y
    }

    pub fn backward(&self, x: &[f64], dy: &[f64], params: &[f64], grads: &mut [f64]) -> Vec<f64> {
        self.backward_params(x, dy, grads);
        let mut dx = vec![0.0; self.nin];
        gemm(self.nin, self.nout, 1, self.weight.of(params), true, dy, false, 0.0, &mut dx);
        dx
    }

    pub fn backward_params(&self, x: &[f64], dy: &[f64], grads: &mut [f64]) {
        let gw = self.weight.of_mut(grads);
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &mut gw[o * self.nin..(o + 1) * self.nin];
            row.iter_mut().zip(x).for_each(|(w, &xi)| *w += g * xi);
        }
        self.bias.of_mut(grads).iter_mut().zip(dy).for_each(|(b, &g)| *b += g);
    }
}

/// Nearest-neighbour ×2 upsampling.
pub fn upsample2(x: &Tensor) -> Tensor {
    let (h, w) = (x.h * 2, x.w * 2);
    let mut out = Tensor::zeros(x.c, h, w);
    for c in 0..x.c {
        for y in 0..h {
            for xx in 0..w {
                out.data[(c * h + y) * w + xx] = x.data[(c * x.h + y / 2) * x.w + xx / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward(dy: &Tensor) -> Tensor {
    let (h, w) = (dy.h / 2, dy.w / 2);
    let mut out = Tensor::zeros(dy.c, h, w);
    for c in 0..dy.c {
        for y in 0..dy.h {
            for x in 0..dy.w {
                out.data[(c * h + y / 2) * w + x / 2] += dy.data[(c * dy.h + y) * dy.w + x];
            }
        }
    }
    out
}

/// Inverted dropout mask: each entry is 0 or `1 / (1 - p)`.
pub fn dropout_mask(len: usize, p: f64, rng: &mut impl Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

/// Gradient reversal: the forward pass is the identity.
pub fn grl_forward(x: &[f64]) -> Vec<f64> {
    x.to_vec()
}

/// Gradient reversal backward pass: scales the incoming gradient by `-lambda`.
pub fn grl_backward(dy: &[f64], lambda: f64) -> Vec<f64> {
    dy.iter().map(|&g| -lambda * g).collect()
}

/// Residual block `silu(conv2(silu(conv1(x))) + skip(x))`. The skip path is
/// a strided 1×1 convolution whenever the shape changes.
#[derive(Debug, Clone)]
pub struct ResBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub skip: Option<Conv2d>,
}

/// Activations kept for the backward pass of a [`ResBlock`].
#[derive(Debug, Clone)]
pub struct ResCache {
    in_shape: (usize, usize, usize),
    cols1: Vec<f64>,
    pre1: Tensor,
    cols2: Vec<f64>,
    skip_cols: Option<Vec<f64>>,
    pre_out: Tensor,
}

impl ResBlock {
    pub fn new(layout: &mut ParamLayout, name: &str, cin: usize, cout: usize, stride: usize) -> Self {
        let zero = Init::Constant(0.0);
        let conv1 = Conv2d::new(layout, &format!("{name}.conv1"), cin, cout, 3, stride, 1.0, zero);
        // second conv starts small so each block is close to its skip path
        let conv2 = Conv2d::new(layout, &format!("{name}.conv2"), cout, cout, 3, 1, 0.5, zero);
        let skip = (cin != cout || stride != 1)
            .then(|| Conv2d::new(layout, &format!("{name}.skip"), cin, cout, 1, stride, 1.0, zero));
        ResBlock { conv1, conv2, skip }
    }

    pub fn forward(&self, x: &Tensor, params: &[f64]) -> (Tensor, ResCache) {
        let (pre1, cols1) = self.conv1.forward(x, params);
        let h1 = pre1.map(silu);
        let (mut pre_out, cols2) = self.conv2.forward(&h1, params);
        let skip_cols = match &self.skip {
            Some(s) => {
                let (sk, cols) = s.forward(x, params);
                pre_out.add_assign(&sk);
                Some(cols)
            }
            None => {
                pre_out.add_assign(x);
                None
            }
        };
        let y = pre_out.map(silu);
        (
            y,
            ResCache {
                in_shape: x.shape(),
                cols1,
                pre1,
                cols2,
                skip_cols,
                pre_out,
            },
        )
    }

    pub fn backward(&self, cache: &ResCache, dy: &Tensor, params: &[f64], grads: &mut [f64]) -> Tensor {
        let (_, h, w) = cache.in_shape;
        let dz = Tensor::from_vec(dy.c, dy.h, dy.w, silu_backward(&cache.pre_out, dy));
        let dh1 = self
            .conv2
            .backward(&cache.cols2, cache.pre1.h, cache.pre1.w, &dz, params, grads);
        let dpre1 = Tensor::from_vec(dh1.c, dh1.h, dh1.w, silu_backward(&cache.pre1, &dh1));
        let mut dx = self.conv1.backward(&cache.cols1, h, w, &dpre1, params, grads);
        match (&self.skip, &cache.skip_cols) {
            (Some(s), Some(cols)) => dx.add_assign(&s.backward(cols, h, w, &dz, params, grads)),
            _ => dx.add_assign(&dz),
        }
        dx
    }
}
