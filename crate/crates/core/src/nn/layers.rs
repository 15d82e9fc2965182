//! Per-layer forward/backward implementations.
//!
//! Dense layers route batch-size-1 inputs through hand-rolled matvec loops;
//! the packed-gemm path only pays off for real batches. Norm statistics and
//! batch reductions accumulate in f64.

use crate::elem::Elem;
use crate::error::{PecError, Result};
use crate::nn::NORM_EPS;
use ndarray::{Array1, Array2, Array4, ArrayD, Ix2, Ix4};

/// Adam moments decaying geometrically through zero-gradient stretches fall
/// into f32 denormal range and stall the update loop; anything this small is
/// treated as zero wherever moments and gradients accumulate.
pub(crate) const DENORMAL_FLUSH: f64 = 1e-30;

#[derive(Debug, Clone)]
pub struct Dense<E: Elem> {
    /// Row-major `(out_dim, in_dim)`.
    pub w: Array2<E>,
    pub b: Array1<E>,
}

#[derive(Debug, Clone)]
pub struct Conv3x3<E: Elem> {
    /// `(out_channels, in_channels, 3, 3)`.
    pub w: Array4<E>,
    pub b: Array1<E>,
}

#[derive(Debug, Clone)]
pub struct LayerNorm<E: Elem> {
    pub gamma: Array1<E>,
    pub beta: Array1<E>,
}

#[derive(Debug, Clone)]
pub enum Layer<E: Elem> {
    Dense(Dense<E>),
    Conv(Conv3x3<E>),
    LayerNorm(LayerNorm<E>),
    InstanceNorm,
    Gelu,
    Relu,
    AdaptiveAvgPool { target: usize },
    Flatten,
}

/// What each layer keeps from forward for its backward pass.
pub enum LayerCache<E: Elem> {
    Dense { input: Array2<E> },
    Conv { cols: Array2<E>, in_shape: Vec<usize> },
    LayerNorm { xhat: Array2<E>, inv_std: Vec<f64> },
    InstanceNorm { xhat: ArrayD<E>, inv_std: Array2<f64> },
    Gelu { input: ArrayD<E> },
    Relu { input: ArrayD<E> },
    Pool { in_shape: Vec<usize> },
    Flatten { in_shape: Vec<usize> },
}

/// Parameter gradients for one layer, aligned with [`Layer`].
#[derive(Debug, Clone)]
pub enum LayerGrads<E: Elem> {
    Dense { dw: Array2<E>, db: Array1<E> },
    Conv { dw: Array4<E>, db: Array1<E> },
    Norm { dgamma: Array1<E>, dbeta: Array1<E> },
    None,
}

impl<E: Elem> LayerGrads<E> {
    pub fn grad_slices(&self) -> Vec<&[E]> {
        match self {
            LayerGrads::Dense { dw, db } => {
                vec![dw.as_slice().unwrap(), db.as_slice().unwrap()]
            }
            LayerGrads::Conv { dw, db } => {
                vec![dw.as_slice().unwrap(), db.as_slice().unwrap()]
            }
            LayerGrads::Norm { dgamma, dbeta } => {
                vec![dgamma.as_slice().unwrap(), dbeta.as_slice().unwrap()]
            }
            LayerGrads::None => vec![],
        }
    }
}

impl<E: Elem> Layer<E> {
    pub fn param_slices(&self) -> Vec<&[E]> {
        match self {
            Layer::Dense(d) => vec![d.w.as_slice().unwrap(), d.b.as_slice().unwrap()],
            Layer::Conv(c) => vec![c.w.as_slice().unwrap(), c.b.as_slice().unwrap()],
            Layer::LayerNorm(n) => {
                vec![n.gamma.as_slice().unwrap(), n.beta.as_slice().unwrap()]
            }
            _ => vec![],
        }
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [E]> {
        match self {
            Layer::Dense(d) => vec![
                d.w.as_slice_mut().unwrap(),
                d.b.as_slice_mut().unwrap(),
            ],
            Layer::Conv(c) => vec![
                c.w.as_slice_mut().unwrap(),
                c.b.as_slice_mut().unwrap(),
            ],
            Layer::LayerNorm(n) => vec![
                n.gamma.as_slice_mut().unwrap(),
                n.beta.as_slice_mut().unwrap(),
            ],
            _ => vec![],
        }
    }

    pub fn forward(
        &self,
        x: ArrayD<E>,
        want_cache: bool,
    ) -> Result<(ArrayD<E>, Option<LayerCache<E>>)> {
        match self {
            Layer::Dense(d) => {
                let x2 = into_rank2(x)?;
                let out = d.forward(&x2);
                let cache = want_cache.then(|| LayerCache::Dense { input: x2 });
                Ok((out.into_dyn(), cache))
            }
            Layer::Conv(c) => {
                let x4 = into_rank4(x)?;
                let (out, cols) = c.forward(&x4);
                let cache = want_cache.then(|| LayerCache::Conv {
                    cols,
                    in_shape: x4.shape().to_vec(),
                });
                Ok((out.into_dyn(), cache))
            }
            Layer::LayerNorm(n) => {
                let x2 = into_rank2(x)?;
                let (out, xhat, inv_std) = n.forward(&x2);
                let cache = want_cache.then(|| LayerCache::LayerNorm { xhat, inv_std });
                Ok((out.into_dyn(), cache))
            }
            Layer::InstanceNorm => {
                let x4 = into_rank4(x)?;
                let (out, xhat, inv_std) = instance_norm_forward(&x4);
                let cache = want_cache.then(|| LayerCache::InstanceNorm {
                    xhat: xhat.into_dyn(),
                    inv_std,
                });
                Ok((out.into_dyn(), cache))
            }
            Layer::Gelu => {
                let mut out = x.clone();
                out.mapv_inplace(gelu);
                let cache = want_cache.then(|| LayerCache::Gelu { input: x });
                Ok((out, cache))
            }
            Layer::Relu => {
                let zero = E::zero();
                let mut out = x.clone();
                out.mapv_inplace(|v| if v > zero { v } else { zero });
                let cache = want_cache.then(|| LayerCache::Relu { input: x });
                Ok((out, cache))
            }
            Layer::AdaptiveAvgPool { target } => {
                let x4 = into_rank4(x)?;
                let out = pool_forward(&x4, *target)?;
                let cache = want_cache.then(|| LayerCache::Pool {
                    in_shape: x4.shape().to_vec(),
                });
                Ok((out.into_dyn(), cache))
            }
            Layer::Flatten => {
                let in_shape = x.shape().to_vec();
                let n = in_shape[0];
                let flat: usize = in_shape[1..].iter().product();
                let out = x
                    .into_shape_with_order((n, flat))
                    .map_err(|e| PecError::ShapeMismatch(e.to_string()))?;
                let cache = want_cache.then(|| LayerCache::Flatten { in_shape });
                Ok((out.into_dyn(), cache))
            }
        }
    }

    pub fn backward(
        &self,
        cache: &LayerCache<E>,
        grad: ArrayD<E>,
    ) -> Result<(LayerGrads<E>, ArrayD<E>)> {
        match (self, cache) {
            (Layer::Dense(d), LayerCache::Dense { input }) => {
                let g2 = into_rank2(grad)?;
                let (dw, db, dx) = d.backward(input, &g2);
                Ok((LayerGrads::Dense { dw, db }, dx.into_dyn()))
            }
            (Layer::Conv(c), LayerCache::Conv { cols, in_shape }) => {
                let g4 = into_rank4(grad)?;
                let (dw, db, dx) = c.backward(cols, in_shape, &g4);
                Ok((LayerGrads::Conv { dw, db }, dx.into_dyn()))
            }
            (Layer::LayerNorm(n), LayerCache::LayerNorm { xhat, inv_std }) => {
                let g2 = into_rank2(grad)?;
                let (dgamma, dbeta, dx) = n.backward(xhat, inv_std, &g2);
                Ok((LayerGrads::Norm { dgamma, dbeta }, dx.into_dyn()))
            }
            (Layer::InstanceNorm, LayerCache::InstanceNorm { xhat, inv_std }) => {
                let g4 = into_rank4(grad)?;
                let xhat4 = xhat.view().into_dimensionality::<Ix4>().unwrap();
                let dx = instance_norm_backward(&xhat4, inv_std, &g4);
                Ok((LayerGrads::None, dx.into_dyn()))
            }
            (Layer::Gelu, LayerCache::Gelu { input }) => {
                let mut dx = grad;
                ndarray::Zip::from(&mut dx).and(input).for_each(|g, &x| {
                    *g = *g * gelu_grad(x);
                });
                Ok((LayerGrads::None, dx))
            }
            (Layer::Relu, LayerCache::Relu { input }) => {
                let zero = E::zero();
                let mut dx = grad;
                ndarray::Zip::from(&mut dx).and(input).for_each(|g, &x| {
                    if x <= zero {
                        *g = zero;
                    }
                });
                Ok((LayerGrads::None, dx))
            }
            (Layer::AdaptiveAvgPool { target }, LayerCache::Pool { in_shape }) => {
                let g4 = into_rank4(grad)?;
                let dx = pool_backward(&g4, in_shape, *target);
                Ok((LayerGrads::None, dx.into_dyn()))
            }
            (Layer::Flatten, LayerCache::Flatten { in_shape }) => {
                let dx = grad
                    .into_shape_with_order(in_shape.as_slice())
                    .map_err(|e| PecError::ShapeMismatch(e.to_string()))?;
                Ok((LayerGrads::None, dx))
            }
            _ => Err(PecError::ShapeMismatch(
                "stale cache: cache kind does not match layer".into(),
            )),
        }
    }
}

fn into_rank2<E: Elem>(x: ArrayD<E>) -> Result<Array2<E>> {
    x.into_dimensionality::<Ix2>()
        .map_err(|e| PecError::ShapeMismatch(e.to_string()))
}

fn into_rank4<E: Elem>(x: ArrayD<E>) -> Result<Array4<E>> {
    x.into_dimensionality::<Ix4>()
        .map_err(|e| PecError::ShapeMismatch(e.to_string()))
}

fn gelu<E: Elem>(x: E) -> E {
    let half = E::from_f64(0.5);
    let inv_sqrt2 = E::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    x * half * (E::one() + (x * inv_sqrt2).erf())
}

fn gelu_grad<E: Elem>(x: E) -> E {
    let half = E::from_f64(0.5);
    let inv_sqrt2 = E::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    let inv_sqrt_2pi = E::from_f64(0.398_942_280_401_432_7);
    let cdf = half * (E::one() + (x * inv_sqrt2).erf());
    let pdf = inv_sqrt_2pi * (E::zero() - half * x * x).exp();
    cdf + x * pdf
}

impl<E: Elem> Dense<E> {
    fn forward(&self, x: &Array2<E>) -> Array2<E> {
        // gemm for every batch size: per-row results do not depend on the
        // batch, so single-sample training and batched scoring agree bitwise
        let mut out = standard2(x.dot(&self.w.t()));
        for mut row in out.rows_mut() {
            let rs = row.as_slice_mut().unwrap();
            for (o, &bv) in rs.iter_mut().zip(self.b.as_slice().unwrap()) {
                *o = *o + bv;
            }
        }
        out
    }

    fn backward(&self, input: &Array2<E>, g: &Array2<E>) -> (Array2<E>, Array1<E>, Array2<E>) {
        let out_dim = g.ncols();
        let mut db = Array1::<E>::zeros(out_dim);
        {
            // f64 batch accumulation
            let mut acc = vec![0.0f64; out_dim];
            for grow in g.rows() {
                for (a, &gv) in acc.iter_mut().zip(grow.iter()) {
                    *a += gv.to_f64();
                }
            }
            for (d, a) in db.iter_mut().zip(acc) {
                *d = E::from_f64(a);
            }
        }
        let dw = standard2(g.t().dot(input));
        let dx = standard2(g.dot(&self.w));
        (dw, db, dx)
    }
}

/// Owned standard-layout copy when gemm hands back a transposed result.
fn standard2<E: Elem>(a: Array2<E>) -> Array2<E> {
    if a.is_standard_layout() {
        a
    } else {
        let dim = a.dim();
        Array2::from_shape_vec(dim, a.iter().copied().collect()).unwrap()
    }
}

impl<E: Elem> LayerNorm<E> {
    fn forward(&self, x: &Array2<E>) -> (Array2<E>, Array2<E>, Vec<f64>) {
        let (n, d) = x.dim();
        let mut xhat = Array2::<E>::zeros((n, d));
        let mut inv_stds = Vec::with_capacity(n);
        let gamma = self.gamma.as_slice().unwrap();
        let beta = self.beta.as_slice().unwrap();
        let mut out = Array2::<E>::zeros((n, d));
        for i in 0..n {
            let row = x.row(i);
            let row = row.to_slice().unwrap();
            let mean = row.iter().map(|v| v.to_f64()).sum::<f64>() / d as f64;
            let var = row
                .iter()
                .map(|v| {
                    let c = v.to_f64() - mean;
                    c * c
                })
                .sum::<f64>()
                / d as f64;
            let inv_std = 1.0 / (var + NORM_EPS).sqrt();
            inv_stds.push(inv_std);
            let xh = xhat.row_mut(i).into_slice().unwrap();
            let os = out.row_mut(i);
            for (j, ((xv, xh_v), o)) in row.iter().zip(xh.iter_mut()).zip(os).enumerate() {
                let h = E::from_f64((xv.to_f64() - mean) * inv_std);
                *xh_v = h;
                *o = h * gamma[j] + beta[j];
            }
        }
        (out, xhat, inv_stds)
    }

    fn backward(
        &self,
        xhat: &Array2<E>,
        inv_std: &[f64],
        g: &Array2<E>,
    ) -> (Array1<E>, Array1<E>, Array2<E>) {
        let (n, d) = g.dim();
        let mut dgamma = vec![0.0f64; d];
        let mut dbeta = vec![0.0f64; d];
        let mut dx = Array2::<E>::zeros((n, d));
        let gamma = self.gamma.as_slice().unwrap();
        #[allow(clippy::needless_range_loop)] // rows of four arrays in lockstep
        for i in 0..n {
            let grow = g.row(i);
            let grow = grow.to_slice().unwrap();
            let xh = xhat.row(i);
            let xh = xh.to_slice().unwrap();
            let mut m1 = 0.0f64;
            let mut m2 = 0.0f64;
            for j in 0..d {
                let a = grow[j].to_f64() * gamma[j].to_f64();
                m1 += a;
                m2 += a * xh[j].to_f64();
                dgamma[j] += grow[j].to_f64() * xh[j].to_f64();
                dbeta[j] += grow[j].to_f64();
            }
            m1 /= d as f64;
            m2 /= d as f64;
            let dxr = dx.row_mut(i).into_slice().unwrap();
            for j in 0..d {
                let a = grow[j].to_f64() * gamma[j].to_f64();
                dxr[j] = E::from_f64((a - m1 - xh[j].to_f64() * m2) * inv_std[i]);
            }
        }
        (
            Array1::from_iter(dgamma.into_iter().map(E::from_f64)),
            Array1::from_iter(dbeta.into_iter().map(E::from_f64)),
            dx,
        )
    }
}

fn instance_norm_forward<E: Elem>(x: &Array4<E>) -> (Array4<E>, Array4<E>, Array2<f64>) {
    let (n, c, h, w) = x.dim();
    let hw = h * w;
    let mut out = Array4::<E>::zeros((n, c, h, w));
    let mut xhat = Array4::<E>::zeros((n, c, h, w));
    let mut inv_std = Array2::<f64>::zeros((n, c));
    let xs = x.as_slice().unwrap();
    let os = out.as_slice_mut().unwrap();
    let xh = xhat.as_slice_mut().unwrap();
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * hw;
            let plane = &xs[base..base + hw];
            let mean = plane.iter().map(|v| v.to_f64()).sum::<f64>() / hw as f64;
            let var = plane
                .iter()
                .map(|v| {
                    let d = v.to_f64() - mean;
                    d * d
                })
                .sum::<f64>()
                / hw as f64;
            let istd = 1.0 / (var + NORM_EPS).sqrt();
            inv_std[[i, ch]] = istd;
            for k in 0..hw {
                let hv = E::from_f64((plane[k].to_f64() - mean) * istd);
                xh[base + k] = hv;
                os[base + k] = hv;
            }
        }
    }
    (out, xhat, inv_std)
}

fn instance_norm_backward<E: Elem>(
    xhat: &ndarray::ArrayView4<E>,
    inv_std: &Array2<f64>,
    g: &Array4<E>,
) -> Array4<E> {
    let (n, c, h, w) = g.dim();
    let hw = h * w;
    let mut dx = Array4::<E>::zeros((n, c, h, w));
    let gs = g.as_slice().unwrap();
    let xh = xhat.to_slice().unwrap();
    let dxs = dx.as_slice_mut().unwrap();
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * hw;
            let mut m1 = 0.0f64;
            let mut m2 = 0.0f64;
            for k in 0..hw {
                let gv = gs[base + k].to_f64();
                m1 += gv;
                m2 += gv * xh[base + k].to_f64();
            }
            m1 /= hw as f64;
            m2 /= hw as f64;
            let istd = inv_std[[i, ch]];
            for k in 0..hw {
                let gv = gs[base + k].to_f64();
                dxs[base + k] = E::from_f64((gv - m1 - xh[base + k].to_f64() * m2) * istd);
            }
        }
    }
    dx
}

impl<E: Elem> Conv3x3<E> {
    fn w_mat(&self) -> Array2<E> {
        let (co, ci, _, _) = self.w.dim();
        self.w
            .view()
            .into_shape_with_order((co, ci * 9))
            .unwrap()
            .to_owned()
    }

    fn forward(&self, x: &Array4<E>) -> (Array4<E>, Array2<E>) {
        let (n, _, h, w) = x.dim();
        let co = self.w.dim().0;
        let cols = im2col(x);
        let tmp = standard2(cols.dot(&self.w_mat().t())); // (n*h*w, co)
        let mut out = Array4::<E>::zeros((n, co, h, w));
        let ts = tmp.as_slice().unwrap();
        let os = out.as_slice_mut().unwrap();
        let b = self.b.as_slice().unwrap();
        let hw = h * w;
        for i in 0..n {
            for p in 0..hw {
                let trow = &ts[(i * hw + p) * co..(i * hw + p + 1) * co];
                for (oc, (&tv, &bv)) in trow.iter().zip(b).enumerate() {
                    os[(i * co + oc) * hw + p] = tv + bv;
                }
            }
        }
        (out, cols)
    }

    fn backward(
        &self,
        cols: &Array2<E>,
        in_shape: &[usize],
        g: &Array4<E>,
    ) -> (Array4<E>, Array1<E>, Array4<E>) {
        let (n, co, h, w) = g.dim();
        let ci = in_shape[1];
        let hw = h * w;
        // (n*h*w, co) layout of the output gradient
        let mut dtmp = Array2::<E>::zeros((n * hw, co));
        {
            let gs = g.as_slice().unwrap();
            let ds = dtmp.as_slice_mut().unwrap();
            for i in 0..n {
                for oc in 0..co {
                    let src = &gs[(i * co + oc) * hw..(i * co + oc + 1) * hw];
                    for p in 0..hw {
                        ds[(i * hw + p) * co + oc] = src[p];
                    }
                }
            }
        }
        let mut db = Array1::<E>::zeros(co);
        {
            let mut acc = vec![0.0f64; co];
            for row in dtmp.rows() {
                for (a, &gv) in acc.iter_mut().zip(row.iter()) {
                    *a += gv.to_f64();
                }
            }
            for (d, a) in db.iter_mut().zip(acc) {
                *d = E::from_f64(a);
            }
        }
        let dw_mat = standard2(dtmp.t().dot(cols)); // (co, ci*9)
        let dw = dw_mat.into_shape_with_order((co, ci, 3, 3)).unwrap();
        let dcols = standard2(dtmp.dot(&self.w_mat())); // (n*h*w, ci*9)
        let dx = col2im::<E>(&dcols, n, ci, h, w);
        (dw, db, dx)
    }
}

/// Unrolls 3x3/pad-1 patches: output row `n*H*W + y*W + x`, column
/// `ci*9 + ky*3 + kx`.
fn im2col<E: Elem>(x: &Array4<E>) -> Array2<E> {
    let (n, ci, h, w) = x.dim();
    let hw = h * w;
    let mut cols = Array2::<E>::zeros((n * hw, ci * 9));
    let xs = x.as_slice().unwrap();
    let cs = cols.as_slice_mut().unwrap();
    let row_len = ci * 9;
    for i in 0..n {
        for y in 0..h {
            for xp in 0..w {
                let row_base = (i * hw + y * w + xp) * row_len;
                for c in 0..ci {
                    let plane = &xs[(i * ci + c) * hw..(i * ci + c + 1) * hw];
                    let col_base = row_base + c * 9;
                    for ky in 0..3 {
                        let iy = y as isize + ky as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = xp as isize + kx as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            cs[col_base + ky * 3 + kx] = plane[iy as usize * w + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add inverse of [`im2col`].
fn col2im<E: Elem>(dcols: &Array2<E>, n: usize, ci: usize, h: usize, w: usize) -> Array4<E> {
    let hw = h * w;
    let mut dx = Array4::<E>::zeros((n, ci, h, w));
    let ds = dcols.as_slice().unwrap();
    let xs = dx.as_slice_mut().unwrap();
    let row_len = ci * 9;
    for i in 0..n {
        for y in 0..h {
            for xp in 0..w {
                let row_base = (i * hw + y * w + xp) * row_len;
                for c in 0..ci {
                    let plane_base = (i * ci + c) * hw;
                    let col_base = row_base + c * 9;
                    for ky in 0..3 {
                        let iy = y as isize + ky as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = xp as isize + kx as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let idx = plane_base + iy as usize * w + ix as usize;
                            xs[idx] = xs[idx] + ds[col_base + ky * 3 + kx];
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Output cell `(i, j)` averages input rows `[floor(i*H/r), ceil((i+1)*H/r))`
/// and likewise in width.
fn pool_window(i: usize, input: usize, target: usize) -> (usize, usize) {
    let start = i * input / target;
    let end = ((i + 1) * input).div_ceil(target);
    (start, end)
}

fn pool_forward<E: Elem>(x: &Array4<E>, target: usize) -> Result<Array4<E>> {
    let (n, c, h, w) = x.dim();
    if target == 0 || target > h || target > w {
        return Err(PecError::ShapeMismatch(format!(
            "pool target {target} out of range for {h}x{w}"
        )));
    }
    let mut out = Array4::<E>::zeros((n, c, target, target));
    for i in 0..n {
        for ch in 0..c {
            for oy in 0..target {
                let (ys, ye) = pool_window(oy, h, target);
                for ox in 0..target {
                    let (xs, xe) = pool_window(ox, w, target);
                    let mut acc = 0.0f64;
                    for y in ys..ye {
                        for xp in xs..xe {
                            acc += x[[i, ch, y, xp]].to_f64();
                        }
                    }
                    let count = ((ye - ys) * (xe - xs)) as f64;
                    out[[i, ch, oy, ox]] = E::from_f64(acc / count);
                }
            }
        }
    }
    Ok(out)
}

fn pool_backward<E: Elem>(g: &Array4<E>, in_shape: &[usize], target: usize) -> Array4<E> {
    let (n, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let mut acc = ndarray::Array4::<f64>::zeros((n, c, h, w));
    for i in 0..n {
        for ch in 0..c {
            for oy in 0..target {
                let (ys, ye) = pool_window(oy, h, target);
                for ox in 0..target {
                    let (xs, xe) = pool_window(ox, w, target);
                    let count = ((ye - ys) * (xe - xs)) as f64;
                    let gv = g[[i, ch, oy, ox]].to_f64() / count;
                    for y in ys..ye {
                        for xp in xs..xe {
                            acc[[i, ch, y, xp]] += gv;
                        }
                    }
                }
            }
        }
    }
    acc.mapv(E::from_f64)
}
