//! Graph operations: eager forward construction and backward rules.

use ndarray::{Array2, ArrayD, Axis, Ix2, IxDyn};

use super::{ConvCache, Graph, Op, TensorId};
use crate::error::{Error, Result};

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// How conv2d treats samples outside the input bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    /// Out-of-bounds taps contribute zero and receive no gradient.
    Zero,
    /// Out-of-bounds taps read the mirrored in-bounds sample, which also
    /// accumulates their gradient.
    Reflect,
}

/// Index into `[0, len)` with reflect-at-boundaries folding (no edge repeat).
pub(crate) fn reflect_index(i: isize, len: usize) -> usize {
    debug_assert!(len > 0);
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// (outer, axis_len, inner) strides decomposition for axis reductions.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let axis_len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, axis_len, inner)
}

impl Graph {
    fn needs_pair(&self, a: TensorId, b: TensorId) -> bool {
        self.needs(a) || self.needs(b)
    }

    fn check_axis(&self, op: &'static str, a: TensorId, axis: usize) -> Result<()> {
        if axis >= self.shape(a).len() {
            return Err(shape_err(op, self.shape(a), &[axis]));
        }
        Ok(())
    }

    fn binary_same_shape(
        &mut self,
        op_name: &'static str,
        a: TensorId,
        b: TensorId,
    ) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op_name, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape("add", a, b)?;
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        let ng = self.needs_pair(a, b);
        Ok(self.push(v, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape("sub", a, b)?;
        let v = &self.nodes[a.0].value - &self.nodes[b.0].value;
        let ng = self.needs_pair(a, b);
        Ok(self.push(v, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape("mul", a, b)?;
        let v = &self.nodes[a.0].value * &self.nodes[b.0].value;
        let ng = self.needs_pair(a, b);
        Ok(self.push(v, Op::Mul(a, b), ng))
    }

    pub fn scalar_mul(&mut self, a: TensorId, k: f64) -> TensorId {
        let v = self.nodes[a.0].value.mapv(|x| x * k);
        let ng = self.needs(a);
        self.push(v, Op::ScalarMul(a, k), ng)
    }

    pub fn scalar_add(&mut self, a: TensorId, k: f64) -> TensorId {
        let v = self.nodes[a.0].value.mapv(|x| x + k);
        let ng = self.needs(a);
        self.push(v, Op::ScalarAdd(a), ng)
    }

    pub fn neg(&mut self, a: TensorId) -> TensorId {
        self.scalar_mul(a, -1.0)
    }

    /// 2-D matrix product.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", &sa, &sb));
        }
        let av = self.nodes[a.0]
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .expect("checked 2-D");
        let bv = self.nodes[b.0]
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .expect("checked 2-D");
        let v = av.dot(&bv).into_dyn();
        let ng = self.needs_pair(a, b);
        Ok(self.push(v, Op::MatMul(a, b), ng))
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let v = self.nodes[a.0].value.mapv(|x| x.max(0.0));
        let ng = self.needs(a);
        self.push(v, Op::Relu(a), ng)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let v = self.nodes[a.0].value.mapv(sigmoid_scalar);
        let ng = self.needs(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    /// Numerically stable log(1 + e^x).
    pub fn softplus(&mut self, a: TensorId) -> TensorId {
        let v = self.nodes[a.0].value.mapv(softplus_scalar);
        let ng = self.needs(a);
        self.push(v, Op::Softplus(a), ng)
    }

    pub fn exp(&mut self, a: TensorId) -> TensorId {
        let v = self.nodes[a.0].value.mapv(f64::exp);
        let ng = self.needs(a);
        self.push(v, Op::Exp(a), ng)
    }

    pub fn log(&mut self, a: TensorId) -> TensorId {
        let v = self.nodes[a.0].value.mapv(f64::ln);
        let ng = self.needs(a);
        self.push(v, Op::Log(a), ng)
    }

    /// log(max(x, floor)); gradient is 1/x above the floor and 0 at or below.
    pub fn log_clamped(&mut self, a: TensorId, floor: f64) -> TensorId {
        let v = self.nodes[a.0].value.mapv(|x| x.max(floor).ln());
        let ng = self.needs(a);
        self.push(v, Op::LogClamped(a, floor), ng)
    }

    pub fn mean_axis(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        self.check_axis("mean_axis", a, axis)?;
        if self.shape(a)[axis] == 0 {
            return Err(Error::InvalidInput("mean_axis over empty axis".into()));
        }
        let v = self.nodes[a.0]
            .value
            .mean_axis(Axis(axis))
            .expect("non-empty axis");
        let ng = self.needs(a);
        Ok(self.push(v, Op::MeanAxis(a, axis), ng))
    }

    pub fn sum_axis(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        self.check_axis("sum_axis", a, axis)?;
        let v = self.nodes[a.0].value.sum_axis(Axis(axis));
        let ng = self.needs(a);
        Ok(self.push(v, Op::SumAxis(a, axis), ng))
    }

    /// Maximum along `axis`. Backward routes the gradient to the first
    /// argmax position only; ties are broken by the lowest index.
    pub fn max_axis(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        self.check_axis("max_axis", a, axis)?;
        let shape = self.shape(a).to_vec();
        if shape[axis] == 0 {
            return Err(Error::InvalidInput("max_axis over empty axis".into()));
        }
        let (outer, axis_len, inner) = axis_split(&shape, axis);
        let src = self.nodes[a.0].value.as_slice().expect("standard layout");
        let mut out = Vec::with_capacity(outer * inner);
        let mut argmax = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut best = f64::NEG_INFINITY;
                let mut best_flat = (o * axis_len) * inner + i;
                for j in 0..axis_len {
                    let flat = (o * axis_len + j) * inner + i;
                    if src[flat] > best {
                        best = src[flat];
                        best_flat = flat;
                    }
                }
                out.push(best);
                argmax.push(best_flat);
            }
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let v = ArrayD::from_shape_vec(IxDyn(&out_shape), out).expect("shape product matches");
        let ng = self.needs(a);
        Ok(self.push(v, Op::MaxAxis { input: a, argmax }, ng))
    }

    pub fn reshape(&mut self, a: TensorId, shape: &[usize]) -> Result<TensorId> {
        let old: usize = self.shape(a).iter().product();
        let new: usize = shape.iter().product();
        if old != new {
            return Err(shape_err("reshape", self.shape(a), shape));
        }
        let v = self.nodes[a.0]
            .value
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .expect("length checked");
        let ng = self.needs(a);
        Ok(self.push(v, Op::Reshape(a), ng))
    }

    /// Rectangular slice: one half-open `(start, end)` range per axis.
    pub fn slice(&mut self, a: TensorId, ranges: &[(usize, usize)]) -> Result<TensorId> {
        let shape = self.shape(a).to_vec();
        if ranges.len() != shape.len()
            || ranges
                .iter()
                .zip(&shape)
                .any(|(&(s, e), &d)| s > e || e > d)
        {
            return Err(Error::InvalidInput(format!(
                "slice ranges {ranges:?} invalid for shape {shape:?}"
            )));
        }
        let out_shape: Vec<usize> = ranges.iter().map(|&(s, e)| e - s).collect();
        let n_out: usize = out_shape.iter().product();
        let mut index_map = Vec::with_capacity(n_out);
        let mut out = Vec::with_capacity(n_out);
        let src = self.nodes[a.0].value.as_slice().expect("standard layout");
        // Row-major walk over the output rectangle.
        let mut idx = vec![0usize; out_shape.len()];
        for _ in 0..n_out {
            let mut flat = 0usize;
            for (d, &i) in idx.iter().enumerate() {
                flat = flat * shape[d] + (ranges[d].0 + i);
            }
            index_map.push(flat);
            out.push(src[flat]);
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < out_shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        let v = ArrayD::from_shape_vec(IxDyn(&out_shape), out).expect("shape product matches");
        let ng = self.needs(a);
        Ok(self.push(v, Op::Slice { input: a, index_map }, ng))
    }

    /// NumPy-style broadcast to `shape`. Backward sums over expanded axes.
    pub fn broadcast_to(&mut self, a: TensorId, shape: &[usize]) -> Result<TensorId> {
        let v = match self.nodes[a.0].value.broadcast(IxDyn(shape)) {
            Some(view) => view.as_standard_layout().to_owned(),
            None => return Err(shape_err("broadcast_to", self.shape(a), shape)),
        };
        let ng = self.needs(a);
        Ok(self.push(v, Op::BroadcastTo(a), ng))
    }

    /// 2-D transpose.
    pub fn transpose2(&mut self, a: TensorId) -> Result<TensorId> {
        if self.shape(a).len() != 2 {
            return Err(shape_err("transpose2", self.shape(a), &[]));
        }
        let v = self.nodes[a.0]
            .value
            .t()
            .as_standard_layout()
            .to_owned()
            .into_dyn();
        let ng = self.needs(a);
        Ok(self.push(v, Op::Transpose2(a), ng))
    }

    /// Split a 1-D signal into overlapping frames of `window` samples every
    /// `hop` samples, reflect-padded by `window/2` on both sides so that
    /// the frame count is `len/hop + 1`. Output shape `(frames, window)`.
    pub fn frame_signal(&mut self, a: TensorId, window: usize, hop: usize) -> Result<TensorId> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 1 {
            return Err(shape_err("frame_signal", &shape, &[window]));
        }
        let len = shape[0];
        if hop == 0 || window == 0 || len < hop {
            return Err(Error::InvalidInput(format!(
                "frame_signal needs len >= hop, got len {len}, window {window}, hop {hop}"
            )));
        }
        let n_frames = len / hop + 1;
        let half = (window / 2) as isize;
        let src = self.nodes[a.0].value.as_slice().expect("standard layout");
        let mut index_map = Vec::with_capacity(n_frames * window);
        let mut out = Vec::with_capacity(n_frames * window);
        for t in 0..n_frames {
            let start = (t * hop) as isize - half;
            for n in 0..window {
                let flat = reflect_index(start + n as isize, len);
                index_map.push(flat);
                out.push(src[flat]);
            }
        }
        let v = ArrayD::from_shape_vec(IxDyn(&[n_frames, window]), out)
            .expect("shape product matches");
        let ng = self.needs(a);
        Ok(self.push(v, Op::Frame { input: a, index_map }, ng))
    }

    /// 2-D convolution. Input `(c_in, h, w)`, kernel `(c_out, c_in, kh, kw)`.
    /// Implemented as an im2col gather plus one GEMM; reflect padding routes
    /// gradients to the mirrored source samples through the gather map.
    pub fn conv2d(
        &mut self,
        input: TensorId,
        kernel: TensorId,
        stride: (usize, usize),
        pad: (usize, usize),
        pad_mode: PadMode,
    ) -> Result<TensorId> {
        let si = self.shape(input).to_vec();
        let sk = self.shape(kernel).to_vec();
        if si.len() != 3 || sk.len() != 4 || si[0] != sk[1] {
            return Err(shape_err("conv2d", &si, &sk));
        }
        let (c_in, h, w) = (si[0], si[1], si[2]);
        let (c_out, kh, kw) = (sk[0], sk[2], sk[3]);
        let (sh, sw) = stride;
        if sh == 0 || sw == 0 {
            return Err(Error::InvalidInput("conv2d stride must be positive".into()));
        }
        let (ph, pw) = pad;
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(shape_err("conv2d", &si, &sk));
        }
        let oh = (h + 2 * ph - kh) / sh + 1;
        let ow = (w + 2 * pw - kw) / sw + 1;
        let n = oh * ow;
        let k = c_in * kh * kw;

        let src = self.nodes[input.0].value.as_slice().expect("standard layout");
        let mut index_map = vec![usize::MAX; n * k];
        let mut cols = Array2::<f64>::zeros((n, k));
        {
            let cols_slice = cols.as_slice_mut().expect("fresh array");
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = oy * ow + ox;
                    for ci in 0..c_in {
                        for u in 0..kh {
                            let y = (oy * sh + u) as isize - ph as isize;
                            let y = match pad_mode {
                                PadMode::Zero => {
                                    if y < 0 || y >= h as isize {
                                        continue;
                                    }
                                    y as usize
                                }
                                PadMode::Reflect => reflect_index(y, h),
                            };
                            for v in 0..kw {
                                let x = (ox * sw + v) as isize - pw as isize;
                                let x = match pad_mode {
                                    PadMode::Zero => {
                                        if x < 0 || x >= w as isize {
                                            continue;
                                        }
                                        x as usize
                                    }
                                    PadMode::Reflect => reflect_index(x, w),
                                };
                                let col = (ci * kh + u) * kw + v;
                                let flat = (ci * h + y) * w + x;
                                index_map[row * k + col] = flat;
                                cols_slice[row * k + col] = src[flat];
                            }
                        }
                    }
                }
            }
        }

        let kmat = self.nodes[kernel.0]
            .value
            .view()
            .into_shape_with_order((c_out, k))
            .expect("kernel is contiguous");
        // (n, k) x (k, c_out) -> (n, c_out), then transpose to (c_out, oh, ow).
        let out_mat = cols.dot(&kmat.t());
        let v = out_mat
            .t()
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order(IxDyn(&[c_out, oh, ow]))
            .expect("shape product matches");
        let ng = self.needs_pair(input, kernel);
        Ok(self.push(
            v,
            Op::Conv2d(Box::new(ConvCache {
                input,
                kernel,
                cols,
                index_map,
                out_spatial: (oh, ow),
            })),
            ng,
        ))
    }

    /// Mean of all elements, as a 0-dimensional tensor.
    pub fn mean_all(&mut self, a: TensorId) -> Result<TensorId> {
        let n: usize = self.shape(a).iter().product();
        let flat = self.reshape(a, &[n])?;
        self.mean_axis(flat, 0)
    }

    /// Sum of all elements, as a 0-dimensional tensor.
    pub fn sum_all(&mut self, a: TensorId) -> Result<TensorId> {
        let n: usize = self.shape(a).iter().product();
        let flat = self.reshape(a, &[n])?;
        self.sum_axis(flat, 0)
    }

    pub(crate) fn apply_backward(&mut self, i: usize, g_out: &ArrayD<f64>) -> Result<()> {
        // The op is moved out for the duration of the arm so its cached
        // indices stay readable while gradients are written into nodes.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                self.accumulate(a, g_out.clone());
                self.accumulate(b, g_out.clone());
            }
            Op::Sub(a, b) => {
                let (a, b) = (*a, *b);
                self.accumulate(a, g_out.clone());
                if self.needs(b) {
                    self.accumulate(b, g_out.mapv(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if self.needs(a) {
                    let d = g_out * &self.nodes[b.0].value;
                    self.accumulate(a, d);
                }
                if self.needs(b) {
                    let d = g_out * &self.nodes[a.0].value;
                    self.accumulate(b, d);
                }
            }
            Op::ScalarMul(a, k) => {
                let (a, k) = (*a, *k);
                self.accumulate(a, g_out.mapv(|x| x * k));
            }
            Op::ScalarAdd(a) => {
                self.accumulate(*a, g_out.clone());
            }
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let g2 = g_out.view().into_dimensionality::<Ix2>().expect("2-D");
                if self.needs(a) {
                    let bv = self.nodes[b.0]
                        .value
                        .view()
                        .into_dimensionality::<Ix2>()
                        .expect("2-D");
                    let d = g2.dot(&bv.t()).into_dyn();
                    self.accumulate(a, d);
                }
                if self.needs(b) {
                    let av = self.nodes[a.0]
                        .value
                        .view()
                        .into_dimensionality::<Ix2>()
                        .expect("2-D");
                    let d = av.t().dot(&g2).into_dyn();
                    self.accumulate(b, d);
                }
            }
            Op::Conv2d(cache) => {
                let input = cache.input;
                let kernel = cache.kernel;
                let (oh, ow) = cache.out_spatial;
                let sk = self.nodes[kernel.0].value.shape().to_vec();
                let (c_out, k) = (sk[0], sk[1] * sk[2] * sk[3]);
                let n = oh * ow;
                // Gradient arrives as (c_out, oh, ow); the GEMMs want (n, c_out).
                let g_mat = g_out
                    .view()
                    .into_shape_with_order((c_out, n))
                    .expect("contiguous gradient");
                let g_nc = g_mat.t().as_standard_layout().to_owned();
                if self.needs(kernel) {
                    let dk_kc = cache.cols.t().dot(&g_nc); // (k, c_out)
                    let dk = dk_kc
                        .t()
                        .as_standard_layout()
                        .to_owned()
                        .into_shape_with_order(IxDyn(&sk))
                        .expect("shape product matches");
                    self.accumulate(kernel, dk);
                }
                if self.needs(input) {
                    let kmat = self.nodes[kernel.0]
                        .value
                        .view()
                        .into_shape_with_order((c_out, k))
                        .expect("contiguous kernel");
                    let dcols = g_nc.dot(&kmat); // (n, k)
                    let in_shape = self.nodes[input.0].value.shape().to_vec();
                    let mut dx = ArrayD::<f64>::zeros(IxDyn(&in_shape));
                    {
                        let dxs = dx.as_slice_mut().expect("fresh array");
                        let dcols_s = dcols.as_slice().expect("standard layout");
                        for (e, &flat) in cache.index_map.iter().enumerate() {
                            if flat != usize::MAX {
                                dxs[flat] += dcols_s[e];
                            }
                        }
                    }
                    self.accumulate(input, dx);
                }
            }
            Op::Relu(a) => {
                let a = *a;
                let mask = self.nodes[a.0]
                    .value
                    .mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                self.accumulate(a, g_out * &mask);
            }
            Op::Sigmoid(a) => {
                let a = *a;
                let s = &self.nodes[i].value;
                let d = g_out * &(s * &s.mapv(|y| 1.0 - y));
                self.accumulate(a, d);
            }
            Op::Softplus(a) => {
                let a = *a;
                let d = g_out * &self.nodes[a.0].value.mapv(sigmoid_scalar);
                self.accumulate(a, d);
            }
            Op::Exp(a) => {
                let a = *a;
                let d = g_out * &self.nodes[i].value;
                self.accumulate(a, d);
            }
            Op::Log(a) => {
                let a = *a;
                let d = g_out * &self.nodes[a.0].value.mapv(|x| 1.0 / x);
                self.accumulate(a, d);
            }
            Op::LogClamped(a, floor) => {
                let (a, floor) = (*a, *floor);
                let d = g_out
                    * &self.nodes[a.0]
                        .value
                        .mapv(|x| if x > floor { 1.0 / x } else { 0.0 });
                self.accumulate(a, d);
            }
            Op::MeanAxis(a, axis) => {
                let (a, axis) = (*a, *axis);
                let shape = self.nodes[a.0].value.shape().to_vec();
                let (outer, axis_len, inner) = axis_split(&shape, axis);
                let scale = 1.0 / axis_len as f64;
                let g_slice = g_out.as_slice().expect("standard layout");
                let mut d = ArrayD::<f64>::zeros(IxDyn(&shape));
                {
                    let ds = d.as_slice_mut().expect("fresh array");
                    for o in 0..outer {
                        for j in 0..axis_len {
                            for ii in 0..inner {
                                ds[(o * axis_len + j) * inner + ii] =
                                    g_slice[o * inner + ii] * scale;
                            }
                        }
                    }
                }
                self.accumulate(a, d);
            }
            Op::SumAxis(a, axis) => {
                let (a, axis) = (*a, *axis);
                let shape = self.nodes[a.0].value.shape().to_vec();
                let (outer, axis_len, inner) = axis_split(&shape, axis);
                let g_slice = g_out.as_slice().expect("standard layout");
                let mut d = ArrayD::<f64>::zeros(IxDyn(&shape));
                {
                    let ds = d.as_slice_mut().expect("fresh array");
                    for o in 0..outer {
                        for j in 0..axis_len {
                            for ii in 0..inner {
                                ds[(o * axis_len + j) * inner + ii] = g_slice[o * inner + ii];
                            }
                        }
                    }
                }
                self.accumulate(a, d);
            }
            Op::MaxAxis { input, argmax } => {
                let input = *input;
                let shape = self.nodes[input.0].value.shape().to_vec();
                let g_slice = g_out.as_slice().expect("standard layout");
                let mut d = ArrayD::<f64>::zeros(IxDyn(&shape));
                {
                    let ds = d.as_slice_mut().expect("fresh array");
                    for (out_flat, &in_flat) in argmax.iter().enumerate() {
                        ds[in_flat] += g_slice[out_flat];
                    }
                }
                self.accumulate(input, d);
            }
            Op::Reshape(a) => {
                let a = *a;
                let shape = self.nodes[a.0].value.shape().to_vec();
                let d = g_out
                    .clone()
                    .into_shape_with_order(IxDyn(&shape))
                    .expect("same length");
                self.accumulate(a, d);
            }
            Op::Slice { input, index_map } => {
                let input = *input;
                let shape = self.nodes[input.0].value.shape().to_vec();
                let g_slice = g_out.as_slice().expect("standard layout");
                let mut d = ArrayD::<f64>::zeros(IxDyn(&shape));
                {
                    let ds = d.as_slice_mut().expect("fresh array");
                    for (e, &flat) in index_map.iter().enumerate() {
                        ds[flat] += g_slice[e];
                    }
                }
                self.accumulate(input, d);
            }
            Op::BroadcastTo(a) => {
                let a = *a;
                let small = self.nodes[a.0].value.shape().to_vec();
                let big = self.nodes[i].value.shape().to_vec();
                // Sum over prepended axes, then over axes broadcast from 1.
                let mut d = g_out.clone();
                for _ in 0..big.len() - small.len() {
                    d = d.sum_axis(Axis(0));
                }
                for (ax, &s) in small.iter().enumerate() {
                    if s == 1 && d.shape()[ax] != 1 {
                        let summed = d.sum_axis(Axis(ax));
                        d = summed.insert_axis(Axis(ax));
                    }
                }
                self.accumulate(a, d);
            }
            Op::Transpose2(a) => {
                let a = *a;
                let d = g_out
                    .view()
                    .into_dimensionality::<Ix2>()
                    .expect("2-D")
                    .t()
                    .as_standard_layout()
                    .to_owned()
                    .into_dyn();
                self.accumulate(a, d);
            }
            Op::Frame { input, index_map } => {
                let input = *input;
                let shape = self.nodes[input.0].value.shape().to_vec();
                let g_slice = g_out.as_slice().expect("standard layout");
                let mut d = ArrayD::<f64>::zeros(IxDyn(&shape));
                {
                    let ds = d.as_slice_mut().expect("fresh array");
                    for (e, &flat) in index_map.iter().enumerate() {
                        ds[flat] += g_slice[e];
                    }
                }
                self.accumulate(input, d);
            }
        }
        self.nodes[i].op = op;
        Ok(())
    }
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus_scalar(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
