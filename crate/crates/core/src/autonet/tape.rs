use super::params::{ParamId, ParamStore};
use super::{Real, Tensor};
use crate::error::{shape_mismatch, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Input,
    Param(ParamId),
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        k: usize,
    },
    Relu(Var),
    MaxPool2 {
        x: Var,
        arg: Vec<u32>,
    },
    Upsample2(Var),
    Add(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Reshape(Var),
    GlobalAvgPool(Var),
    Scale(Var, T),
    /// `scale * sum((pred - target)^2)`
    Sse {
        pred: Var,
        target: Vec<T>,
        scale: T,
    },
    SumScalars(Vec<Var>),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Records primitive operations in execution order (which is a topological order)
/// so `backward` can visit each node exactly once in reverse.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut col[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let out = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out.iter_mut().for_each(|v| *v = T::ZERO);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (xo, o) in out.iter_mut().enumerate() {
                        let sx = xo as isize + dx;
                        *o = if sx < 0 || sx >= w as isize {
                            T::ZERO
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Real>(col: &[T], c: usize, h: usize, w: usize, k: usize, dx: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &col[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let ddx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for xo in 0..w {
                        let sx = xo as isize + ddx;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += src[y * w + xo];
                        }
                    }
                }
            }
        }
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data[0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id))
    }

    /// Same-padding stride-1 convolution; `w` is `(c_out, c_in, k, k)`, `b` is `(c_out)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4
            || ws.len() != 4
            || ws[2] != ws[3]
            || ws[2].is_multiple_of(2)
            || ws[1] != xs[1]
        {
            return Err(shape_mismatch(format!(
                "conv2d input {xs:?} with kernel {ws:?}"
            )));
        }
        if self.shape(b) != [ws[0]] {
            return Err(shape_mismatch(format!(
                "conv2d bias {:?} for {} output channels",
                self.shape(b),
                ws[0]
            )));
        }
        let (n, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, k) = (ws[0], ws[2]);
        let hw = h * wd;
        let ckk = cin * k * k;
        let mut out = Tensor::zeros(vec![n, cout, h, wd]);
        let mut col = if k == 1 {
            Vec::new()
        } else {
            vec![T::ZERO; ckk * hw]
        };
        {
            let xv = &self.nodes[x.0].value.data;
            let wv = &self.nodes[w.0].value.data;
            let bv = &self.nodes[b.0].value.data;
            for bi in 0..n {
                let xb = &xv[bi * cin * hw..(bi + 1) * cin * hw];
                let ob = &mut out.data[bi * cout * hw..(bi + 1) * cout * hw];
                for (co, chunk) in ob.chunks_mut(hw).enumerate() {
                    chunk.iter_mut().for_each(|v| *v = bv[co]);
                }
                let src: &[T] = if k == 1 {
                    xb
                } else {
                    im2col(xb, cin, h, wd, k, &mut col);
                    &col
                };
                T::gemm(
                    cout,
                    ckk,
                    hw,
                    T::ONE,
                    (wv, ckk as isize, 1),
                    (src, hw as isize, 1),
                    T::ONE,
                    (ob, hw as isize, 1),
                );
            }
        }
        Ok(self.push(out, Op::Conv2d { x, w, b, k }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| if a > T::ZERO { a } else { T::ZERO });
        self.push(v, Op::Relu(x))
    }

    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || !xs[2].is_multiple_of(2) || !xs[3].is_multiple_of(2) {
            return Err(shape_mismatch(format!(
                "max_pool_2x needs even H, W; got {xs:?}"
            )));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (ho, wo) = (h / 2, w / 2);
        let mut out = Tensor::zeros(vec![n, c, ho, wo]);
        let mut arg = vec![0u32; n * c * ho * wo];
        let xv = &self.nodes[x.0].value.data;
        for p in 0..n * c {
            let base = p * h * w;
            for y in 0..ho {
                for xo in 0..wo {
                    let mut best = base + 2 * y * w + 2 * xo;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * y + dy) * w + 2 * xo + dx;
                        if xv[idx] > xv[best] {
                            best = idx;
                        }
                    }
                    let o = (p * ho + y) * wo + xo;
                    out.data[o] = xv[best];
                    arg[o] = best as u32;
                }
            }
        }
        Ok(self.push(out, Op::MaxPool2 { x, arg }))
    }

    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 {
            return Err(shape_mismatch(format!("upsample needs NCHW, got {xs:?}")));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let mut out = Tensor::zeros(vec![n, c, 2 * h, 2 * w]);
        let xv = &self.nodes[x.0].value.data;
        for p in 0..n * c {
            for y in 0..2 * h {
                for xo in 0..2 * w {
                    out.data[(p * 2 * h + y) * 2 * w + xo] = xv[(p * h + y / 2) * w + xo / 2];
                }
            }
        }
        Ok(self.push(out, Op::Upsample2(x)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_mismatch(format!(
                "add {:?} + {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let out = Tensor {
            shape: av.shape.clone(),
            data: av.data.iter().zip(&bv.data).map(|(&p, &q)| p + q).collect(),
        };
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// `x: (n, in)`, `w: (out, in)`, `b: (out)` -> `(n, out)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || ws[1] != xs[1] || self.shape(b) != [ws[0]] {
            return Err(shape_mismatch(format!(
                "linear input {xs:?} with weight {ws:?} and bias {:?}",
                self.shape(b)
            )));
        }
        let (n, din, dout) = (xs[0], xs[1], ws[0]);
        let mut out = Tensor::zeros(vec![n, dout]);
        let bv = &self.nodes[b.0].value.data;
        for row in out.data.chunks_mut(dout) {
            row.copy_from_slice(bv);
        }
        T::gemm(
            n,
            din,
            dout,
            T::ONE,
            (&self.nodes[x.0].value.data, din as isize, 1),
            (&self.nodes[w.0].value.data, 1, din as isize),
            T::ONE,
            (&mut out.data, dout as isize, 1),
        );
        Ok(self.push(out, Op::Linear { x, w, b }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let v = self.value(x);
        if shape.iter().product::<usize>() != v.len() || shape.len() > 4 {
            return Err(shape_mismatch(format!(
                "cannot reshape {:?} to {shape:?}",
                v.shape
            )));
        }
        let out = Tensor {
            shape,
            data: v.data.clone(),
        };
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// `(n, c, h, w)` -> `(n, c)` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 {
            return Err(shape_mismatch(format!(
                "global pool needs NCHW, got {xs:?}"
            )));
        }
        let hw = xs[2] * xs[3];
        let inv = T::from_f64(1.0 / hw as f64);
        let data = self.nodes[x.0]
            .value
            .data
            .chunks(hw)
            .map(|p| {
                let mut s = T::ZERO;
                for &v in p {
                    s += v;
                }
                s * inv
            })
            .collect();
        let out = Tensor {
            shape: vec![xs[0], xs[1]],
            data,
        };
        Ok(self.push(out, Op::GlobalAvgPool(x)))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let v = self.value(x).map(|a| a * s);
        self.push(v, Op::Scale(x, s))
    }

    /// `scale * sum((pred - target)^2)` as a scalar.
    pub fn sse(&mut self, pred: Var, target: Vec<T>, scale: T) -> Result<Var> {
        let p = &self.nodes[pred.0].value;
        if p.len() != target.len() {
            return Err(shape_mismatch(format!(
                "loss prediction has {} values, target {}",
                p.len(),
                target.len()
            )));
        }
        let mut s = T::ZERO;
        for (&a, &b) in p.data.iter().zip(&target) {
            let d = a - b;
            s += d * d;
        }
        let out = Tensor {
            shape: vec![1],
            data: vec![s * scale],
        };
        Ok(self.push(
            out,
            Op::Sse {
                pred,
                target,
                scale,
            },
        ))
    }

    pub fn sum_scalars(&mut self, xs: &[Var]) -> Var {
        let mut s = T::ZERO;
        for &x in xs {
            s += self.scalar(x);
        }
        let out = Tensor {
            shape: vec![1],
            data: vec![s],
        };
        self.push(out, Op::SumScalars(xs.to_vec()))
    }

    fn accumulate(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
        grads[v.0].get_or_insert_with(|| vec![T::ZERO; len])
    }

    /// Reverse sweep from scalar `loss`. Gradients of earlier sweeps are discarded.
    pub fn backward(&mut self, loss: Var) {
        let n = self.nodes.len();
        self.grads = (0..n).map(|_| None).collect();
        self.grads[loss.0] = Some(vec![T::ONE; self.nodes[loss.0].value.len()]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let grads = &mut self.grads;
            match &node.op {
                Op::Input | Op::Param(_) => {}
                Op::Conv2d { x, w, b, k } => {
                    let xv = &self.nodes[x.0].value;
                    let wv = &self.nodes[w.0].value;
                    let (nb, cin, h, wd) = xv.nchw();
                    let (cout, k) = (wv.shape[0], *k);
                    let hw = h * wd;
                    let ckk = cin * k * k;
                    let mut col = if k == 1 {
                        Vec::new()
                    } else {
                        vec![T::ZERO; ckk * hw]
                    };
                    let mut dcol = vec![T::ZERO; ckk * hw];
                    let mut dw = vec![T::ZERO; wv.len()];
                    let mut db = vec![T::ZERO; cout];
                    let mut dx = vec![T::ZERO; xv.len()];
                    for bi in 0..nb {
                        let xb = &xv.data[bi * cin * hw..(bi + 1) * cin * hw];
                        let gb = &g[bi * cout * hw..(bi + 1) * cout * hw];
                        for (co, chunk) in gb.chunks(hw).enumerate() {
                            let mut s = T::ZERO;
                            for &v in chunk {
                                s += v;
                            }
                            db[co] += s;
                        }
                        let src: &[T] = if k == 1 {
                            xb
                        } else {
                            im2col(xb, cin, h, wd, k, &mut col);
                            &col
                        };
                        // dW += g_b * col^T
                        T::gemm(
                            cout,
                            hw,
                            ckk,
                            T::ONE,
                            (gb, hw as isize, 1),
                            (src, 1, hw as isize),
                            T::ONE,
                            (&mut dw, ckk as isize, 1),
                        );
                        // dcol = W^T * g_b
                        let dxb = &mut dx[bi * cin * hw..(bi + 1) * cin * hw];
                        if k == 1 {
                            T::gemm(
                                ckk,
                                cout,
                                hw,
                                T::ONE,
                                (&wv.data, 1, ckk as isize),
                                (gb, hw as isize, 1),
                                T::ONE,
                                (dxb, hw as isize, 1),
                            );
                        } else {
                            T::gemm(
                                ckk,
                                cout,
                                hw,
                                T::ONE,
                                (&wv.data, 1, ckk as isize),
                                (gb, hw as isize, 1),
                                T::ZERO,
                                (&mut dcol, hw as isize, 1),
                            );
                            col2im_add(&dcol, cin, h, wd, k, dxb);
                        }
                    }
                    add_into(Self::accumulate(grads, *x, dx.len()), &dx);
                    add_into(Self::accumulate(grads, *w, dw.len()), &dw);
                    add_into(Self::accumulate(grads, *b, db.len()), &db);
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[x.0].value.data;
                    let gx = Self::accumulate(grads, *x, xv.len());
                    for ((acc, &gi), &xi) in gx.iter_mut().zip(&g).zip(xv) {
                        if xi > T::ZERO {
                            *acc += gi;
                        }
                    }
                }
                Op::MaxPool2 { x, arg } => {
                    let len = self.nodes[x.0].value.len();
                    let gx = Self::accumulate(grads, *x, len);
                    for (&gi, &a) in g.iter().zip(arg) {
                        gx[a as usize] += gi;
                    }
                }
                Op::Upsample2(x) => {
                    let xv = &self.nodes[x.0].value;
                    let (n, c, h, w) = xv.nchw();
                    let gx = Self::accumulate(grads, *x, xv.len());
                    for p in 0..n * c {
                        for y in 0..2 * h {
                            for xo in 0..2 * w {
                                gx[(p * h + y / 2) * w + xo / 2] += g[(p * 2 * h + y) * 2 * w + xo];
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(Self::accumulate(grads, *a, g.len()), &g);
                    add_into(Self::accumulate(grads, *b, g.len()), &g);
                }
                Op::Linear { x, w, b } => {
                    let xv = &self.nodes[x.0].value;
                    let wv = &self.nodes[w.0].value;
                    let (n, din) = (xv.shape[0], xv.shape[1]);
                    let dout = wv.shape[0];
                    {
                        let gx = Self::accumulate(grads, *x, xv.len());
                        T::gemm(
                            n,
                            dout,
                            din,
                            T::ONE,
                            (&g, dout as isize, 1),
                            (&wv.data, din as isize, 1),
                            T::ONE,
                            (gx, din as isize, 1),
                        );
                    }
                    {
                        let gw = Self::accumulate(grads, *w, wv.len());
                        T::gemm(
                            dout,
                            n,
                            din,
                            T::ONE,
                            (&g, 1, dout as isize),
                            (&xv.data, din as isize, 1),
                            T::ONE,
                            (gw, din as isize, 1),
                        );
                    }
                    let gb = Self::accumulate(grads, *b, dout);
                    for row in g.chunks(dout) {
                        add_into(gb, row);
                    }
                }
                Op::Reshape(x) => {
                    add_into(Self::accumulate(grads, *x, g.len()), &g);
                }
                Op::GlobalAvgPool(x) => {
                    let xv = &self.nodes[x.0].value;
                    let hw = xv.shape[2] * xv.shape[3];
                    let inv = T::from_f64(1.0 / hw as f64);
                    let gx = Self::accumulate(grads, *x, xv.len());
                    for (p, chunk) in gx.chunks_mut(hw).enumerate() {
                        let v = g[p] * inv;
                        chunk.iter_mut().for_each(|c| *c += v);
                    }
                }
                Op::Scale(x, s) => {
                    let gx = Self::accumulate(grads, *x, g.len());
                    for (acc, &gi) in gx.iter_mut().zip(&g) {
                        *acc += gi * *s;
                    }
                }
                Op::Sse {
                    pred,
                    target,
                    scale,
                } => {
                    let pv = &self.nodes[pred.0].value.data;
                    let f = g[0] * T::from_f64(2.0) * *scale;
                    let gp = Self::accumulate(grads, *pred, pv.len());
                    for ((acc, &p), &t) in gp.iter_mut().zip(pv).zip(target) {
                        *acc += f * (p - t);
                    }
                }
                Op::SumScalars(xs) => {
                    for x in xs {
                        Self::accumulate(grads, *x, 1)[0] += g[0];
                    }
                }
            }
            // Keep gradients of leaves for the caller.
            if matches!(self.nodes[idx].op, Op::Input | Op::Param(_)) {
                self.grads[idx] = Some(g);
            }
        }
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of every parameter leaf, summed when a parameter was loaded more
    /// than once, indexed like `store`.
    pub fn param_grads(&self, store: &ParamStore<T>) -> Vec<Vec<T>> {
        let mut out: Vec<Vec<T>> = store.iter().map(|t| vec![T::ZERO; t.len()]).collect();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if let Some(Some(g)) = self.grads.get(idx) {
                    add_into(&mut out[id.index()], g);
                }
            }
        }
        out
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = rand_tensor(&mut rng, vec![2, 3, 5, 4]);
        let mut w = Tensor::zeros(vec![3, 3, 1, 1]);
        for c in 0..3 {
            w.data[c * 3 + c] = 1.0;
        }
        let mut tape = Tape::new();
        let (xv, wv, bv) = (
            tape.input(x.clone()),
            tape.input(w),
            tape.input(Tensor::zeros(vec![3])),
        );
        let y = tape.conv2d(xv, wv, bv).unwrap();
        assert_eq!(tape.value(y), &x);

        // A 3x3 kernel with only the center tap is also the identity.
        let mut w3 = Tensor::zeros(vec![3, 3, 3, 3]);
        for c in 0..3 {
            w3.data[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
        }
        let wv = tape.input(w3);
        let y = tape.conv2d(xv, wv, bv).unwrap();
        assert_eq!(tape.value(y), &x);
    }

    #[test]
    fn conv_matches_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_tensor(&mut rng, vec![1, 2, 4, 5]);
        let w = rand_tensor(&mut rng, vec![3, 2, 3, 3]);
        let b = rand_tensor(&mut rng, vec![3]);
        let mut tape = Tape::new();
        let (xv, wv, bv) = (
            tape.input(x.clone()),
            tape.input(w.clone()),
            tape.input(b.clone()),
        );
        let y = tape.conv2d(xv, wv, bv).unwrap();
        let out = tape.value(y);
        for co in 0..3 {
            for yy in 0..4i32 {
                for xx in 0..5i32 {
                    let mut s = b.data[co];
                    for ci in 0..2 {
                        for ky in 0..3i32 {
                            for kx in 0..3i32 {
                                let (sy, sx) = (yy + ky - 1, xx + kx - 1);
                                if (0..4).contains(&sy) && (0..5).contains(&sx) {
                                    s += w.data
                                        [((co * 2 + ci) * 3 + ky as usize) * 3 + kx as usize]
                                        * x.data[(ci * 4 + sy as usize) * 5 + sx as usize];
                                }
                            }
                        }
                    }
                    let got = out.data[(co * 4 + yy as usize) * 5 + xx as usize];
                    assert!((got - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pool_then_upsample_constant() {
        let x = Tensor::new(vec![1, 2, 4, 4], vec![0.75; 32]).unwrap();
        let mut tape: Tape<f64> = Tape::new();
        let v = tape.input(x.clone());
        let p = tape.max_pool2(v).unwrap();
        let u = tape.upsample2(p).unwrap();
        assert_eq!(tape.value(u), &x);
        let odd = tape.input(Tensor::zeros(vec![1, 1, 3, 4]));
        assert!(tape.max_pool2(odd).is_err());
    }

    #[test]
    fn shape_errors() {
        let mut tape: Tape<f64> = Tape::new();
        let a = tape.input(Tensor::zeros(vec![1, 2, 4, 4]));
        let b = tape.input(Tensor::zeros(vec![1, 3, 4, 4]));
        assert!(tape.add(a, b).is_err());
        let w = tape.input(Tensor::zeros(vec![2, 3, 3, 3]));
        let bias = tape.input(Tensor::zeros(vec![2]));
        assert!(tape.conv2d(a, w, bias).is_err());
        assert!(tape.sse(a, vec![0.0; 3], 1.0).is_err());
        assert!(tape.reshape(a, vec![5, 7]).is_err());
    }

    #[test]
    fn every_primitive_passes_finite_differences() {
        for (name, err) in crate::autonet::gradcheck::primitive_errors() {
            assert!(err < 1e-3, "{name}: {err}");
        }
    }

    #[test]
    fn f32_and_f64_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = rand_tensor(&mut rng, vec![1, 3, 8, 8]);
        let w = rand_tensor(&mut rng, vec![4, 3, 3, 3]);
        let b = rand_tensor(&mut rng, vec![4]);
        let mut t64 = Tape::new();
        let (a, bw, bb) = (
            t64.input(x.clone()),
            t64.input(w.clone()),
            t64.input(b.clone()),
        );
        let y64 = t64.conv2d(a, bw, bb).unwrap();
        let mut t32: Tape<f32> = Tape::new();
        let (a, bw, bb) = (
            t32.input(x.map(|v| v as f32)),
            t32.input(w.map(|v| v as f32)),
            t32.input(b.map(|v| v as f32)),
        );
        let y32 = t32.conv2d(a, bw, bb).unwrap();
        for (p, q) in t64.value(y64).data.iter().zip(&t32.value(y32).data) {
            assert!((p - *q as f64).abs() < 1e-5);
        }
    }
}
