//! Minimal f64 layers with hand-written backward passes.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Mat = Array2<f64>;

/// Named flat list of parameter tensors; gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub tensors: Vec<Mat>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, t: Mat) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn zeros_like(&self) -> Vec<Mat> {
        self.tensors.iter().map(|t| Mat::zeros(t.raw_dim())).collect()
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

fn xavier<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Mat {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Mat::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-a..a))
}

pub fn normal<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Mat {
    Mat::from_shape_fn((rows, cols), |_| {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
}

impl Linear {
    pub fn new<R: Rng>(p: &mut ParamStore, rng: &mut R, name: &str, d_in: usize, d_out: usize) -> Self {
        Self {
            w: p.add(format!("{name}.weight"), xavier(rng, d_in, d_out)),
            b: p.add(format!("{name}.bias"), Mat::zeros((1, d_out))),
        }
    }

    pub fn forward(&self, p: &ParamStore, x: &Mat) -> Mat {
        x.dot(&p.tensors[self.w]) + &p.tensors[self.b]
    }

    pub fn backward(&self, p: &ParamStore, g: &mut [Mat], x: &Mat, dy: &Mat) -> Mat {
        g[self.w] += &x.t().dot(dy);
        g[self.b] += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&p.tensors[self.w].t())
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu(x: &Mat) -> Mat {
    x.mapv(|v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh()))
}

pub fn gelu_backward(x: &Mat, dy: &Mat) -> Mat {
    let mut dx = x.mapv(|v| {
        let t = (GELU_C * (v + GELU_A * v * v * v)).tanh();
        0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * v * v)
    });
    dx *= dy;
    dx
}

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerNorm {
    pub gamma: usize,
    pub beta: usize,
}

pub struct LnCache {
    xhat: Mat,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(p: &mut ParamStore, name: &str, d: usize) -> Self {
        Self {
            gamma: p.add(format!("{name}.gamma"), Mat::ones((1, d))),
            beta: p.add(format!("{name}.beta"), Mat::zeros((1, d))),
        }
    }

    pub fn forward(&self, p: &ParamStore, x: &Mat) -> (Mat, LnCache) {
        let d = x.ncols() as f64;
        let mean = x.sum_axis(Axis(1)) / d;
        let centered = x - &mean.insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
        let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
        let xhat = centered * &inv_std.view().insert_axis(Axis(1));
        let y = &xhat * &p.tensors[self.gamma] + &p.tensors[self.beta];
        (y, LnCache { xhat, inv_std })
    }

    pub fn backward(&self, p: &ParamStore, g: &mut [Mat], c: &LnCache, dy: &Mat) -> Mat {
        g[self.gamma] += &(dy * &c.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        g[self.beta] += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dxhat = dy * &p.tensors[self.gamma];
        let d = dy.ncols() as f64;
        let s1 = dxhat.sum_axis(Axis(1)).insert_axis(Axis(1));
        let s2 = (&dxhat * &c.xhat).sum_axis(Axis(1)).insert_axis(Axis(1));
        let inner = dxhat * d - &s1 - &(&c.xhat * &s2);
        inner * &(c.inv_std.view().insert_axis(Axis(1)).mapv(|v| v / d))
    }
}

/// Two-layer perceptron `Linear -> GELU -> Linear`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

pub struct MlpCache {
    x: Mat,
    pre: Mat,
    act: Mat,
}

impl Mlp {
    pub fn new<R: Rng>(p: &mut ParamStore, rng: &mut R, name: &str, d_in: usize, hidden: usize, d_out: usize) -> Self {
        Self {
            fc1: Linear::new(p, rng, &format!("{name}.fc1"), d_in, hidden),
            fc2: Linear::new(p, rng, &format!("{name}.fc2"), hidden, d_out),
        }
    }

    pub fn forward(&self, p: &ParamStore, x: &Mat) -> (Mat, MlpCache) {
        let pre = self.fc1.forward(p, x);
        let act = gelu(&pre);
        let y = self.fc2.forward(p, &act);
        (
            y,
            MlpCache {
                x: x.clone(),
                pre,
                act,
            },
        )
    }

    pub fn backward(&self, p: &ParamStore, g: &mut [Mat], c: &MlpCache, dy: &Mat) -> Mat {
        let dact = self.fc2.backward(p, g, &c.act, dy);
        let dpre = gelu_backward(&c.pre, &dact);
        self.fc1.backward(p, g, &c.x, &dpre)
    }
}

/// Row-wise softmax.
pub fn softmax_rows(x: &Mat) -> Mat {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(x: &Mat) -> Mat {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

pub struct AttnCache {
    xq: Mat,
    xk: Mat,
    xv: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// Attention weights, indexed `[((b * heads + h) * nq + i) * nk + j]`.
    probs: Vec<f64>,
    concat: Mat,
    nq: usize,
    nk: usize,
    heads: usize,
}

impl AttnCache {
    /// Attention weights as one `nq x nk` matrix per (sample, head).
    pub fn probs(&self) -> Vec<Mat> {
        self.probs
            .chunks(self.nq * self.nk)
            .map(|c| Mat::from_shape_vec((self.nq, self.nk), c.to_vec()).expect("block shape"))
            .collect()
    }
}

fn std_slice(m: &Mat) -> &[f64] {
    m.as_slice().expect("standard layout")
}

impl Attention {
    pub fn new<R: Rng>(p: &mut ParamStore, rng: &mut R, name: &str, d: usize, heads: usize) -> Self {
        Self {
            q: Linear::new(p, rng, &format!("{name}.q"), d, d),
            k: Linear::new(p, rng, &format!("{name}.k"), d, d),
            v: Linear::new(p, rng, &format!("{name}.v"), d, d),
            o: Linear::new(p, rng, &format!("{name}.o"), d, d),
            heads,
        }
    }

    /// Scaled dot-product attention over a batch laid out as consecutive row
    /// blocks: `nq` query rows and `nk` key/value rows per sample.
    pub fn forward(&self, p: &ParamStore, xq: &Mat, xk: &Mat, xv: &Mat, nq: usize, nk: usize) -> (Mat, AttnCache) {
        let q = self.q.forward(p, xq);
        let k = self.k.forward(p, xk);
        let v = self.v.forward(p, xv);
        let d = q.ncols();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let batch = xq.nrows() / nq;
        let (qs, ks, vs) = (std_slice(&q), std_slice(&k), std_slice(&v));
        let mut concat = Mat::zeros((xq.nrows(), d));
        let out = concat.as_slice_mut().expect("standard layout");
        let mut probs = vec![0.0; batch * self.heads * nq * nk];
        for b in 0..batch {
            for h in 0..self.heads {
                let c0 = h * dh;
                for i in 0..nq {
                    let qi = (b * nq + i) * d + c0;
                    let pr = &mut probs[((b * self.heads + h) * nq + i) * nk..][..nk];
                    let mut m = f64::NEG_INFINITY;
                    for (j, pj) in pr.iter_mut().enumerate() {
                        let kj = (b * nk + j) * d + c0;
                        *pj = (0..dh).map(|c| qs[qi + c] * ks[kj + c]).sum::<f64>() * scale;
                        m = m.max(*pj);
                    }
                    let mut z = 0.0;
                    for pj in pr.iter_mut() {
                        *pj = (*pj - m).exp();
                        z += *pj;
                    }
                    for (j, pj) in pr.iter_mut().enumerate() {
                        *pj /= z;
                        let vj = (b * nk + j) * d + c0;
                        for c in 0..dh {
                            out[qi + c] += *pj * vs[vj + c];
                        }
                    }
                }
            }
        }
        let y = self.o.forward(p, &concat);
        (
            y,
            AttnCache {
                xq: xq.clone(),
                xk: xk.clone(),
                xv: xv.clone(),
                q,
                k,
                v,
                probs,
                concat,
                nq,
                nk,
                heads: self.heads,
            },
        )
    }

    /// Returns gradients with respect to the query, key and value inputs.
    pub fn backward(&self, p: &ParamStore, g: &mut [Mat], c: &AttnCache, dy: &Mat) -> (Mat, Mat, Mat) {
        let dconcat = self.o.backward(p, g, &c.concat, dy);
        let d = c.q.ncols();
        let dh = d / c.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (nq, nk) = (c.nq, c.nk);
        let mut dq = Mat::zeros(c.q.raw_dim());
        let mut dk = Mat::zeros(c.k.raw_dim());
        let mut dv = Mat::zeros(c.v.raw_dim());
        let (qs, ks, vs, dos) = (std_slice(&c.q), std_slice(&c.k), std_slice(&c.v), std_slice(&dconcat));
        let dqs = dq.as_slice_mut().expect("standard layout");
        let dks = dk.as_slice_mut().expect("standard layout");
        let dvs = dv.as_slice_mut().expect("standard layout");
        let batch = c.xq.nrows() / nq;
        let mut ds = vec![0.0; nk];
        for b in 0..batch {
            for h in 0..c.heads {
                let c0 = h * dh;
                for i in 0..nq {
                    let qi = (b * nq + i) * d + c0;
                    let pr = &c.probs[((b * c.heads + h) * nq + i) * nk..][..nk];
                    let mut row_dot = 0.0;
                    for (j, &pj) in pr.iter().enumerate() {
                        let vj = (b * nk + j) * d + c0;
                        let da: f64 = (0..dh).map(|t| dos[qi + t] * vs[vj + t]).sum();
                        for t in 0..dh {
                            dvs[vj + t] += pj * dos[qi + t];
                        }
                        ds[j] = da;
                        row_dot += pj * da;
                    }
                    for (j, &pj) in pr.iter().enumerate() {
                        let sj = pj * (ds[j] - row_dot) * scale;
                        let kj = (b * nk + j) * d + c0;
                        for t in 0..dh {
                            dqs[qi + t] += sj * ks[kj + t];
                            dks[kj + t] += sj * qs[qi + t];
                        }
                    }
                }
            }
        }
        let dxq = self.q.backward(p, g, &c.xq, &dq);
        let dxk = self.k.backward(p, g, &c.xk, &dk);
        let dxv = self.v.backward(p, g, &c.xv, &dv);
        (dxq, dxk, dxv)
    }
}

/// Adam state over a parameter store.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: i32,
}

impl Adam {
    pub fn new(p: &ParamStore, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: p.zeros_like(),
            v: p.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, p: &mut ParamStore, g: &[Mat]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..g.len() {
            self.m[i].zip_mut_with(&g[i], |m, &gi| *m = self.beta1 * *m + (1.0 - self.beta1) * gi);
            self.v[i].zip_mut_with(&g[i], |v, &gi| *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi);
            let (lr, eps) = (self.lr, self.eps);
            ndarray::Zip::from(&mut p.tensors[i])
                .and(&self.m[i])
                .and(&self.v[i])
                .for_each(|w, &m, &v| *w -= lr * (m / c1) / ((v / c2).sqrt() + eps));
        }
    }
}

pub fn sgd_step(p: &mut ParamStore, g: &[Mat], lr: f64) {
    for (t, gi) in p.tensors.iter_mut().zip(g) {
        t.scaled_add(-lr, gi);
    }
}
