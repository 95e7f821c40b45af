//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use ffmimo::alloc::AllocProblem;
use ffmimo::codebook::{build_codebook, Codebook, CodebookConfig};
use ffmimo::csi_map::LqtnModel;
use ffmimo::linalg::{CMatrix, C64};
use ffmimo::link::{CsiReport, TIE_TOL};
use ffmimo::scenario::ChannelMatrix;
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;

pub fn to_na(m: &CMatrix) -> DMatrix<C64> {
    DMatrix::from_fn(m.rows(), m.cols(), |r, c| m[(r, c)])
}

pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller keeps this module free of the crate's own samplers.
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn random_cmatrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| C64::new(gaussian(rng), gaussian(rng)))
}

pub fn channel(m: CMatrix) -> ChannelMatrix {
    ChannelMatrix {
        entries: m,
        subcarrier_index: 0,
        time_index: 0,
    }
}

/// Small codebooks (at most 64 precoders) covering ranks 1 to 4.
pub fn small_codebooks() -> Vec<Codebook> {
    let cfgs = [
        CodebookConfig { n1: 1, n2: 1, o1: 4, o2: 1, max_rank: 2, num_ports: 2 },
        CodebookConfig { n1: 2, n2: 1, o1: 2, o2: 1, max_rank: 2, num_ports: 4 },
        CodebookConfig { n1: 2, n2: 1, o1: 1, o2: 1, max_rank: 4, num_ports: 4 },
        CodebookConfig { n1: 3, n2: 1, o1: 1, o2: 1, max_rank: 2, num_ports: 6 },
    ];
    cfgs.iter().map(|c| build_codebook(c).unwrap()).collect()
}

/// Per-layer SINRs through an SVD pseudo-inverse; `None` when `HW` is rank deficient.
pub fn oracle_sinrs(h: &CMatrix, w: &CMatrix, sigma2: f64) -> Option<Vec<f64>> {
    let hw = to_na(h) * to_na(w);
    if hw.ncols() > hw.nrows() {
        return None;
    }
    let sv = hw.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if smin * smin <= 1e-12 * smax * smax {
        return None;
    }
    let f = hw.clone().pseudo_inverse(0.0).ok()?;
    let g = &f * &hw;
    let layers = w.cols();
    Some(
        (0..layers)
            .map(|l| {
                let sig = g[(l, l)].norm_sqr();
                let intf: f64 = (0..layers).filter(|&i| i != l).map(|i| g[(l, i)].norm_sqr()).sum();
                let enh: f64 = f.row(l).iter().map(|x| x.norm_sqr()).sum();
                sig / (intf + sigma2 * enh)
            })
            .collect(),
    )
}

/// Exhaustive (ri, pmi, total MI) search in codebook order with the same tie rule.
pub fn oracle_select(channels: &[ChannelMatrix], cb: &Codebook, sigma2: f64) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for p in cb.precoders() {
        let mut total = 0.0;
        let mut ok = true;
        for h in channels {
            match oracle_sinrs(&h.entries, &p.matrix, sigma2) {
                Some(s) => total += s.iter().map(|x| (1.0 + x).log2()).sum::<f64>(),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let take = match best {
            None => true,
            Some((_, _, b)) => total > b + TIE_TOL * b.abs(),
        };
        if take {
            best = Some((p.rank(), p.flat_index, total));
        }
    }
    best
}

pub fn random_problem<R: Rng>(rng: &mut R, w: usize, m: usize, q: usize) -> AllocProblem {
    let rates = Array2::from_shape_fn((w, m), |_| rng.random_range(0.0..10.0));
    AllocProblem::new(rates, q).unwrap()
}

/// Two-port codebook with 8 PMI classes, small enough for finite differences.
pub fn tiny_codebook() -> Codebook {
    build_codebook(&CodebookConfig { n1: 1, n2: 1, o1: 1, o2: 1, max_rank: 2, num_ports: 2 }).unwrap()
}

pub fn random_labels<R: Rng>(rng: &mut R, cb: &Codebook, rbs: usize) -> Vec<CsiReport> {
    (0..rbs)
        .map(|_| {
            let ri = rng.random_range(1..=cb.max_rank());
            let range = cb.rank_range(ri).unwrap();
            let cqi1 = rng.random_range(0..16);
            CsiReport {
                ri,
                pmi: rng.random_range(range),
                cqi1,
                cqi2: if ri == 1 { cqi1 } else { rng.random_range(0..16) },
            }
        })
        .collect()
}

pub fn random_features<R: Rng>(rng: &mut R) -> [f64; 6] {
    std::array::from_fn(|_| rng.random_range(-1.0..1.0))
}

pub struct GradError {
    pub name: String,
    pub abs_diff: f64,
    pub scale: f64,
}

impl GradError {
    pub fn relative(&self) -> f64 {
        self.abs_diff / self.scale
    }
}

/// Per-tensor Frobenius distance between analytic and central-difference gradients.
pub fn gradient_errors(model: &mut LqtnModel, feats: &[[f64; 6]], labels: &[&[CsiReport]]) -> Vec<GradError> {
    let (_, grads) = model.loss_and_grad(feats, labels).unwrap();
    let h = 1e-5;
    let mut out = Vec::new();
    for t in 0..grads.len() {
        let mut num = grads[t].clone();
        for i in 0..num.len() {
            let orig = model.params.tensors[t].as_slice().unwrap()[i];
            model.params.tensors[t].as_slice_mut().unwrap()[i] = orig + h;
            let up = model.loss_and_grad(feats, labels).unwrap().0;
            model.params.tensors[t].as_slice_mut().unwrap()[i] = orig - h;
            let down = model.loss_and_grad(feats, labels).unwrap().0;
            model.params.tensors[t].as_slice_mut().unwrap()[i] = orig;
            num.as_slice_mut().unwrap()[i] = (up - down) / (2.0 * h);
        }
        let norm = |m: &Array2<f64>| m.mapv(|v| v * v).sum().sqrt();
        out.push(GradError {
            name: model.params.names[t].clone(),
            abs_diff: norm(&(&num - &grads[t])),
            scale: norm(&num).max(norm(&grads[t])),
        });
    }
    out
}
