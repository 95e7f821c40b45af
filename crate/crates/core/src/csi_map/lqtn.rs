//! Learnable-query transformer mapping (BS, UE) positions to per-RB CSI.
//!
//! Two input tokens (BS and UE position) pass through a shared feed-forward
//! projection and a pre-LN encoder. One learnable query per RB then runs
//! through pre-LN decoder layers (query self-attention, cross-attention to the
//! encoder output, feed-forward) and four classification heads.

use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{log_softmax_rows, normal, softmax_rows, Adam, AttnCache, Attention, LayerNorm, LnCache, Mat, Mlp, MlpCache, ParamStore, sgd_step};
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::link::CsiReport;

pub const NUM_CQI_CLASSES: usize = 16;
const INPUT_FEATURES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqtnConfig {
    pub embed_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub rb_count: usize,
    pub max_rank: usize,
    /// Flat PMI range of each rank (index 0 = rank 1).
    pub pmi_ranges: Vec<Range<usize>>,
    pub seed: u64,
}

impl LqtnConfig {
    pub fn for_codebook(cb: &Codebook, rb_count: usize, embed_dim: usize, num_heads: usize, seed: u64) -> Self {
        Self {
            embed_dim,
            num_heads,
            ffn_dim: 2 * embed_dim,
            encoder_layers: 1,
            decoder_layers: 2,
            rb_count,
            max_rank: cb.max_rank(),
            pmi_ranges: (1..=cb.max_rank()).map(|r| cb.rank_range(r).expect("rank in codebook")).collect(),
            seed,
        }
    }

    pub fn num_pmi(&self) -> usize {
        self.pmi_ranges.last().map_or(0, |r| r.end)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.num_heads == 0 || self.embed_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} must be a positive multiple of num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if self.rb_count == 0 || self.ffn_dim == 0 || self.max_rank == 0 || self.pmi_ranges.len() != self.max_rank {
            return Err(Error::Config("LQTN dimensions must be positive and match the codebook".into()));
        }
        Ok(())
    }

    /// Class counts of the ri, cqi1, cqi2 and pmi heads.
    pub fn head_classes(&self) -> [usize; 4] {
        [self.max_rank, NUM_CQI_CLASSES, NUM_CQI_CLASSES, self.num_pmi()]
    }
}

#[derive(Debug, Clone, PartialEq)]
struct EncoderLayer {
    ln1: LayerNorm,
    attn: Attention,
    ln2: LayerNorm,
    ffn: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
struct DecoderLayer {
    ln1: LayerNorm,
    self_attn: Attention,
    ln2: LayerNorm,
    cross_attn: Attention,
    ln3: LayerNorm,
    ffn: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    input: Mlp,
    token_type: usize,
    queries: usize,
    encoder: Vec<EncoderLayer>,
    enc_norm: LayerNorm,
    decoder: Vec<DecoderLayer>,
    dec_norm: LayerNorm,
    heads: Vec<Mlp>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqtnModel {
    pub config: LqtnConfig,
    pub params: ParamStore,
    layout: Layout,
}

/// Per-RB logits of the four heads, rows = `batch * rb_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqtnLogits {
    pub ri: Mat,
    pub cqi1: Mat,
    pub cqi2: Mat,
    pub pmi: Mat,
}

impl LqtnLogits {
    fn heads(&self) -> [&Mat; 4] {
        [&self.ri, &self.cqi1, &self.cqi2, &self.pmi]
    }
}

struct EncCache {
    ln1: LnCache,
    attn: AttnCache,
    ln2: LnCache,
    ffn: MlpCache,
}

struct DecCache {
    ln1: LnCache,
    self_attn: AttnCache,
    ln2: LnCache,
    cross_attn: AttnCache,
    ln3: LnCache,
    ffn: MlpCache,
}

struct Trace {
    batch: usize,
    input: MlpCache,
    encoder: Vec<EncCache>,
    enc_norm: LnCache,
    decoder: Vec<DecCache>,
    dec_norm: LnCache,
    heads: Vec<MlpCache>,
}

impl LqtnModel {
    pub fn new(config: LqtnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut p = ParamStore::new();
        let (d, f, h) = (config.embed_dim, config.ffn_dim, config.num_heads);
        let input = Mlp::new(&mut p, &mut rng, "input", INPUT_FEATURES, d, d);
        let token_type = p.add("token_type", normal(&mut rng, 2, d, 0.1));
        let queries = p.add("rb_queries", normal(&mut rng, config.rb_count, d, 1.0));
        let encoder = (0..config.encoder_layers)
            .map(|i| {
                let n = format!("encoder.{i}");
                EncoderLayer {
                    ln1: LayerNorm::new(&mut p, &format!("{n}.ln1"), d),
                    attn: Attention::new(&mut p, &mut rng, &format!("{n}.attn"), d, h),
                    ln2: LayerNorm::new(&mut p, &format!("{n}.ln2"), d),
                    ffn: Mlp::new(&mut p, &mut rng, &format!("{n}.ffn"), d, f, d),
                }
            })
            .collect();
        let enc_norm = LayerNorm::new(&mut p, "encoder.norm", d);
        let decoder = (0..config.decoder_layers)
            .map(|i| {
                let n = format!("decoder.{i}");
                DecoderLayer {
                    ln1: LayerNorm::new(&mut p, &format!("{n}.ln1"), d),
                    self_attn: Attention::new(&mut p, &mut rng, &format!("{n}.self_attn"), d, h),
                    ln2: LayerNorm::new(&mut p, &format!("{n}.ln2"), d),
                    cross_attn: Attention::new(&mut p, &mut rng, &format!("{n}.cross_attn"), d, h),
                    ln3: LayerNorm::new(&mut p, &format!("{n}.ln3"), d),
                    ffn: Mlp::new(&mut p, &mut rng, &format!("{n}.ffn"), d, f, d),
                }
            })
            .collect();
        let dec_norm = LayerNorm::new(&mut p, "decoder.norm", d);
        let heads = ["ri", "cqi1", "cqi2", "pmi"]
            .iter()
            .zip(config.head_classes())
            .map(|(name, c)| Mlp::new(&mut p, &mut rng, &format!("head.{name}"), d, d, c))
            .collect();
        Ok(Self {
            config,
            params: p,
            layout: Layout {
                input,
                token_type,
                queries,
                encoder,
                enc_norm,
                decoder,
                dec_norm,
                heads,
            },
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Layer-by-layer parameter count from the dimensions alone.
    pub fn analytic_param_count(c: &LqtnConfig) -> usize {
        let (d, f, rb) = (c.embed_dim, c.ffn_dim, c.rb_count);
        let lin = |i: usize, o: usize| i * o + o;
        let ln = 2 * d;
        let attn = 4 * lin(d, d);
        let ffn = lin(d, f) + lin(f, d);
        let input = lin(INPUT_FEATURES, d) + lin(d, d);
        let enc = c.encoder_layers * (2 * ln + attn + ffn);
        let dec = c.decoder_layers * (3 * ln + 2 * attn + ffn);
        let heads: usize = c.head_classes().iter().map(|&k| lin(d, d) + lin(d, k)).sum();
        input + 2 * d + rb * d + enc + ln + dec + ln + heads
    }

    fn forward_trace(&self, features: &[[f64; 6]]) -> Result<(LqtnLogits, Trace)> {
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model input"));
        }
        let p = &self.params;
        let l = &self.layout;
        let b = features.len();
        let rb = self.config.rb_count;
        let tokens = Mat::from_shape_fn((2 * b, INPUT_FEATURES), |(r, c)| features[r / 2][(r % 2) * 3 + c]);
        let (mut x, input) = l.input.forward(p, &tokens);
        let tt = &p.tensors[l.token_type];
        for (r, mut row) in x.rows_mut().into_iter().enumerate() {
            row += &tt.row(r % 2);
        }
        let mut encoder = Vec::with_capacity(l.encoder.len());
        for layer in &l.encoder {
            let (n1, ln1) = layer.ln1.forward(p, &x);
            let (a, attn) = layer.attn.forward(p, &n1, &n1, &n1, 2, 2);
            x += &a;
            let (n2, ln2) = layer.ln2.forward(p, &x);
            let (ff, ffn) = layer.ffn.forward(p, &n2);
            x += &ff;
            encoder.push(EncCache { ln1, attn, ln2, ffn });
        }
        let (mem, enc_norm) = l.enc_norm.forward(p, &x);

        let qp = &p.tensors[l.queries];
        let mut q = Mat::zeros((b * rb, self.config.embed_dim));
        for i in 0..b {
            q.slice_mut(s![i * rb..(i + 1) * rb, ..]).assign(qp);
        }
        let mut decoder = Vec::with_capacity(l.decoder.len());
        for layer in &l.decoder {
            let (n1, ln1) = layer.ln1.forward(p, &q);
            let (a, self_attn) = layer.self_attn.forward(p, &n1, &n1, &n1, rb, rb);
            q += &a;
            let (n2, ln2) = layer.ln2.forward(p, &q);
            let (c, cross_attn) = layer.cross_attn.forward(p, &n2, &mem, &mem, rb, 2);
            q += &c;
            let (n3, ln3) = layer.ln3.forward(p, &q);
            let (ff, ffn) = layer.ffn.forward(p, &n3);
            q += &ff;
            decoder.push(DecCache {
                ln1,
                self_attn,
                ln2,
                cross_attn,
                ln3,
                ffn,
            });
        }
        let (z, dec_norm) = l.dec_norm.forward(p, &q);
        let mut outs = Vec::with_capacity(4);
        let mut heads = Vec::with_capacity(4);
        for head in &l.heads {
            let (o, c) = head.forward(p, &z);
            outs.push(o);
            heads.push(c);
        }
        let pmi = outs.pop().expect("four heads");
        let cqi2 = outs.pop().expect("four heads");
        let cqi1 = outs.pop().expect("four heads");
        let ri = outs.pop().expect("four heads");
        Ok((
            LqtnLogits { ri, cqi1, cqi2, pmi },
            Trace {
                batch: b,
                input,
                encoder,
                enc_norm,
                decoder,
                dec_norm,
                heads,
            },
        ))
    }

    pub fn forward(&self, features: &[[f64; 6]]) -> Result<LqtnLogits> {
        Ok(self.forward_trace(features)?.0)
    }

    fn backward(&self, t: &Trace, dlogits: [Mat; 4]) -> Vec<Mat> {
        let p = &self.params;
        let l = &self.layout;
        let rb = self.config.rb_count;
        let mut g = p.zeros_like();
        let mut dz: Option<Mat> = None;
        for ((head, cache), dy) in l.heads.iter().zip(&t.heads).zip(&dlogits) {
            let d = head.backward(p, &mut g, cache, dy);
            dz = Some(match dz {
                Some(acc) => acc + d,
                None => d,
            });
        }
        let mut dq = l.dec_norm.backward(p, &mut g, &t.dec_norm, &dz.expect("four heads"));
        let mut dmem = Mat::zeros((2 * t.batch, self.config.embed_dim));
        for (layer, c) in l.decoder.iter().zip(&t.decoder).rev() {
            let dn3 = layer.ffn.backward(p, &mut g, &c.ffn, &dq);
            dq += &layer.ln3.backward(p, &mut g, &c.ln3, &dn3);
            let (dn2, dk, dv) = layer.cross_attn.backward(p, &mut g, &c.cross_attn, &dq);
            dmem += &dk;
            dmem += &dv;
            dq += &layer.ln2.backward(p, &mut g, &c.ln2, &dn2);
            let (a, b, v) = layer.self_attn.backward(p, &mut g, &c.self_attn, &dq);
            dq += &layer.ln1.backward(p, &mut g, &c.ln1, &(a + b + v));
        }
        for i in 0..t.batch {
            g[l.queries] += &dq.slice(s![i * rb..(i + 1) * rb, ..]);
        }
        let mut dx = l.enc_norm.backward(p, &mut g, &t.enc_norm, &dmem);
        for (layer, c) in l.encoder.iter().zip(&t.encoder).rev() {
            let dn2 = layer.ffn.backward(p, &mut g, &c.ffn, &dx);
            dx += &layer.ln2.backward(p, &mut g, &c.ln2, &dn2);
            let (a, b, v) = layer.attn.backward(p, &mut g, &c.attn, &dx);
            dx += &layer.ln1.backward(p, &mut g, &c.ln1, &(a + b + v));
        }
        for (r, row) in dx.rows().into_iter().enumerate() {
            let mut tt = g[l.token_type].row_mut(r % 2);
            tt += &row;
        }
        l.input.backward(p, &mut g, &t.input, &dx);
        g
    }

    /// Mean per-sample loss and its gradient for one batch.
    pub fn loss_and_grad(&self, features: &[[f64; 6]], labels: &[&[CsiReport]]) -> Result<(f64, Vec<Mat>)> {
        let (logits, trace) = self.forward_trace(features)?;
        let targets = self.targets(labels)?;
        let b = features.len() as f64;
        let mut loss = 0.0;
        let mut grads: Vec<Mat> = Vec::with_capacity(4);
        for (lg, tg) in logits.heads().iter().zip(&targets) {
            let logp = log_softmax_rows(lg);
            let mut d = softmax_rows(lg);
            for (r, &c) in tg.iter().enumerate() {
                loss -= logp[[r, c]];
                d[[r, c]] -= 1.0;
            }
            grads.push(d / b);
        }
        let dlogits: [Mat; 4] = grads.try_into().expect("four heads");
        Ok((loss / b, self.backward(&trace, dlogits)))
    }

    fn targets(&self, labels: &[&[CsiReport]]) -> Result<[Vec<usize>; 4]> {
        let mut t: [Vec<usize>; 4] = Default::default();
        let classes = self.config.head_classes();
        for l in labels {
            if l.len() != self.config.rb_count {
                return Err(Error::Data(format!("{} labels for {} RBs", l.len(), self.config.rb_count)));
            }
            for r in l.iter() {
                let vals = [r.ri.wrapping_sub(1), r.cqi1, r.cqi2, r.pmi];
                for (h, v) in vals.into_iter().enumerate() {
                    if v >= classes[h] {
                        return Err(Error::OutOfRange {
                            what: "label class",
                            index: v,
                            limit: classes[h],
                        });
                    }
                    t[h].push(v);
                }
            }
        }
        Ok(t)
    }

    /// Per-RB reports: argmax rank, argmax CQIs, argmax PMI within that rank.
    pub fn decode(&self, logits: &LqtnLogits) -> Vec<CsiReport> {
        let argmax = |row: ndarray::ArrayView1<f64>| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        };
        (0..logits.ri.nrows())
            .map(|r| {
                let ri = argmax(logits.ri.row(r)) + 1;
                let range = self.config.pmi_ranges[ri - 1].clone();
                let pmi = range.start + argmax(logits.pmi.slice(s![r, range]));
                let cqi1 = argmax(logits.cqi1.row(r));
                let cqi2 = if ri == 1 { cqi1 } else { argmax(logits.cqi2.row(r)) };
                CsiReport { ri, pmi, cqi1, cqi2 }
            })
            .collect()
    }

    pub fn predict(&self, features: &[f64; 6]) -> Result<Vec<CsiReport>> {
        Ok(self.decode(&self.forward(std::slice::from_ref(features))?))
    }

    /// Mean per-sample loss without gradients.
    pub fn mean_loss(&self, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let mut total = 0.0;
        for chunk in samples.chunks(64) {
            let f: Vec<[f64; 6]> = chunk.iter().map(|s| s.features).collect();
            let logits = self.forward(&f)?;
            let labels: Vec<&[CsiReport]> = chunk.iter().map(|s| s.labels.as_slice()).collect();
            total += cross_entropy_sum(&logits, &self.targets(&labels)?);
        }
        Ok(total / samples.len() as f64)
    }

    /// Zeros the cross-attention value projections (ablation probe).
    pub fn zero_cross_attention_values(&mut self) {
        for layer in &self.layout.decoder {
            self.params.tensors[layer.cross_attn.v.w].fill(0.0);
        }
    }

    /// Writes `<stem>.bin` (little-endian f64 tensors in order) and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut bin = fs::File::create(dir.join(format!("{stem}.bin")))?;
        let mut tensors = Vec::new();
        let mut offset = 0;
        for (name, t) in self.params.names.iter().zip(&self.params.tensors) {
            for v in t.iter() {
                bin.write_all(&v.to_le_bytes())?;
            }
            tensors.push(serde_json::json!({ "name": name, "shape": t.shape(), "offset": offset }));
            offset += t.len();
        }
        let manifest = serde_json::json!({
            "config": self.config,
            "param_count": self.param_count(),
            "seed": self.config.seed,
            "tensors": tensors,
        });
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        let config: LqtnConfig = serde_json::from_value(manifest["config"].clone())?;
        let mut model = Self::new(config)?;
        let bytes = fs::read(dir.join(format!("{stem}.bin")))?;
        if bytes.len() != 8 * model.param_count() {
            return Err(Error::Data(format!(
                "checkpoint holds {} values, model needs {}",
                bytes.len() / 8,
                model.param_count()
            )));
        }
        let mut vals = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        for t in &mut model.params.tensors {
            for v in t.iter_mut() {
                *v = vals.next().expect("length checked");
            }
        }
        if !model.params.is_finite() {
            return Err(Error::NonFinite("checkpoint weights"));
        }
        Ok(model)
    }
}

fn cross_entropy_sum(logits: &LqtnLogits, targets: &[Vec<usize>; 4]) -> f64 {
    let mut loss = 0.0;
    for (lg, tg) in logits.heads().iter().zip(targets) {
        let logp = log_softmax_rows(lg);
        loss -= tg.iter().enumerate().map(|(r, &c)| logp[[r, c]]).sum::<f64>();
    }
    loss
}

/// Sum over RBs and heads of cross-entropy for logits whose rows follow `labels`.
pub fn lqtn_loss(logits: &LqtnLogits, labels: &[CsiReport]) -> Result<f64> {
    if labels.len() != logits.ri.nrows() {
        return Err(Error::Data(format!("{} labels for {} logit rows", labels.len(), logits.ri.nrows())));
    }
    let mut t: [Vec<usize>; 4] = Default::default();
    let lg = logits.heads();
    for r in labels {
        for (h, v) in [r.ri.wrapping_sub(1), r.cqi1, r.cqi2, r.pmi].into_iter().enumerate() {
            if v >= lg[h].ncols() {
                return Err(Error::OutOfRange {
                    what: "label class",
                    index: v,
                    limit: lg[h].ncols(),
                });
            }
            t[h].push(v);
        }
    }
    Ok(cross_entropy_sum(logits, &t))
}

/// One training example: normalized positions and per-RB labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: [f64; 6],
    pub labels: Vec<CsiReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Stop once an epoch's mean loss falls below this.
    pub target_loss: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-3,
            batch: 32,
            epochs: 40,
            seed: 0,
            optimizer: Optimizer::Adam,
            target_loss: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn lqtn_train(model: &mut LqtnModel, samples: &[Sample], hp: &TrainConfig) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if hp.batch == 0 || !(hp.lr > 0.0) {
        return Err(Error::Config("batch size and learning rate must be positive".into()));
    }
    let initial_loss = model.mean_loss(samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut adam = Adam::new(&model.params, hp.lr);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(hp.epochs);
    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(hp.batch) {
            let f: Vec<[f64; 6]> = idx.iter().map(|&i| samples[i].features).collect();
            let l: Vec<&[CsiReport]> = idx.iter().map(|&i| samples[i].labels.as_slice()).collect();
            let (loss, g) = model.loss_and_grad(&f, &l)?;
            match hp.optimizer {
                Optimizer::Adam => adam.step(&mut model.params, &g),
                Optimizer::Sgd => sgd_step(&mut model.params, &g, hp.lr),
            }
            total += loss * idx.len() as f64;
        }
        let mean = total / samples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        epoch_losses.push(mean);
        if hp.target_loss.is_some_and(|t| mean < t) {
            break;
        }
    }
    Ok(TrainReport {
        initial_loss,
        epoch_losses,
    })
}

/// `4 * N / 1024^2` megabytes for `N` single-precision parameters.
pub fn model_memory_mb(param_count: usize) -> f64 {
    4.0 * param_count as f64 / (1024.0 * 1024.0)
}

/// Attention weights of the first decoder cross-attention for one input
/// (rows = RBs, columns = BS/UE tokens), averaged over heads.
pub fn cross_attention_map(model: &LqtnModel, features: &[f64; 6]) -> Result<Array2<f64>> {
    let (_, trace) = model.forward_trace(std::slice::from_ref(features))?;
    let probs = trace.decoder[0].cross_attn.probs();
    let mut acc = Array2::<f64>::zeros(probs[0].raw_dim());
    for p in &probs {
        acc += p;
    }
    Ok(acc / probs.len() as f64)
}
