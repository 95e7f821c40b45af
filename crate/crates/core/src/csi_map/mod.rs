//! Geolocation -> CSI predictors and their evaluation.

use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::link::{compute_csi_reports, CsiReport, EsmConfig};
use crate::scenario::{Geolocation, Scenario};

pub mod dataset;
pub mod lqtn;
pub mod nn;

pub use dataset::{position_features, CsiDataset, CsiRecord, Split};
pub use lqtn::{lqtn_loss, lqtn_train, model_memory_mb, LqtnConfig, LqtnModel, Optimizer, Sample, TrainConfig, TrainReport};

pub trait CsiPredictor {
    fn name(&self) -> &str;
    /// One report per RB of `bs_id`.
    fn predict(&self, s: &Scenario, bs_id: usize, ue: &Geolocation) -> Result<Vec<CsiReport>>;
}

/// Scaled dot-product attention with separate query/key/value inputs;
/// returns the output and the per-head attention weights.
pub fn multi_head_attention(
    p: &nn::ParamStore,
    attn: &nn::Attention,
    queries: &nn::Mat,
    keys: &nn::Mat,
    values: &nn::Mat,
) -> Result<(nn::Mat, Vec<nn::Mat>)> {
    if keys.nrows() != values.nrows() || keys.nrows() == 0 || queries.nrows() == 0 {
        return Err(Error::Data("attention needs matching, nonempty key and value rows".into()));
    }
    let (out, cache) = attn.forward(p, queries, keys, values, queries.nrows(), keys.nrows());
    Ok((out, cache.probs()))
}

/// Labels computed on the fly by the link-level search.
pub struct GroundTruthPredictor {
    pub codebook: Codebook,
    pub esm: EsmConfig,
}

impl CsiPredictor for GroundTruthPredictor {
    fn name(&self) -> &str {
        "ground_truth"
    }

    fn predict(&self, s: &Scenario, bs_id: usize, ue: &Geolocation) -> Result<Vec<CsiReport>> {
        compute_csi_reports(s, bs_id, ue, &self.codebook, &self.esm)
    }
}

/// Most frequent value; among equally frequent values the earliest (nearest) wins.
fn vote(values: impl Iterator<Item = usize>) -> usize {
    let values: Vec<usize> = values.collect();
    let count = |v: usize| values.iter().filter(|&&x| x == v).count();
    let best = values.iter().map(|&v| count(v)).max().unwrap_or(0);
    values.iter().copied().find(|&v| count(v) == best).unwrap_or(0)
}

/// Per-RB majority vote over the `k` nearest training records of `bs_id`.
pub fn knn_predict(ds: &CsiDataset, bs_id: usize, ue: &Geolocation, k: usize) -> Result<Vec<CsiReport>> {
    let pool: Vec<&CsiRecord> = ds.split(Split::Train).filter(|r| r.bs_id == bs_id).collect();
    if k == 0 || k > pool.len() {
        return Err(Error::OutOfRange {
            what: "neighbour count",
            index: k,
            limit: pool.len() + 1,
        });
    }
    let d2 = |g: &Geolocation| (g.x - ue.x).powi(2) + (g.y - ue.y).powi(2) + (g.z - ue.z).powi(2);
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.sort_by(|&a, &b| d2(&pool[a].ue_loc).total_cmp(&d2(&pool[b].ue_loc)).then(a.cmp(&b)));
    let near: Vec<&CsiRecord> = idx[..k].iter().map(|&i| pool[i]).collect();
    let rbs = near[0].labels.len();
    if near.iter().any(|r| r.labels.len() != rbs) {
        return Err(Error::Data("neighbours disagree on RB count".into()));
    }
    Ok((0..rbs)
        .map(|rb| {
            let labels = near.iter().map(|r| r.labels[rb]);
            let ri = vote(labels.clone().map(|l| l.ri));
            // PMI and second CQI are voted among neighbours sharing the rank.
            let same_rank = labels.clone().filter(|l| l.ri == ri);
            let pmi = vote(same_rank.clone().map(|l| l.pmi));
            let cqi1 = vote(labels.map(|l| l.cqi1));
            let cqi2 = if ri == 1 { cqi1 } else { vote(same_rank.map(|l| l.cqi2)) };
            CsiReport { ri, pmi, cqi1, cqi2 }
        })
        .collect())
}

pub struct KnnPredictor {
    pub dataset: CsiDataset,
    pub k: usize,
}

impl CsiPredictor for KnnPredictor {
    fn name(&self) -> &str {
        "knn"
    }

    fn predict(&self, _s: &Scenario, bs_id: usize, ue: &Geolocation) -> Result<Vec<CsiReport>> {
        knn_predict(&self.dataset, bs_id, ue, self.k)
    }
}

pub struct LqtnPredictor {
    pub model: LqtnModel,
}

impl CsiPredictor for LqtnPredictor {
    fn name(&self) -> &str {
        "lqtn"
    }

    fn predict(&self, s: &Scenario, bs_id: usize, ue: &Geolocation) -> Result<Vec<CsiReport>> {
        let rbs = s.bs(bs_id)?.rb_count;
        if rbs != self.model.config.rb_count {
            return Err(Error::Config(format!(
                "model has {} RB queries, BS {bs_id} has {rbs} RBs",
                self.model.config.rb_count
            )));
        }
        self.model.predict(&position_features(s, bs_id, ue)?)
    }
}

/// One single-query model per RB, trained separately.
pub struct IndependentPredictor {
    pub models: Vec<LqtnModel>,
}

impl CsiPredictor for IndependentPredictor {
    fn name(&self) -> &str {
        "independent"
    }

    fn predict(&self, s: &Scenario, bs_id: usize, ue: &Geolocation) -> Result<Vec<CsiReport>> {
        let rbs = s.bs(bs_id)?.rb_count;
        if rbs != self.models.len() {
            return Err(Error::Config(format!("{} per-RB models for {rbs} RBs", self.models.len())));
        }
        let f = position_features(s, bs_id, ue)?;
        let mut out = Vec::with_capacity(rbs);
        for m in &self.models {
            out.extend(m.predict(&f)?);
        }
        Ok(out)
    }
}

pub fn samples_from(ds: &CsiDataset, s: &Scenario, split: Split) -> Result<Vec<Sample>> {
    ds.split(split)
        .map(|r| {
            Ok(Sample {
                features: position_features(s, r.bs_id, &r.ue_loc)?,
                labels: r.labels.clone(),
            })
        })
        .collect()
}

/// Trains one single-RB model per RB with the shared model's dimensions.
pub fn train_independent(
    samples: &[Sample],
    base: &LqtnConfig,
    hp: &TrainConfig,
) -> Result<(IndependentPredictor, Vec<TrainReport>)> {
    let mut models = Vec::with_capacity(base.rb_count);
    let mut reports = Vec::with_capacity(base.rb_count);
    for rb in 0..base.rb_count {
        let cfg = LqtnConfig {
            rb_count: 1,
            seed: base.seed.wrapping_add(rb as u64),
            ..base.clone()
        };
        let sliced: Vec<Sample> = samples
            .iter()
            .map(|s| Sample {
                features: s.features,
                labels: s.labels.get(rb..rb + 1).map(<[CsiReport]>::to_vec).unwrap_or_default(),
            })
            .collect();
        let mut m = LqtnModel::new(cfg)?;
        reports.push(lqtn_train(&mut m, &sliced, hp)?);
        models.push(m);
    }
    Ok((IndependentPredictor { models }, reports))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldScore {
    /// Mean absolute error divided by the field's label range.
    pub nmae: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaeReport {
    pub ri: FieldScore,
    pub cqi1: FieldScore,
    pub cqi2: FieldScore,
    pub pmi: FieldScore,
    pub count: usize,
}

impl MaeReport {
    pub fn mean_nmae(&self) -> f64 {
        (self.ri.nmae + self.cqi1.nmae + self.cqi2.nmae + self.pmi.nmae) / 4.0
    }
}

/// Normalized MAE and exact-match accuracy of each field over the test split.
pub fn evaluate_mae(p: &dyn CsiPredictor, s: &Scenario, ds: &CsiDataset) -> Result<MaeReport> {
    let mut pairs: Vec<(CsiReport, CsiReport)> = Vec::new();
    for r in ds.split(Split::Test) {
        let pred = p.predict(s, r.bs_id, &r.ue_loc)?;
        if pred.len() != r.labels.len() {
            return Err(Error::Data(format!("{} predictions for {} labels", pred.len(), r.labels.len())));
        }
        pairs.extend(r.labels.iter().copied().zip(pred));
    }
    score_pairs(&pairs)
}

/// Scores `(label, prediction)` pairs.
pub fn score_pairs(pairs: &[(CsiReport, CsiReport)]) -> Result<MaeReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("test split"));
    }
    let field = |f: fn(&CsiReport) -> usize| {
        let labels = pairs.iter().map(|(l, _)| f(l));
        let (lo, hi) = (labels.clone().min().unwrap_or(0), labels.max().unwrap_or(0));
        let range = (hi - lo).max(1) as f64;
        let n = pairs.len() as f64;
        let mae = pairs.iter().map(|(l, p)| f(l).abs_diff(f(p)) as f64).sum::<f64>() / n;
        let acc = pairs.iter().filter(|(l, p)| f(l) == f(p)).count() as f64 / n;
        FieldScore {
            nmae: mae / range,
            accuracy: acc,
        }
    };
    Ok(MaeReport {
        ri: field(|r| r.ri),
        cqi1: field(|r| r.cqi1),
        cqi2: field(|r| r.cqi2),
        pmi: field(|r| r.pmi),
        count: pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(ri: usize, pmi: usize, cqi1: usize) -> CsiReport {
        CsiReport { ri, pmi, cqi1, cqi2: cqi1 }
    }

    #[test]
    fn vote_prefers_nearest_on_ties() {
        assert_eq!(vote([3, 5, 5].into_iter()), 5);
        assert_eq!(vote([3, 5].into_iter()), 3);
        assert_eq!(vote([7, 5, 3, 5, 3].into_iter()), 5);
    }

    #[test]
    fn constant_prediction_scores() {
        let pairs = vec![(rep(1, 0, 0), rep(1, 0, 5)), (rep(1, 2, 10), rep(1, 0, 5))];
        let m = score_pairs(&pairs).unwrap();
        assert_eq!(m.cqi1.nmae, 0.5);
        assert_eq!(m.cqi1.accuracy, 0.0);
        assert_eq!(m.pmi.nmae, 0.5);
        assert_eq!(m.ri.nmae, 0.0);
        assert_eq!(m.ri.accuracy, 1.0);
    }

    #[test]
    fn memory_estimate() {
        assert_eq!(model_memory_mb(1_048_576), 4.0);
        assert_eq!(model_memory_mb(0), 0.0);
    }
}
