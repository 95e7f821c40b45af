use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, LinkSetup, PredictorKind};
use crate::alloc::{best_cqi, jain_index, m3_mama, round_robin, spectral_efficiency, AllocProblem, Matching};
use crate::codebook::Codebook;
use crate::csi_map::{
    evaluate_mae, lqtn_train, samples_from, train_independent, CsiDataset, CsiPredictor, CsiRecord, GroundTruthPredictor,
    KnnPredictor, LqtnConfig, LqtnModel, LqtnPredictor, MaeReport, Split, TrainReport,
};
use crate::error::{Error, Result};
use crate::link::{codeword_layers, compute_csi_reports, effective_snr, post_eq_sinr, CsiReport, EsmConfig};
use crate::rate::{codeword_rate, max_phy_rate, rate_matrix, FrameConfig, McsTable};
use crate::scenario::{advance, generate_scenario, lin_to_db, sample_geolocations, ChannelMatrix, Geolocation, RayBundle, Scenario};

/// Labels `n_train + n_test` sampled geolocations against every BS.
pub fn generate_dataset(
    s: &Scenario,
    cb: &Codebook,
    esm: &EsmConfig,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<CsiDataset> {
    let locs = sample_geolocations(s, n_train + n_test, seed);
    let key = |g: &Geolocation| (g.x.to_bits(), g.y.to_bits(), g.z.to_bits());
    let train: HashSet<_> = locs[..n_train].iter().map(key).collect();
    if locs[n_train..].iter().any(|g| train.contains(&key(g))) {
        return Err(Error::Data("test geolocation repeats a training one".into()));
    }
    let mut records = Vec::with_capacity(locs.len() * s.bs_list.len());
    for (i, ue) in locs.iter().enumerate() {
        let split = if i < n_train { Split::Train } else { Split::Test };
        for bs in &s.bs_list {
            records.push(CsiRecord {
                bs_id: bs.id,
                ue_loc: *ue,
                labels: compute_csi_reports(s, bs.id, ue, cb, esm)?,
                split,
            });
        }
    }
    Ok(CsiDataset::new(records))
}

/// Rate credited for transmitting `report` over the actual RB channels: each
/// codeword earns its peak rate only if its effective SNR under the chosen
/// precoder still reaches the threshold of the reported CQI.
pub fn realized_throughput(
    actual: &[ChannelMatrix],
    report: &CsiReport,
    cb: &Codebook,
    esm: &EsmConfig,
    tbl: &McsTable,
    fc: &FrameConfig,
    sigma2: f64,
) -> Result<f64> {
    if actual.is_empty() {
        return Err(Error::Empty("channel grid"));
    }
    let w = cb.get(report.pmi).ok_or(Error::OutOfRange {
        what: "PMI",
        index: report.pmi,
        limit: cb.len(),
    })?;
    let mut grid = Vec::with_capacity(actual.len());
    for h in actual {
        match post_eq_sinr(h, w, sigma2) {
            Ok(s) => grid.push(s),
            Err(Error::SingularChannel) => return Ok(0.0),
            Err(e) => return Err(e),
        }
    }
    let (cw0, cw1) = codeword_layers(w.rank())?;
    let mut total = 0.0;
    for (layers, cqi) in [(Some(cw0), report.cqi1), (cw1, report.cqi2)] {
        let Some(layers) = layers else { continue };
        if cqi == 0 {
            continue;
        }
        let sinrs: Vec<f64> = grid.iter().flat_map(|re| re[layers.clone()].iter().copied()).collect();
        if lin_to_db(effective_snr(&sinrs, cqi, esm)?) >= esm.cqi_snr_thresholds[cqi] {
            total += codeword_rate(tbl, fc, cqi, layers.len())?;
        }
    }
    Ok(total)
}

/// A trained (or oracle) predictor plus how it scored on held-out data.
pub struct BuiltPredictor {
    pub predictor: Box<dyn CsiPredictor>,
    pub dataset: Option<CsiDataset>,
    pub training: Vec<TrainReport>,
    pub evaluation: Option<MaeReport>,
}

pub fn build_predictor(cfg: &ExperimentConfig, s: &Scenario, setup: &LinkSetup, seed: u64) -> Result<BuiltPredictor> {
    let p = &cfg.predictor;
    let oracle = || GroundTruthPredictor {
        codebook: setup.codebook.clone(),
        esm: setup.esm.clone(),
    };
    if p.kind == PredictorKind::GroundTruth {
        return Ok(BuiltPredictor {
            predictor: Box::new(oracle()),
            dataset: None,
            training: Vec::new(),
            evaluation: None,
        });
    }
    let ds = generate_dataset(s, &setup.codebook, &setup.esm, p.n_train, p.n_test, seed)?;
    train_on(cfg, s, setup, ds, seed)
}

/// Trains the configured learned predictor on an existing dataset.
pub fn train_on(cfg: &ExperimentConfig, s: &Scenario, setup: &LinkSetup, ds: CsiDataset, seed: u64) -> Result<BuiltPredictor> {
    ds.validate(s)?;
    let p = &cfg.predictor;
    let rb_count = s.bs_list[0].rb_count;
    let model_cfg = LqtnConfig::for_codebook(&setup.codebook, rb_count, p.embed_dim, p.num_heads, seed);
    let hp = crate::csi_map::TrainConfig {
        seed,
        ..p.train.clone()
    };
    let (predictor, training): (Box<dyn CsiPredictor>, Vec<TrainReport>) = match p.kind {
        PredictorKind::GroundTruth => {
            return Ok(BuiltPredictor {
                predictor: Box::new(GroundTruthPredictor {
                    codebook: setup.codebook.clone(),
                    esm: setup.esm.clone(),
                }),
                dataset: Some(ds),
                training: Vec::new(),
                evaluation: None,
            })
        }
        PredictorKind::Knn => (
            Box::new(KnnPredictor {
                dataset: ds.subset(Split::Train),
                k: p.knn_k,
            }),
            Vec::new(),
        ),
        PredictorKind::Lqtn => {
            let samples = samples_from(&ds, s, Split::Train)?;
            let mut model = LqtnModel::new(model_cfg)?;
            let rep = lqtn_train(&mut model, &samples, &hp)?;
            (Box::new(LqtnPredictor { model }), vec![rep])
        }
        PredictorKind::Independent => {
            let samples = samples_from(&ds, s, Split::Train)?;
            let (pred, reps) = train_independent(&samples, &model_cfg, &hp)?;
            (Box::new(pred), reps)
        }
    };
    let evaluation = if ds.split(Split::Test).next().is_some() {
        Some(evaluate_mae(predictor.as_ref(), s, &ds)?)
    } else {
        None
    };
    Ok(BuiltPredictor {
        predictor,
        dataset: Some(ds),
        training,
        evaluation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub algorithm: String,
    pub ue_count: usize,
    pub quota: usize,
    pub sum_rate: f64,
    pub spectral_efficiency: f64,
    pub jain_index: f64,
    pub per_user_throughputs: Vec<f64>,
    pub per_rb_rates: Vec<f64>,
    /// Sum rate after each accepted exchange (M3-MAMA only).
    pub convergence_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub algorithm: String,
    pub ue_count: usize,
    pub quota: usize,
    pub runs: usize,
    pub sum_rate_mean: f64,
    pub sum_rate_var: f64,
    pub spectral_efficiency_mean: f64,
    pub spectral_efficiency_var: f64,
    pub jain_mean: f64,
    pub jain_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityRecord {
    pub seed: u64,
    pub speed_kmh: f64,
    pub ue: usize,
    pub bs_id: usize,
    pub scheme: String,
    pub throughput: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilitySummary {
    pub speed_kmh: f64,
    pub scheme: String,
    pub users: usize,
    pub mean_throughput: f64,
    pub var_throughput: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
    pub mobility: Vec<MobilityRecord>,
    pub mobility_summary: Vec<MobilitySummary>,
    pub csi_evaluation: Option<MaeReport>,
    pub training: Vec<TrainReport>,
}

/// Mean and sample variance (zero for a single value).
pub fn mean_var(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Groups by (algorithm, ue_count, quota) in order of first appearance.
pub fn aggregate(records: &[RunRecord]) -> Vec<Aggregate> {
    let mut keys: Vec<(String, usize, usize)> = Vec::new();
    for r in records {
        let k = (r.algorithm.clone(), r.ue_count, r.quota);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(algorithm, ue_count, quota)| {
            let cell: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.algorithm == algorithm && r.ue_count == ue_count && r.quota == quota)
                .collect();
            let col = |f: fn(&RunRecord) -> f64| mean_var(&cell.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (sum_rate_mean, sum_rate_var) = col(|r| r.sum_rate);
            let (spectral_efficiency_mean, spectral_efficiency_var) = col(|r| r.spectral_efficiency);
            let (jain_mean, jain_var) = col(|r| r.jain_index);
            Aggregate {
                algorithm,
                ue_count,
                quota,
                runs: cell.len(),
                sum_rate_mean,
                sum_rate_var,
                spectral_efficiency_mean,
                spectral_efficiency_var,
                jain_mean,
                jain_var,
            }
        })
        .collect()
}

pub fn summarize_mobility(records: &[MobilityRecord]) -> Vec<MobilitySummary> {
    let mut keys: Vec<(f64, String)> = Vec::new();
    for r in records {
        if !keys.iter().any(|(v, s)| *v == r.speed_kmh && *s == r.scheme) {
            keys.push((r.speed_kmh, r.scheme.clone()));
        }
    }
    keys.into_iter()
        .map(|(speed_kmh, scheme)| {
            let t: Vec<f64> = records
                .iter()
                .filter(|r| r.speed_kmh == speed_kmh && r.scheme == scheme)
                .map(|r| r.throughput)
                .collect();
            let (mean_throughput, var_throughput) = mean_var(&t);
            MobilitySummary {
                speed_kmh,
                scheme,
                users: t.len(),
                mean_throughput,
                var_throughput,
            }
        })
        .collect()
}

fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    for &p in parts {
        rng = ChaCha8Rng::seed_from_u64(rng.random::<u64>() ^ p);
    }
    rng.random()
}

fn record(seed: u64, algorithm: &str, p: &AllocProblem, m: &Matching, bw_mhz: f64, trace: Vec<f64>) -> Result<RunRecord> {
    let per_user = m.per_user(p);
    let sum_rate = m.sum_rate(p);
    Ok(RunRecord {
        seed,
        algorithm: algorithm.to_string(),
        ue_count: p.num_ues(),
        quota: p.quota,
        sum_rate,
        spectral_efficiency: spectral_efficiency(sum_rate, bw_mhz)?,
        jain_index: jain_index(&per_user)?,
        per_user_throughputs: per_user,
        per_rb_rates: m.per_rb(p),
        convergence_trace: trace,
    })
}

/// Allocation runs of all three schedulers on one rate matrix.
pub fn allocate_all(p: &AllocProblem, seed: u64, bw_mhz: f64) -> Result<Vec<RunRecord>> {
    let mama = m3_mama(p)?;
    Ok(vec![
        record(seed, "round_robin", p, &round_robin(p), bw_mhz, Vec::new())?,
        record(seed, "best_cqi", p, &best_cqi(p), bw_mhz, Vec::new())?,
        record(seed, "m3_mama", p, &mama.matching, bw_mhz, mama.trace)?,
    ])
}

pub fn run_static_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentReport> {
    cfg.validate()?;
    let s = generate_scenario(&cfg.scenario, seed)?;
    let setup = LinkSetup::new(cfg)?;
    let built = build_predictor(cfg, &s, &setup, seed)?;
    run_static_with(cfg, &s, &setup, built, seed)
}

/// Static experiment with an already built predictor.
pub fn run_static_with(
    cfg: &ExperimentConfig,
    s: &Scenario,
    setup: &LinkSetup,
    built: BuiltPredictor,
    seed: u64,
) -> Result<ExperimentReport> {
    let bw_mhz: f64 = s.bs_list.iter().map(|b| b.bandwidth_hz).sum::<f64>() / 1e6;
    let mut records = Vec::new();
    for run in 0..cfg.num_seeds as u64 {
        for &m in &cfg.ue_counts {
            let ues = sample_geolocations(s, m, derive_seed(seed, &[run, m as u64]));
            let rm = rate_matrix(built.predictor.as_ref(), s, &ues, &setup.mcs, &setup.frame)?;
            for &q in &cfg.quotas {
                let p = AllocProblem::from_rate_matrix(&rm, q)?;
                records.extend(allocate_all(&p, run, bw_mhz)?);
            }
        }
    }
    Ok(ExperimentReport {
        aggregates: aggregate(&records),
        records,
        csi_evaluation: built.evaluation,
        training: built.training,
        ..Default::default()
    })
}

pub fn run_mobility_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentReport> {
    cfg.validate()?;
    let s = generate_scenario(&cfg.scenario, seed)?;
    let setup = LinkSetup::new(cfg)?;
    let built = build_predictor(cfg, &s, &setup, seed)?;
    run_mobility_with(cfg, &s, &setup, built, seed)
}

fn rb_grids(s: &Scenario, bs_id: usize, ue: &Geolocation) -> Result<Vec<Vec<ChannelMatrix>>> {
    let bundle = RayBundle::new(s, bs_id, ue)?;
    (0..s.bs(bs_id)?.rb_count).map(|rb| bundle.rb_grid(rb, s.symbols_per_slot)).collect()
}

/// Per-user throughput of stale-feedback (CLSM), predicted (CaFTRA) and
/// fresh-feedback (genie) transmissions as the UE moves during the delay.
pub fn run_mobility_with(
    cfg: &ExperimentConfig,
    s: &Scenario,
    setup: &LinkSetup,
    built: BuiltPredictor,
    seed: u64,
) -> Result<ExperimentReport> {
    let oracle = GroundTruthPredictor {
        codebook: setup.codebook.clone(),
        esm: setup.esm.clone(),
    };
    let credit = |actual: &[Vec<ChannelMatrix>], reports: &[CsiReport]| -> Result<f64> {
        actual
            .iter()
            .zip(reports)
            .map(|(h, r)| realized_throughput(h, r, &setup.codebook, &setup.esm, &setup.mcs, &setup.frame, s.noise_power))
            .sum()
    };
    let mut mobility = Vec::new();
    for run in 0..cfg.num_seeds as u64 {
        let run_seed = derive_seed(seed, &[run, 0xb0b]);
        let ues = sample_geolocations(s, cfg.mobility_ues, run_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
        for (u, start) in ues.iter().enumerate() {
            let heading = rng.random_range(0.0..std::f64::consts::TAU);
            // Serve from the BS with the best fresh-feedback rate at the start point.
            let mut best = (0, f64::NEG_INFINITY);
            for bs in &s.bs_list {
                let reps = oracle.predict(s, bs.id, start)?;
                let rate: f64 = reps.iter().map(|r| max_phy_rate(r, &setup.mcs, &setup.frame)).sum::<Result<f64>>()?;
                if rate > best.1 {
                    best = (bs.id, rate);
                }
            }
            let bs_id = best.0;
            for &v in &cfg.speeds_kmh {
                let measured = advance(&s.area, start, v, 0.0, heading);
                let now = advance(&s.area, start, v, cfg.feedback_delay_s, heading);
                let seen = advance(
                    &s.area,
                    start,
                    v,
                    (cfg.feedback_delay_s - cfg.geolocation_staleness_s).max(0.0),
                    heading,
                );
                let actual = rb_grids(s, bs_id, &now)?;
                let schemes = [
                    ("clsm", oracle.predict(s, bs_id, &measured)?),
                    ("caftra", built.predictor.predict(s, bs_id, &seen)?),
                    ("genie", oracle.predict(s, bs_id, &now)?),
                ];
                for (scheme, reports) in schemes {
                    mobility.push(MobilityRecord {
                        seed: run,
                        speed_kmh: v,
                        ue: u,
                        bs_id,
                        scheme: scheme.to_string(),
                        throughput: credit(&actual, &reports)?,
                    });
                }
            }
        }
    }
    Ok(ExperimentReport {
        mobility_summary: summarize_mobility(&mobility),
        mobility,
        csi_evaluation: built.evaluation,
        training: built.training,
        ..Default::default()
    })
}
