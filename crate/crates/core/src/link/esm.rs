//! Mutual-information effective SINR mapping with BICM capacity curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate::McsTable;
use crate::scenario::{db_to_lin, lin_to_db};

pub const NUM_CQI: usize = 16;

/// Monotone SNR (dB) -> bits/symbol table for one modulation order.
///
/// Evaluation interpolates linearly in dB and extrapolates the end segments,
/// so the map is strictly increasing (and exactly invertible) on the whole line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityCurve {
    pub modulation_order: u32,
    pub snr_db: Vec<f64>,
    pub bits: Vec<f64>,
}

impl CapacityCurve {
    pub fn new(modulation_order: u32, snr_db: Vec<f64>, bits: Vec<f64>) -> Result<Self> {
        if snr_db.len() != bits.len() || snr_db.len() < 2 {
            return Err(Error::Data("capacity curve needs at least two matching points".into()));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&snr_db) || !increasing(&bits) {
            return Err(Error::Data(format!(
                "capacity curve for order {modulation_order} is not strictly increasing"
            )));
        }
        Ok(Self {
            modulation_order,
            snr_db,
            bits,
        })
    }

    /// Parses `snr_db,bits` CSV with a header row.
    pub fn from_csv(modulation_order: u32, text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut snr = Vec::new();
        let mut bits = Vec::new();
        for row in rdr.deserialize::<(f64, f64)>() {
            let (s, b) = row?;
            snr.push(s);
            bits.push(b);
        }
        Self::new(modulation_order, snr, bits)
    }

    fn segment_by(xs: &[f64], v: f64) -> usize {
        // Index i of the segment [i, i+1] used for `v`, clamped to the ends.
        let p = xs.partition_point(|&x| x <= v);
        p.saturating_sub(1).min(xs.len() - 2)
    }

    pub fn eval_db(&self, snr_db: f64) -> f64 {
        let i = Self::segment_by(&self.snr_db, snr_db);
        let (x0, x1, y0, y1) = (self.snr_db[i], self.snr_db[i + 1], self.bits[i], self.bits[i + 1]);
        y0 + (snr_db - x0) * (y1 - y0) / (x1 - x0)
    }

    pub fn inverse_db(&self, bits: f64) -> f64 {
        let i = Self::segment_by(&self.bits, bits);
        let (x0, x1, y0, y1) = (self.snr_db[i], self.snr_db[i + 1], self.bits[i], self.bits[i + 1]);
        x0 + (bits - y0) * (x1 - x0) / (y1 - y0)
    }

    /// `f(snr)` for linear SNR.
    pub fn eval(&self, snr: f64) -> f64 {
        self.eval_db(lin_to_db(snr))
    }

    pub fn inverse(&self, bits: f64) -> f64 {
        db_to_lin(self.inverse_db(bits))
    }
}

const QPSK_CSV: &str = include_str!("../../data/bicm_qpsk.csv");
const QAM16_CSV: &str = include_str!("../../data/bicm_16qam.csv");
const QAM64_CSV: &str = include_str!("../../data/bicm_64qam.csv");
const QAM256_CSV: &str = include_str!("../../data/bicm_256qam.csv");

/// The shipped QPSK/16QAM/64QAM/256QAM curves.
pub fn default_capacity_curves() -> Vec<CapacityCurve> {
    [(2, QPSK_CSV), (4, QAM16_CSV), (6, QAM64_CSV), (8, QAM256_CSV)]
        .into_iter()
        .map(|(m, text)| CapacityCurve::from_csv(m, text).expect("shipped BICM table is valid"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsmConfig {
    pub gamma_per_cqi: Vec<f64>,
    pub bicm_capacity_curves: Vec<CapacityCurve>,
    /// Effective SNR (dB) needed for each CQI; entry 0 is unused.
    pub cqi_snr_thresholds: Vec<f64>,
    /// Modulation order of each CQI (0 = no transmission).
    pub cqi_modulation: Vec<u32>,
}

impl EsmConfig {
    /// Thresholds where the modulation's BICM capacity reaches
    /// `code_rate * order * margin`, with `gamma = 1` for every CQI.
    pub fn from_mcs(tbl: &McsTable, margin: f64) -> Result<Self> {
        let curves = default_capacity_curves();
        let mut thresholds = vec![f64::NEG_INFINITY; NUM_CQI];
        let mut modulation = vec![0; NUM_CQI];
        for entry in tbl.entries().iter().filter(|e| e.cqi > 0) {
            let curve = curves
                .iter()
                .find(|c| c.modulation_order == entry.modulation_order)
                .ok_or_else(|| Error::Data(format!("no BICM curve for order {}", entry.modulation_order)))?;
            let target = entry.code_rate * entry.modulation_order as f64 * margin;
            thresholds[entry.cqi] = curve.inverse_db(target);
            modulation[entry.cqi] = entry.modulation_order;
        }
        thresholds[0] = thresholds[1] - 100.0;
        let cfg = Self {
            gamma_per_cqi: vec![1.0; NUM_CQI],
            bicm_capacity_curves: curves,
            cqi_snr_thresholds: thresholds,
            cqi_modulation: modulation,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma_per_cqi.len() != NUM_CQI
            || self.cqi_snr_thresholds.len() != NUM_CQI
            || self.cqi_modulation.len() != NUM_CQI
        {
            return Err(Error::Config("ESM tables must have 16 entries".into()));
        }
        if self.gamma_per_cqi.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::Config("calibration factors must be positive".into()));
        }
        if self.cqi_snr_thresholds.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("CQI thresholds must be nondecreasing".into()));
        }
        for c in 1..NUM_CQI {
            self.curve_for_cqi(c)?;
        }
        Ok(())
    }

    pub fn curve_for_cqi(&self, cqi: usize) -> Result<&CapacityCurve> {
        let order = *self.cqi_modulation.get(cqi).ok_or(Error::OutOfRange {
            what: "CQI",
            index: cqi,
            limit: NUM_CQI,
        })?;
        self.bicm_capacity_curves
            .iter()
            .find(|c| c.modulation_order == order)
            .ok_or_else(|| Error::Config(format!("no capacity curve for CQI {cqi}")))
    }
}

/// Compresses SINRs into one AWGN-equivalent SNR (linear) for a CQI hypothesis.
pub fn effective_snr(sinrs: &[f64], cqi: usize, cfg: &EsmConfig) -> Result<f64> {
    if sinrs.is_empty() {
        return Err(Error::Empty("SINR list"));
    }
    let curve = cfg.curve_for_cqi(cqi.max(1))?;
    let gamma = cfg.gamma_per_cqi[cqi];
    // Mean taken relative to the first term: exact for constant input.
    let first = curve.eval(sinrs[0] / gamma);
    let spread: f64 = sinrs[1..].iter().map(|&s| curve.eval(s / gamma) - first).sum();
    let mean = first + spread / sinrs.len() as f64;
    Ok(gamma * curve.inverse(mean))
}

/// BICM capacity (bits per complex symbol) of Gray-labelled square QAM with
/// `2^order` points at linear SNR `snr`, by numerical integration.
///
/// Square Gray QAM factors into two independent Gray PAM dimensions.
pub fn bicm_capacity(order: u32, snr: f64) -> f64 {
    assert!(order >= 2 && order % 2 == 0, "square QAM needs an even order");
    let bits_per_dim = order / 2;
    let levels = 1usize << bits_per_dim;
    // Per-dimension energy 1/2, noise variance 1/(2 snr).
    let delta = (3.0 / (2.0 * ((levels * levels) as f64 - 1.0))).sqrt();
    let points: Vec<f64> = (0..levels).map(|i| (2.0 * i as f64 - levels as f64 + 1.0) * delta).collect();
    let labels: Vec<usize> = (0..levels).map(|i| i ^ (i >> 1)).collect();
    let sigma = (1.0 / (2.0 * snr)).sqrt();

    const NODES: usize = 2001;
    const SPAN: f64 = 10.0;
    let h = 2.0 * SPAN / (NODES - 1) as f64;
    let mut loss = 0.0;
    for (i, &a) in points.iter().enumerate() {
        for n in 0..NODES {
            let z = -SPAN + n as f64 * h;
            let w = (-0.5 * z * z).exp() * h / (2.0 * std::f64::consts::PI).sqrt();
            let w = if n == 0 || n == NODES - 1 { 0.5 * w } else { w };
            let y = a + sigma * z;
            let ll: Vec<f64> = points.iter().map(|&p| -(y - p).powi(2) / (2.0 * sigma * sigma)).collect();
            let all = log_sum_exp(ll.iter().copied());
            for b in 0..bits_per_dim {
                let bit = (labels[i] >> b) & 1;
                let same = log_sum_exp(
                    ll.iter()
                        .zip(&labels)
                        .filter(|(_, &l)| (l >> b) & 1 == bit)
                        .map(|(&v, _)| v),
                );
                loss += w * (all - same) / std::f64::consts::LN_2;
            }
        }
    }
    2.0 * (bits_per_dim as f64 - loss / levels as f64)
}

fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    m + it.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Table rows `(snr_db, bits)` from -20 dB upward in 0.25 dB steps, ending
/// once the curve is within 1e-5 bits of saturation.
pub fn generate_capacity_table(order: u32) -> Vec<(f64, f64)> {
    let mut rows = Vec::new();
    let mut db = -20.0;
    loop {
        let c = bicm_capacity(order, db_to_lin(db));
        rows.push((db, c));
        if order as f64 - c < 1e-5 || db > 60.0 {
            break;
        }
        db += 0.25;
    }
    rows
}
