//! CQI -> MCS lookup and the per-RB peak PHY rate.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::csi_map::CsiPredictor;
use crate::error::{Error, Result};
use crate::link::{codeword_layers, CsiReport};
use crate::scenario::{Geolocation, Scenario};

const MCS_CSV: &str = include_str!("../data/mcs_table.csv");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsEntry {
    pub cqi: usize,
    pub modulation_order: u32,
    pub code_rate: f64,
}

/// 16-row CQI table (4-bit CQI, up to 64QAM).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

impl Default for McsTable {
    fn default() -> Self {
        Self::from_csv(MCS_CSV).expect("shipped MCS table is valid")
    }
}

impl McsTable {
    pub fn new(entries: Vec<McsEntry>) -> Result<Self> {
        if entries.len() != 16 {
            return Err(Error::Data(format!("MCS table needs 16 rows, got {}", entries.len())));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.cqi != i {
                return Err(Error::Data(format!("MCS row {i} has cqi {}", e.cqi)));
            }
            let ok = if i == 0 {
                e.modulation_order == 0 && e.code_rate == 0.0
            } else {
                e.modulation_order > 0 && e.code_rate > 0.0 && e.code_rate < 1.0
            };
            if !ok {
                return Err(Error::Data(format!("invalid MCS row {i}")));
            }
        }
        let se: Vec<f64> = entries.iter().map(|e| e.modulation_order as f64 * e.code_rate).collect();
        if se.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Data("spectral efficiency must be nondecreasing in CQI".into()));
        }
        Ok(Self { entries })
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let entries = rdr.deserialize::<McsEntry>().collect::<Result<Vec<_>, _>>()?;
        Self::new(entries)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            w.serialize(e)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub symbols_per_subframe: u32,
    pub res_per_symbol_per_rb: u32,
    pub pdcch_symbols: u32,
    pub dl_slots_per_frame: u32,
    pub frames_per_second: u32,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            symbols_per_subframe: 14,
            res_per_symbol_per_rb: 12,
            pdcch_symbols: 3,
            dl_slots_per_frame: 10,
            frames_per_second: 100,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.symbols_per_subframe <= self.pdcch_symbols
            || self.res_per_symbol_per_rb == 0
            || self.dl_slots_per_frame == 0
            || self.frames_per_second == 0
        {
            return Err(Error::Config("frame parameters must be positive".into()));
        }
        Ok(())
    }

    /// Data REs per RB per subframe after the control region.
    pub fn data_res(&self) -> u32 {
        (self.symbols_per_subframe - self.pdcch_symbols) * self.res_per_symbol_per_rb
    }
}

pub fn cqi_to_mcs(tbl: &McsTable, cqi: usize) -> Result<(u32, f64)> {
    tbl.entries
        .get(cqi)
        .map(|e| (e.modulation_order, e.code_rate))
        .ok_or(Error::OutOfRange {
            what: "CQI",
            index: cqi,
            limit: 16,
        })
}

/// Peak rate (Mbps) of one codeword with `layers` streams at `cqi`.
pub fn codeword_rate(tbl: &McsTable, fc: &FrameConfig, cqi: usize, layers: usize) -> Result<f64> {
    let (order, code_rate) = cqi_to_mcs(tbl, cqi)?;
    // Integer part first so the 264 * 0.076 chain stays exact.
    let bits = (order * fc.data_res()) as u64 * layers as u64;
    let per_second = (fc.dl_slots_per_frame * fc.frames_per_second) as f64;
    Ok(bits as f64 * code_rate * per_second / 1e6)
}

/// Peak rate of a report in Mbps for one RB.
pub fn max_phy_rate(report: &CsiReport, tbl: &McsTable, fc: &FrameConfig) -> Result<f64> {
    let (cw0, cw1) = codeword_layers(report.ri)?;
    let mut rate = codeword_rate(tbl, fc, report.cqi1, cw0.len())?;
    if let Some(cw1) = cw1 {
        rate += codeword_rate(tbl, fc, report.cqi2, cw1.len())?;
    }
    Ok(rate)
}

/// Rates of every (bs, rb) resource against every UE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateMatrix {
    /// `(bs_id, rb)` of each row, bs-major.
    pub resources: Vec<(usize, usize)>,
    pub rates: Array2<f64>,
}

impl RateMatrix {
    pub fn new(resources: Vec<(usize, usize)>, rates: Array2<f64>) -> Result<Self> {
        if resources.len() != rates.nrows() {
            return Err(Error::Data("resource labels do not match matrix rows".into()));
        }
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::NonFinite("rate matrix"));
        }
        Ok(Self { resources, rates })
    }

    pub fn num_resources(&self) -> usize {
        self.rates.nrows()
    }

    pub fn num_ues(&self) -> usize {
        self.rates.ncols()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["bs".to_string(), "rb".to_string()];
        header.extend((0..self.num_ues()).map(|m| format!("ue{m}")));
        w.write_record(&header)?;
        for (row, &(bs, rb)) in self.rates.rows().into_iter().zip(&self.resources) {
            let mut rec = vec![bs.to_string(), rb.to_string()];
            rec.extend(row.iter().map(|r| r.to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let ues = rdr.headers()?.len().checked_sub(2).ok_or_else(|| Error::Data("missing columns".into()))?;
        let mut resources = Vec::new();
        let mut data = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| Error::Data(format!("bad field {i} in rate CSV")))
            };
            resources.push((parse(0)? as usize, parse(1)? as usize));
            for m in 0..ues {
                data.push(parse(m + 2)?);
            }
        }
        let rates = Array2::from_shape_vec((resources.len(), ues), data).map_err(|e| Error::Data(e.to_string()))?;
        Self::new(resources, rates)
    }
}

/// Row `w` enumerates `(bs, rb)` pairs bs-major; column `m` is UE `m`.
pub fn rate_matrix(
    predictor: &dyn CsiPredictor,
    s: &Scenario,
    ues: &[Geolocation],
    tbl: &McsTable,
    fc: &FrameConfig,
) -> Result<RateMatrix> {
    let resources: Vec<(usize, usize)> = s
        .bs_list
        .iter()
        .flat_map(|bs| (0..bs.rb_count).map(move |rb| (bs.id, rb)))
        .collect();
    let mut rates = Array2::zeros((resources.len(), ues.len()));
    let mut row0 = 0;
    for bs in &s.bs_list {
        for (m, ue) in ues.iter().enumerate() {
            let reports = predictor.predict(s, bs.id, ue)?;
            if reports.len() != bs.rb_count {
                return Err(Error::Data(format!(
                    "predictor returned {} reports for {} RBs",
                    reports.len(),
                    bs.rb_count
                )));
            }
            for (rb, rep) in reports.iter().enumerate() {
                rates[[row0 + rb, m]] = max_phy_rate(rep, tbl, fc)?;
            }
        }
        row0 += bs.rb_count;
    }
    RateMatrix::new(resources, rates)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(ri: usize, cqi1: usize, cqi2: usize) -> CsiReport {
        CsiReport { ri, pmi: 0, cqi1, cqi2 }
    }

    #[test]
    fn anchor_rate_is_exact() {
        let (tbl, fc) = (McsTable::default(), FrameConfig::default());
        assert_eq!(fc.data_res(), 132);
        assert_eq!(max_phy_rate(&report(1, 1, 1), &tbl, &fc).unwrap(), 0.020064);
        assert_eq!(max_phy_rate(&report(1, 0, 0), &tbl, &fc).unwrap(), 0.0);
        assert_eq!(max_phy_rate(&report(2, 1, 1), &tbl, &fc).unwrap(), 0.040128);
    }

    #[test]
    fn table_lookup() {
        let tbl = McsTable::default();
        assert_eq!(cqi_to_mcs(&tbl, 1).unwrap(), (2, 0.076));
        assert_eq!(cqi_to_mcs(&tbl, 0).unwrap(), (0, 0.0));
        assert_eq!(cqi_to_mcs(&tbl, 15).unwrap(), (6, 0.926));
        assert!(matches!(cqi_to_mcs(&tbl, 16), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let tbl = McsTable::default();
        assert_eq!(McsTable::from_csv(&tbl.to_csv().unwrap()).unwrap(), tbl);
        let m = RateMatrix::new(vec![(0, 0), (0, 1)], ndarray::array![[0.5, 0.0], [0.020064, 1.25]]).unwrap();
        assert_eq!(RateMatrix::from_csv(&m.to_csv().unwrap()).unwrap(), m);
    }

    #[test]
    fn rejects_bad_tables() {
        let mut rows = McsTable::default().entries().to_vec();
        rows[5].code_rate = 0.01;
        assert!(McsTable::new(rows.clone()).is_err());
        rows.pop();
        assert!(McsTable::new(rows).is_err());
    }
}
