//! Labelled geolocation records, stored as JSON lines.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::CsiReport;
use crate::scenario::{Geolocation, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiRecord {
    pub bs_id: usize,
    pub ue_loc: Geolocation,
    pub labels: Vec<CsiReport>,
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CsiDataset {
    pub records: Vec<CsiRecord>,
}

impl CsiDataset {
    pub fn new(records: Vec<CsiRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &CsiRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Records restricted to one split, as a new dataset.
    pub fn subset(&self, split: Split) -> CsiDataset {
        Self::new(self.split(split).cloned().collect())
    }

    /// Every label list must cover its BS's RBs.
    pub fn validate(&self, s: &Scenario) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            let bs = s.bs(r.bs_id)?;
            if r.labels.len() != bs.rb_count {
                return Err(Error::Data(format!(
                    "record {i} has {} labels, BS {} has {} RBs",
                    r.labels.len(),
                    r.bs_id,
                    bs.rb_count
                )));
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Self { records })
    }
}

/// Min-max normalized `(x, y, z)` of the BS followed by the UE, in `[-1, 1]`.
pub fn position_features(s: &Scenario, bs_id: usize, ue: &Geolocation) -> Result<[f64; 6]> {
    let bs = s.bs(bs_id)?.position;
    let (w, h, zmax) = (s.area.width, s.area.height, s.max_height());
    let n = |v: f64, hi: f64| 2.0 * v / hi - 1.0;
    let f = [
        n(bs.x, w),
        n(bs.y, h),
        n(bs.z, zmax),
        n(ue.x, w),
        n(ue.y, h),
        n(ue.z, zmax),
    ];
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("position features"));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(split: Split) -> CsiRecord {
        CsiRecord {
            bs_id: 1,
            ue_loc: Geolocation::new(3.0, 4.5, 1.5),
            labels: vec![CsiReport {
                ri: 2,
                pmi: 40,
                cqi1: 7,
                cqi2: 5,
            }],
            split,
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let ds = CsiDataset::new(vec![record(Split::Train), record(Split::Test)]);
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 2);
        assert_eq!(CsiDataset::read_jsonl(&buf[..]).unwrap(), ds);
        assert_eq!(ds.split(Split::Test).count(), 1);
    }
}
