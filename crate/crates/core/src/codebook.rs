//! Type-I single-panel codebook built from oversampled 2D DFT beams.
//!
//! The BS panel is split along its first dimension into two equal port
//! groups. A beam `v` of length `n1 * n2` is applied to both groups and the
//! second group is co-phased by `exp(j*pi*i2/2)`. Higher ranks add an
//! orthogonal companion beam chosen by `i13`; layers alternate the sign of
//! the co-phase so columns stay mutually orthogonal.

use std::f64::consts::PI;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::scenario::AntennaPanel;

pub const NUM_COPHASES: usize = 4;
pub const MAX_SUPPORTED_RANK: usize = 4;
const MAX_COMPANIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodebookConfig {
    /// Ports per group along the first dimension.
    pub n1: usize,
    pub n2: usize,
    pub o1: usize,
    pub o2: usize,
    pub max_rank: usize,
    /// Total BS ports; must equal `2 * n1 * n2`.
    pub num_ports: usize,
}

impl CodebookConfig {
    /// Codebook for a single-polarized panel whose first dimension is split in half.
    pub fn for_panel(panel: AntennaPanel, o1: usize, o2: usize, max_rank: usize) -> Result<Self> {
        if panel.n1 % 2 != 0 {
            return Err(Error::InvalidCodebook(format!(
                "panel first dimension {} cannot be split into two co-phasing groups",
                panel.n1
            )));
        }
        let cfg = Self {
            n1: panel.n1 / 2,
            n2: panel.n2,
            o1,
            o2: if panel.n2 == 1 { 1 } else { o2 },
            max_rank,
            num_ports: panel.n1 * panel.n2,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::InvalidCodebook(m));
        if self.n1 == 0 || self.n2 == 0 || self.o1 == 0 || self.o2 == 0 {
            return err("dimensions and oversampling must be at least 1".into());
        }
        if self.num_ports != 2 * self.n1 * self.n2 {
            return err(format!(
                "{} ports inconsistent with 2 x {} x {} panel",
                self.num_ports, self.n1, self.n2
            ));
        }
        if self.max_rank == 0 || self.max_rank > MAX_SUPPORTED_RANK || self.max_rank > self.num_ports {
            return err(format!("max_rank {} unsupported", self.max_rank));
        }
        if self.max_rank > 2 && self.n1 * self.n2 < 2 {
            return err("ranks above 2 need an orthogonal companion beam".into());
        }
        Ok(())
    }

    /// Orthogonal companion offsets (in units of the oversampling factor)
    /// selectable through `i13` for the given rank.
    pub fn companions(&self, rank: usize) -> Vec<(usize, usize)> {
        let all = (0..self.n2).flat_map(|d2| (0..self.n1).map(move |d1| (d1, d2)));
        match rank {
            1 => vec![(0, 0)],
            2 => all.take(MAX_COMPANIONS).collect(),
            _ => all.skip(1).take(MAX_COMPANIONS).collect(),
        }
    }

    pub fn beams_per_dim(&self) -> (usize, usize) {
        (self.n1 * self.o1, self.n2 * self.o2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PmiIndices {
    pub rank: usize,
    pub i11: usize,
    pub i12: usize,
    pub i13: usize,
    pub i2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Precoder {
    pub matrix: CMatrix,
    pub indices: PmiIndices,
    pub flat_index: usize,
}

impl Precoder {
    pub fn rank(&self) -> usize {
        self.indices.rank
    }
}

/// Unit-norm oversampled DFT beam: element `m` is `exp(j 2 pi m index / (n o)) / sqrt(n)`.
pub fn dft_beam(n: usize, index: usize, oversampling: usize) -> Vec<C64> {
    let denom = (n * oversampling) as f64;
    let s = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|m| C64::from_polar(s, 2.0 * PI * ((m * index) % (n * oversampling)) as f64 / denom))
        .collect()
}

/// 2D beam in port order `a + n1 * b`.
fn beam_2d(cfg: &CodebookConfig, l: usize, m: usize) -> Vec<C64> {
    let v1 = dft_beam(cfg.n1, l, cfg.o1);
    let v2 = dft_beam(cfg.n2, m, cfg.o2);
    v2.iter().flat_map(|&b| v1.iter().map(move |&a| a * b)).collect()
}

fn build_precoder(cfg: &CodebookConfig, idx: PmiIndices) -> CMatrix {
    let (b1, b2) = cfg.beams_per_dim();
    let (d1, d2) = cfg.companions(idx.rank)[idx.i13];
    let v = beam_2d(cfg, idx.i11, idx.i12);
    let w = beam_2d(cfg, (idx.i11 + d1 * cfg.o1) % b1, (idx.i12 + d2 * cfg.o2) % b2);
    let phi = C64::from_polar(1.0, PI * idx.i2 as f64 / 2.0);
    // (beam, co-phase sign) per layer.
    let layers: &[(bool, f64)] = match idx.rank {
        1 => &[(false, 1.0)],
        2 => &[(false, 1.0), (true, -1.0)],
        3 => &[(false, 1.0), (true, 1.0), (false, -1.0)],
        _ => &[(false, 1.0), (true, 1.0), (false, -1.0), (true, -1.0)],
    };
    let scale = 1.0 / ((2 * idx.rank) as f64).sqrt();
    let columns: Vec<Vec<C64>> = layers
        .iter()
        .map(|&(companion, sign)| {
            let beam = if companion { &w } else { &v };
            beam.iter()
                .map(|&x| x * scale)
                .chain(beam.iter().map(|&x| x * phi * sign * scale))
                .collect()
        })
        .collect();
    CMatrix::from_columns(&columns)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub config: CodebookConfig,
    precoders: Vec<Precoder>,
    /// Flat-index range of each rank, index 0 = rank 1.
    rank_ranges: Vec<Range<usize>>,
}

/// Enumerates every precoder rank-major, then by (i11, i12, i13, i2).
pub fn build_codebook(cfg: &CodebookConfig) -> Result<Codebook> {
    cfg.validate()?;
    let (b1, b2) = cfg.beams_per_dim();
    let mut precoders = Vec::new();
    let mut rank_ranges = Vec::with_capacity(cfg.max_rank);
    for rank in 1..=cfg.max_rank {
        let start = precoders.len();
        let n13 = cfg.companions(rank).len();
        for i11 in 0..b1 {
            for i12 in 0..b2 {
                for i13 in 0..n13 {
                    for i2 in 0..NUM_COPHASES {
                        let indices = PmiIndices { rank, i11, i12, i13, i2 };
                        precoders.push(Precoder {
                            matrix: build_precoder(cfg, indices),
                            indices,
                            flat_index: precoders.len(),
                        });
                    }
                }
            }
        }
        rank_ranges.push(start..precoders.len());
    }
    Ok(Codebook {
        config: *cfg,
        precoders,
        rank_ranges,
    })
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.precoders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.precoders.is_empty()
    }

    pub fn max_rank(&self) -> usize {
        self.config.max_rank
    }

    pub fn precoders(&self) -> &[Precoder] {
        &self.precoders
    }

    pub fn rank_range(&self, rank: usize) -> Option<Range<usize>> {
        rank.checked_sub(1).and_then(|r| self.rank_ranges.get(r)).cloned()
    }

    pub fn get(&self, flat_index: usize) -> Option<&Precoder> {
        self.precoders.get(flat_index)
    }

    pub fn flat_index(&self, idx: &PmiIndices) -> Option<usize> {
        let range = self.rank_range(idx.rank)?;
        let (_, b2) = self.config.beams_per_dim();
        let n13 = self.config.companions(idx.rank).len();
        if idx.i12 >= b2 || idx.i13 >= n13 || idx.i2 >= NUM_COPHASES {
            return None;
        }
        let local = ((idx.i11 * b2 + idx.i12) * n13 + idx.i13) * NUM_COPHASES + idx.i2;
        let flat = range.start + local;
        (flat < range.end).then_some(flat)
    }

    /// JSON dump with matrices as nested `[re, im]` pairs, row-major.
    pub fn to_json_dump(&self) -> serde_json::Value {
        let entries: Vec<_> = self
            .precoders
            .iter()
            .map(|p| {
                let rows: Vec<Vec<[f64; 2]>> = (0..p.matrix.rows())
                    .map(|r| (0..p.matrix.cols()).map(|c| [p.matrix[(r, c)].re, p.matrix[(r, c)].im]).collect())
                    .collect();
                serde_json::json!({
                    "flat_index": p.flat_index,
                    "rank": p.indices.rank,
                    "i11": p.indices.i11,
                    "i12": p.indices.i12,
                    "i13": p.indices.i13,
                    "i2": p.indices.i2,
                    "matrix": rows,
                })
            })
            .collect();
        serde_json::json!({ "config": self.config, "precoders": entries })
    }
}

pub fn precoder_by_pmi(cb: &Codebook, rank: usize, pmi: usize) -> Result<&Precoder> {
    let range = cb.rank_range(rank).ok_or(Error::OutOfRange {
        what: "rank",
        index: rank,
        limit: cb.max_rank(),
    })?;
    if !range.contains(&pmi) {
        return Err(Error::OutOfRange {
            what: "PMI",
            index: pmi,
            limit: range.end,
        });
    }
    Ok(&cb.precoders[pmi])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{inner, norm};

    fn cfg(n1: usize, n2: usize, o1: usize, o2: usize, max_rank: usize) -> CodebookConfig {
        CodebookConfig {
            n1,
            n2,
            o1,
            o2,
            max_rank,
            num_ports: 2 * n1 * n2,
        }
    }

    #[test]
    fn zero_phase_beam() {
        let v = dft_beam(4, 0, 1);
        assert!(v.iter().all(|x| (x - C64::new(0.5, 0.0)).norm() < 1e-15));
        assert_eq!(dft_beam(1, 3, 4), vec![C64::new(1.0, 0.0)]);
    }

    #[test]
    fn beams_spaced_by_oversampling_are_orthogonal() {
        for n in 2..6 {
            for o in 1..5 {
                for i in 0..n * o {
                    let a = dft_beam(n, i, o);
                    assert!((norm(&a) - 1.0).abs() < 1e-12);
                    let b = dft_beam(n, i + o, o);
                    assert!(inner(&a, &b).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rank_one_count() {
        let cb = build_codebook(&cfg(2, 1, 4, 1, 1)).unwrap();
        assert_eq!(cb.len(), 2 * 4 * 4);
    }

    #[test]
    fn precoders_are_normalized_and_orthogonal() {
        let cb = build_codebook(&cfg(3, 1, 4, 1, 4)).unwrap();
        for p in cb.precoders() {
            assert!((p.matrix.frobenius_norm() - 1.0).abs() < 1e-12);
            let g = p.matrix.gram();
            for i in 0..p.rank() {
                for j in 0..p.rank() {
                    if i != j {
                        assert!(g[(i, j)].norm() < 1e-12, "{:?}", p.indices);
                    }
                }
            }
        }
    }

    #[test]
    fn flat_index_is_a_bijection() {
        let cb = build_codebook(&cfg(2, 2, 2, 2, 4)).unwrap();
        for (i, p) in cb.precoders().iter().enumerate() {
            assert_eq!(p.flat_index, i);
            assert_eq!(cb.flat_index(&p.indices), Some(i));
            assert_eq!(precoder_by_pmi(&cb, p.rank(), i).unwrap(), p);
        }
    }

    #[test]
    fn pmi_lookup_errors() {
        let cb = build_codebook(&cfg(3, 1, 4, 1, 2)).unwrap();
        assert_eq!(precoder_by_pmi(&cb, 1, 0).unwrap().flat_index, 0);
        let r1 = cb.rank_range(1).unwrap();
        assert!(precoder_by_pmi(&cb, 1, r1.end).is_err());
        assert!(precoder_by_pmi(&cb, 3, 0).is_err());
        assert!(precoder_by_pmi(&cb, 2, cb.len()).is_err());
    }

    #[test]
    fn inconsistent_configs_rejected() {
        let mut c = cfg(3, 1, 4, 1, 2);
        c.num_ports = 8;
        assert!(build_codebook(&c).is_err());
        assert!(build_codebook(&cfg(1, 1, 4, 1, 3)).is_err());
        assert!(CodebookConfig::for_panel(AntennaPanel { n1: 5, n2: 1 }, 4, 1, 2).is_err());
        let ok = CodebookConfig::for_panel(AntennaPanel { n1: 6, n2: 1 }, 4, 1, 4).unwrap();
        assert_eq!((ok.n1, ok.num_ports), (3, 6));
    }
}
