//! ZF equalization, per-layer SINR, PMI/RI search and CQI selection.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, Precoder};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::scenario::{lin_to_db, ChannelMatrix, Geolocation, RayBundle, Scenario};

pub mod esm;

pub use esm::{effective_snr, EsmConfig};

/// Gram pivots below this fraction of the largest diagonal count as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Relative margin a hypothesis needs to displace the incumbent best.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CsiReport {
    pub ri: usize,
    pub pmi: usize,
    pub cqi1: usize,
    pub cqi2: usize,
}

impl CsiReport {
    pub fn validate(&self, cb: &Codebook) -> Result<()> {
        let range = cb.rank_range(self.ri).ok_or(Error::OutOfRange {
            what: "rank",
            index: self.ri,
            limit: cb.max_rank() + 1,
        })?;
        if !range.contains(&self.pmi) {
            return Err(Error::OutOfRange {
                what: "PMI",
                index: self.pmi,
                limit: range.end,
            });
        }
        if self.cqi1 > 15 || self.cqi2 > 15 {
            return Err(Error::OutOfRange {
                what: "CQI",
                index: self.cqi1.max(self.cqi2),
                limit: 16,
            });
        }
        Ok(())
    }
}

/// Layer ranges of the two codewords for rank `ri`.
pub fn codeword_layers(ri: usize) -> Result<(Range<usize>, Option<Range<usize>>)> {
    match ri {
        1 => Ok((0..1, None)),
        2 => Ok((0..1, Some(1..2))),
        3 => Ok((0..1, Some(1..3))),
        4 => Ok((0..2, Some(2..4))),
        _ => Err(Error::OutOfRange {
            what: "rank",
            index: ri,
            limit: 5,
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqualizationResult {
    pub f_matrix: CMatrix,
    pub g_matrix: CMatrix,
    pub per_layer_sinr: Vec<f64>,
}

fn effective_channel(h: &ChannelMatrix, w: &CMatrix) -> Result<CMatrix> {
    if h.entries.cols() != w.rows() {
        return Err(Error::InvalidCodebook(format!(
            "precoder has {} ports, channel has {}",
            w.rows(),
            h.entries.cols()
        )));
    }
    Ok(h.entries.matmul(w))
}

fn pinv(hw: &CMatrix) -> Result<CMatrix> {
    let inv = hw.gram().hpd_inverse(SINGULAR_TOL).ok_or(Error::SingularChannel)?;
    Ok(inv.matmul(&hw.adjoint()))
}

/// `F = ((HW)^H HW)^-1 (HW)^H`.
pub fn zf_equalizer(h: &ChannelMatrix, w: &Precoder) -> Result<CMatrix> {
    pinv(&effective_channel(h, &w.matrix)?)
}

fn layer_sinrs(f: &CMatrix, g: &CMatrix, sigma2: f64) -> Vec<f64> {
    (0..g.rows())
        .map(|l| {
            let signal = g[(l, l)].norm_sqr();
            let interference: f64 = (0..g.cols()).filter(|&i| i != l).map(|i| g[(l, i)].norm_sqr()).sum();
            let enhancement: f64 = (0..f.cols()).map(|i| f[(l, i)].norm_sqr()).sum();
            signal / (interference + sigma2 * enhancement)
        })
        .collect()
}

pub fn equalize(h: &ChannelMatrix, w: &Precoder, sigma2: f64) -> Result<EqualizationResult> {
    let hw = effective_channel(h, &w.matrix)?;
    let f = pinv(&hw)?;
    let g = f.matmul(&hw);
    let per_layer_sinr = layer_sinrs(&f, &g, sigma2);
    Ok(EqualizationResult {
        f_matrix: f,
        g_matrix: g,
        per_layer_sinr,
    })
}

pub fn post_eq_sinr(h: &ChannelMatrix, w: &Precoder, sigma2: f64) -> Result<Vec<f64>> {
    Ok(equalize(h, w, sigma2)?.per_layer_sinr)
}

pub fn mutual_info(sinrs: &[f64]) -> f64 {
    sinrs.iter().map(|s| (1.0 + s).log2()).sum()
}

/// Winning hypothesis of the exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct PmiSelection {
    pub ri: usize,
    pub pmi: usize,
    pub mutual_info: f64,
    /// `sinrs[re][layer]` under the winning precoder.
    pub sinrs: Vec<Vec<f64>>,
}

/// Maximizes total mutual information over the RB grid; ties go to the
/// smallest (rank, flat index), which is codebook order.
pub fn select_pmi_ri(channels: &[ChannelMatrix], cb: &Codebook, sigma2: f64) -> Result<PmiSelection> {
    if channels.is_empty() {
        return Err(Error::Empty("channel grid"));
    }
    let mut best: Option<PmiSelection> = None;
    let mut grid = Vec::with_capacity(channels.len());
    'hyp: for p in cb.precoders() {
        grid.clear();
        let mut total = 0.0;
        for h in channels {
            match post_eq_sinr(h, p, sigma2) {
                Ok(s) => {
                    total += mutual_info(&s);
                    grid.push(s);
                }
                Err(Error::SingularChannel) => continue 'hyp,
                Err(e) => return Err(e),
            }
        }
        if !total.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => total > b.mutual_info + TIE_TOL * b.mutual_info.abs(),
        };
        if better {
            best = Some(PmiSelection {
                ri: p.rank(),
                pmi: p.flat_index,
                mutual_info: total,
                sinrs: grid.clone(),
            });
        }
    }
    best.ok_or(Error::NoValidPrecoder)
}

/// Highest CQI whose threshold the codeword's effective SNR reaches.
pub fn codeword_cqi(sinrs: &[f64], cfg: &EsmConfig) -> Result<usize> {
    for cqi in (1..esm::NUM_CQI).rev() {
        let eff = effective_snr(sinrs, cqi, cfg)?;
        if lin_to_db(eff) >= cfg.cqi_snr_thresholds[cqi] {
            return Ok(cqi);
        }
    }
    Ok(0)
}

fn gather(grid: &[Vec<f64>], layers: Range<usize>) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(grid.len() * layers.len());
    for re in grid {
        out.extend_from_slice(re.get(layers.clone()).ok_or(Error::OutOfRange {
            what: "layer",
            index: layers.end - 1,
            limit: re.len(),
        })?);
    }
    Ok(out)
}

/// `(cqi1, cqi2)` for a `sinr_grid[re][layer]`; `cqi2` mirrors `cqi1` at rank 1.
pub fn select_cqi(sinr_grid: &[Vec<f64>], ri: usize, cfg: &EsmConfig) -> Result<(usize, usize)> {
    let (cw0, cw1) = codeword_layers(ri)?;
    let cqi1 = codeword_cqi(&gather(sinr_grid, cw0)?, cfg)?;
    let cqi2 = match cw1 {
        Some(r) => codeword_cqi(&gather(sinr_grid, r)?, cfg)?,
        None => cqi1,
    };
    Ok((cqi1, cqi2))
}

/// Full report from an RB's channel grid.
pub fn csi_report_from_channels(
    channels: &[ChannelMatrix],
    cb: &Codebook,
    cfg: &EsmConfig,
    sigma2: f64,
) -> Result<CsiReport> {
    let sel = select_pmi_ri(channels, cb, sigma2)?;
    let (cqi1, cqi2) = select_cqi(&sel.sinrs, sel.ri, cfg)?;
    Ok(CsiReport {
        ri: sel.ri,
        pmi: sel.pmi,
        cqi1,
        cqi2,
    })
}

pub fn compute_csi_report(
    s: &Scenario,
    bs_id: usize,
    ue: &Geolocation,
    rb_index: usize,
    cb: &Codebook,
    cfg: &EsmConfig,
) -> Result<CsiReport> {
    let bundle = RayBundle::new(s, bs_id, ue)?;
    let channels = bundle.rb_grid(rb_index, s.symbols_per_slot)?;
    csi_report_from_channels(&channels, cb, cfg, s.noise_power)
}

/// Reports for every RB of one BS, sharing the ray geometry.
pub fn compute_csi_reports(
    s: &Scenario,
    bs_id: usize,
    ue: &Geolocation,
    cb: &Codebook,
    cfg: &EsmConfig,
) -> Result<Vec<CsiReport>> {
    let bundle = RayBundle::new(s, bs_id, ue)?;
    (0..s.bs(bs_id)?.rb_count)
        .map(|rb| {
            let channels = bundle.rb_grid(rb, s.symbols_per_slot)?;
            csi_report_from_channels(&channels, cb, cfg, s.noise_power)
        })
        .collect()
}

/// Scales a channel by a real factor (used for invariance probes).
pub fn scale_channel(h: &ChannelMatrix, a: f64) -> ChannelMatrix {
    ChannelMatrix {
        entries: h.entries.scale(C64::new(a, 0.0)),
        ..h.clone()
    }
}
