//! WebAssembly bindings for the static demo page in `www/`.
//!
//! `Demo` holds one generated scenario plus the link setup. The plain Rust
//! methods carry the logic (and are what the native tests call); the
//! `#[wasm_bindgen]` block only converts errors for JavaScript.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ffmimo::alloc::{best_cqi, jain_index, m3_mama, round_robin, spectral_efficiency, AllocProblem, Matching};
use ffmimo::csi_map::{CsiPredictor, GroundTruthPredictor};
use ffmimo::harness::{ExperimentConfig, LinkSetup};
use ffmimo::link::compute_csi_report;
use ffmimo::rate::{max_phy_rate, rate_matrix};
use ffmimo::scenario::{generate_scenario, sample_geolocations, Geolocation, Scenario, UE_HEIGHT_M};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Ri,
    Cqi,
    Pmi,
    Rate,
}

impl Field {
    pub fn parse(name: &str) -> ffmimo::Result<Self> {
        match name {
            "ri" => Ok(Self::Ri),
            "cqi" => Ok(Self::Cqi),
            "pmi" => Ok(Self::Pmi),
            "rate" => Ok(Self::Rate),
            other => Err(ffmimo::Error::Config(format!("unknown field {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmResult {
    pub name: &'static str,
    pub sum_rate: f64,
    pub spectral_efficiency: f64,
    pub jain_index: f64,
    pub per_user: Vec<f64>,
    /// Owning UE of each BS-RB, in `resources` order.
    pub owner: Vec<usize>,
    pub accepted_exchanges: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub ue_count: usize,
    pub quota: usize,
    pub resources: Vec<(usize, usize)>,
    pub ue_positions: Vec<(f64, f64)>,
    pub algorithms: Vec<AlgorithmResult>,
}

#[wasm_bindgen]
pub struct Demo {
    scenario: Scenario,
    setup: LinkSetup,
}

impl Demo {
    pub fn create(seed: u64) -> ffmimo::Result<Self> {
        let cfg = ExperimentConfig::default();
        Ok(Self {
            scenario: generate_scenario(&cfg.scenario, seed)?,
            setup: LinkSetup::new(&cfg)?,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Row-major `rows x cols` grid of one CSI field over the area; NaN
    /// marks cells inside buildings.
    pub fn heatmap(&self, bs_id: usize, rb: usize, cols: usize, rows: usize, field: Field) -> ffmimo::Result<Vec<f64>> {
        let s = &self.scenario;
        let st = &self.setup;
        let mut out = Vec::with_capacity(cols * rows);
        for r in 0..rows {
            for c in 0..cols {
                let x = (c as f64 + 0.5) * s.area.width / cols as f64;
                let y = (r as f64 + 0.5) * s.area.height / rows as f64;
                if s.in_building(x, y) {
                    out.push(f64::NAN);
                    continue;
                }
                let rep = compute_csi_report(s, bs_id, &Geolocation::new(x, y, UE_HEIGHT_M), rb, &st.codebook, &st.esm)?;
                out.push(match field {
                    Field::Ri => rep.ri as f64,
                    Field::Cqi => rep.cqi1 as f64,
                    Field::Pmi => rep.pmi as f64,
                    Field::Rate => max_phy_rate(&rep, &st.mcs, &st.frame)?,
                });
            }
        }
        Ok(out)
    }

    /// Array gain `|a(theta)^T w|^2` of one rank-1 precoder over `points`
    /// angles from -90 to 90 degrees off boresight.
    pub fn beam_pattern(&self, pmi: usize, points: usize) -> ffmimo::Result<Vec<f64>> {
        let cb = &self.setup.codebook;
        let range = cb.rank_range(1).ok_or(ffmimo::Error::Empty("rank-1 codebook"))?;
        if !range.contains(&pmi) {
            return Err(ffmimo::Error::OutOfRange {
                what: "rank-1 PMI",
                index: pmi,
                limit: range.end,
            });
        }
        let w = &cb.precoders()[pmi].matrix;
        let n = points.max(2);
        Ok((0..n)
            .map(|i| {
                let theta = (-90.0 + 180.0 * i as f64 / (n - 1) as f64).to_radians();
                // Ports sit half a wavelength apart along the panel axis.
                let resp = (0..w.rows())
                    .map(|m| ffmimo::linalg::C64::from_polar(1.0, std::f64::consts::PI * m as f64 * theta.sin()) * w[(m, 0)])
                    .sum::<ffmimo::linalg::C64>();
                resp.norm_sqr()
            })
            .collect())
    }

    pub fn rank1_count(&self) -> usize {
        self.setup.codebook.rank_range(1).map_or(0, |r| r.len())
    }

    /// Oracle-CSI rate matrix for `ue_count` random UEs, allocated by all three schedulers.
    pub fn compare(&self, ue_count: usize, quota: usize, ue_seed: u64) -> ffmimo::Result<Comparison> {
        let s = &self.scenario;
        let st = &self.setup;
        let oracle = GroundTruthPredictor {
            codebook: st.codebook.clone(),
            esm: st.esm.clone(),
        };
        let ues = sample_geolocations(s, ue_count, ue_seed);
        let rm = rate_matrix(&oracle as &dyn CsiPredictor, s, &ues, &st.mcs, &st.frame)?;
        let p = AllocProblem::from_rate_matrix(&rm, quota)?;
        let bw_mhz = s.bs_list.iter().map(|b| b.bandwidth_hz).sum::<f64>() / 1e6;
        let mama = m3_mama(&p)?;
        let result = |name, m: &Matching, accepted| -> ffmimo::Result<AlgorithmResult> {
            let per_user = m.per_user(&p);
            Ok(AlgorithmResult {
                name,
                sum_rate: m.sum_rate(&p),
                spectral_efficiency: spectral_efficiency(m.sum_rate(&p), bw_mhz)?,
                jain_index: jain_index(&per_user)?,
                per_user,
                owner: m.owner.clone(),
                accepted_exchanges: accepted,
            })
        };
        Ok(Comparison {
            ue_count,
            quota,
            resources: rm.resources.clone(),
            ue_positions: ues.iter().map(|u| (u.x, u.y)).collect(),
            algorithms: vec![
                result("Round-Robin", &round_robin(&p), 0)?,
                result("Best-CQI", &best_cqi(&p), 0)?,
                result("M3-MAMA", &mama.matching, mama.trace.len())?,
            ],
        })
    }
}

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsError> {
        Self::create(seed as u64).map_err(js)
    }

    /// Area, buildings and BS positions as JSON.
    #[wasm_bindgen(js_name = layoutJson)]
    pub fn layout_json(&self) -> Result<String, JsError> {
        let s = &self.scenario;
        serde_json::to_string(&serde_json::json!({
            "area": s.area,
            "buildings": s.buildings,
            "bs": s.bs_list.iter().map(|b| (b.position.x, b.position.y)).collect::<Vec<_>>(),
            "rb_count": s.bs_list[0].rb_count,
            "rank1_pmis": self.rank1_count(),
        }))
        .map_err(js)
    }

    #[wasm_bindgen(js_name = csiHeatmap)]
    pub fn csi_heatmap(&self, bs_id: usize, rb: usize, cols: usize, rows: usize, field: &str) -> Result<Vec<f64>, JsError> {
        self.heatmap(bs_id, rb, cols, rows, Field::parse(field).map_err(js)?).map_err(js)
    }

    #[wasm_bindgen(js_name = beamPattern)]
    pub fn beam_pattern_js(&self, pmi: usize, points: usize) -> Result<Vec<f64>, JsError> {
        self.beam_pattern(pmi, points).map_err(js)
    }

    #[wasm_bindgen(js_name = compareAllocators)]
    pub fn compare_allocators(&self, ue_count: usize, quota: usize, ue_seed: u32) -> Result<String, JsError> {
        let c = self.compare(ue_count, quota, ue_seed as u64).map_err(js)?;
        serde_json::to_string(&c).map_err(js)
    }
}
