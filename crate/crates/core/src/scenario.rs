//! Synthetic urban scenario and a deterministic geometric ray channel.
//!
//! Every channel is a sum of a line-of-sight ray and single-bounce rays via
//! fixed point scatterers, each with free-space gain, planar-array steering at
//! the BS and a uniform linear array at the UE. Geometry alone determines the
//! channel, so CSI is a (piecewise smooth) function of the UE position.
//!
//! Phases are referenced to the geometric BS-UE distance, i.e. the channel
//! as seen by a receiver synchronised to the direct path. Only relative ray
//! phases matter for CSI, and this keeps the carrier phase from spinning
//! once per wavelength of UE displacement.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Physical subcarriers per resource block.
pub const SUBCARRIERS_PER_PRB: usize = 12;
const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;
const MIN_RAY_LEG_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn scale(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Point3) -> f64 {
        self.sub(o).norm()
    }
}

/// Rectangle `[0, width] x [0, height]` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.width).contains(&x) && (0.0..=self.height).contains(&y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntennaPanel {
    pub n1: usize,
    pub n2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: usize,
    pub position: Point3,
    pub num_tx_antennas: usize,
    pub antenna_panel: AntennaPanel,
    pub tx_power_dbm: f64,
    pub bandwidth_hz: f64,
    pub rb_count: usize,
}

impl BaseStation {
    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.bandwidth_hz / (self.rb_count * SUBCARRIERS_PER_PRB) as f64
    }

    /// Linear transmit power per resource element, in watts.
    pub fn power_per_re_w(&self) -> f64 {
        dbm_to_w(self.tx_power_dbm) / (self.rb_count * SUBCARRIERS_PER_PRB) as f64
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub min: Point3,
    pub max: Point3,
}

impl Building {
    pub fn contains(&self, p: Point3) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }

    pub fn footprint_contains(&self, x: f64, y: f64) -> bool {
        (self.min.x..=self.max.x).contains(&x) && (self.min.y..=self.max.y).contains(&y)
    }

    /// Slab test for the closed segment `a -> b`.
    pub fn intersects_segment(&self, a: Point3, b: Point3) -> bool {
        let d = b.sub(a);
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for (o, dv, lo, hi) in [
            (a.x, d.x, self.min.x, self.max.x),
            (a.y, d.y, self.min.y, self.max.y),
            (a.z, d.z, self.min.z, self.max.z),
        ] {
            if dv.abs() < 1e-15 {
                if o < lo || o > hi {
                    return false;
                }
            } else {
                let (mut ta, mut tb) = ((lo - o) / dv, (hi - o) / dv);
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }
}

/// The deterministic world all channels derive from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub area: Area,
    pub bs_list: Vec<BaseStation>,
    pub buildings: Vec<Building>,
    pub scatterers: Vec<Point3>,
    /// Noise power per resource element, linear watts.
    pub noise_power: f64,
    pub carrier_frequency: f64,
    /// Sampled subcarriers per RB used for CSI computation.
    pub subcarriers_per_rb: usize,
    pub symbols_per_slot: usize,
    pub seed: u64,
    pub num_rx_antennas: usize,
    pub penetration_loss_db: f64,
    /// Bistatic radar cross-section of every scatterer, m^2.
    pub scatterer_rcs_m2: f64,
    pub symbol_duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geolocation {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<[f64; 3]>,
}

impl Geolocation {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            x,
            y,
            z,
            velocity: None,
        }
    }

    pub fn point(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMatrix {
    pub entries: CMatrix,
    pub subcarrier_index: usize,
    pub time_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub width: f64,
    pub height: f64,
    pub num_bs: usize,
    /// Explicit BS positions; random rooftop-style placement when absent.
    pub bs_positions: Option<Vec<Point3>>,
    pub bs_height: f64,
    pub antenna_panel: AntennaPanel,
    pub tx_power_dbm: f64,
    pub rb_count: usize,
    pub subcarrier_spacing_hz: f64,
    pub num_buildings: usize,
    pub building_size: (f64, f64),
    pub building_height: (f64, f64),
    pub num_scatterers: usize,
    pub scatterer_rcs_m2: f64,
    pub carrier_frequency: f64,
    pub subcarriers_per_rb: usize,
    pub symbols_per_slot: usize,
    pub noise_figure_db: f64,
    pub penetration_loss_db: f64,
    pub num_rx_antennas: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            width: 400.0,
            height: 300.0,
            num_bs: 3,
            bs_positions: None,
            bs_height: 25.0,
            antenna_panel: AntennaPanel { n1: 6, n2: 1 },
            tx_power_dbm: -20.0,
            rb_count: 8,
            subcarrier_spacing_hz: 15e3,
            num_buildings: 9,
            building_size: (25.0, 60.0),
            building_height: (10.0, 40.0),
            num_scatterers: 24,
            scatterer_rcs_m2: 1000.0,
            carrier_frequency: 3.5e9,
            subcarriers_per_rb: 4,
            symbols_per_slot: 1,
            noise_figure_db: 7.0,
            penetration_loss_db: 20.0,
            num_rx_antennas: 4,
        }
    }
}

impl ScenarioConfig {
    /// Five BSs sharing 100 RBs each over a 400 m x 300 m block with nine buildings.
    pub fn full_scale() -> Self {
        Self {
            num_bs: 5,
            rb_count: 100,
            tx_power_dbm: -9.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidGeometry(m.to_string()));
        if !(self.width > 0.0 && self.height > 0.0) {
            return bad("area dimensions must be positive");
        }
        let num_bs = self.bs_positions.as_ref().map_or(self.num_bs, Vec::len);
        if num_bs == 0 {
            return bad("at least one base station is required");
        }
        if let Some(ps) = &self.bs_positions {
            if let Some(p) = ps.iter().find(|p| !(0.0..=self.width).contains(&p.x) || !(0.0..=self.height).contains(&p.y)) {
                return Err(Error::InvalidGeometry(format!("BS at ({}, {}) outside area", p.x, p.y)));
            }
        }
        if self.rb_count == 0 {
            return bad("rb_count must be positive");
        }
        if !(self.subcarrier_spacing_hz > 0.0) {
            return bad("bandwidth must be positive");
        }
        if self.antenna_panel.n1 == 0 || self.antenna_panel.n2 == 0 {
            return bad("antenna panel dimensions must be positive");
        }
        if self.subcarriers_per_rb == 0 || self.symbols_per_slot == 0 || self.num_rx_antennas == 0 {
            return bad("resource grid and receive antenna counts must be positive");
        }
        if !(self.carrier_frequency > 0.0) {
            return bad("carrier frequency must be positive");
        }
        if self.building_size.0 <= 0.0 || self.building_size.1 < self.building_size.0 {
            return bad("building size range invalid");
        }
        if self.building_height.0 <= 0.0 || self.building_height.1 < self.building_height.0 {
            return bad("building height range invalid");
        }
        Ok(())
    }
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Builds the scenario for `(config, seed)`; identical inputs give identical output.
pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = Area {
        width: config.width,
        height: config.height,
    };

    let mut buildings: Vec<Building> = Vec::with_capacity(config.num_buildings);
    let mut attempts = 0;
    while buildings.len() < config.num_buildings && attempts < 1000 * (config.num_buildings + 1) {
        attempts += 1;
        let (lo, hi) = config.building_size;
        let sx = rng.random_range(lo..=hi).min(area.width);
        let sy = rng.random_range(lo..=hi).min(area.height);
        let x0 = rng.random_range(0.0..=(area.width - sx));
        let y0 = rng.random_range(0.0..=(area.height - sy));
        let h = rng.random_range(config.building_height.0..=config.building_height.1);
        let b = Building {
            min: Point3::new(x0, y0, 0.0),
            max: Point3::new(x0 + sx, y0 + sy, h),
        };
        // Keep a street between buildings.
        let gap = 8.0;
        let overlaps = buildings.iter().any(|o| {
            b.min.x < o.max.x + gap && o.min.x < b.max.x + gap && b.min.y < o.max.y + gap && o.min.y < b.max.y + gap
        });
        if !overlaps {
            buildings.push(b);
        }
    }

    let bs_xy: Vec<(f64, f64, Option<f64>)> = match &config.bs_positions {
        Some(ps) => ps.iter().map(|p| (p.x, p.y, Some(p.z))).collect(),
        None => (0..config.num_bs)
            .map(|_| {
                (
                    rng.random_range(0.1 * area.width..=0.9 * area.width),
                    rng.random_range(0.1 * area.height..=0.9 * area.height),
                    None,
                )
            })
            .collect(),
    };
    let panel = config.antenna_panel;
    let bandwidth_hz = config.subcarrier_spacing_hz * (config.rb_count * SUBCARRIERS_PER_PRB) as f64;
    let bs_list = bs_xy
        .into_iter()
        .enumerate()
        .map(|(id, (x, y, z))| {
            let z = z.unwrap_or_else(|| {
                // Rooftop mount when the site falls on a building.
                let roof = buildings
                    .iter()
                    .filter(|b| b.footprint_contains(x, y))
                    .map(|b| b.max.z + 3.0)
                    .fold(0.0, f64::max);
                config.bs_height.max(roof)
            });
            BaseStation {
                id,
                position: Point3::new(x, y, z),
                num_tx_antennas: panel.n1 * panel.n2,
                antenna_panel: panel,
                tx_power_dbm: config.tx_power_dbm,
                bandwidth_hz,
                rb_count: config.rb_count,
            }
        })
        .collect();

    let scatterers = (0..config.num_scatterers)
        .map(|_| {
            if buildings.is_empty() {
                Point3::new(
                    rng.random_range(0.0..=area.width),
                    rng.random_range(0.0..=area.height),
                    rng.random_range(2.0..=15.0),
                )
            } else {
                let b = buildings[rng.random_range(0..buildings.len())];
                facade_point(&b, &mut rng)
            }
        })
        .collect();

    let noise_dbm = THERMAL_NOISE_DBM_PER_HZ + lin_to_db(config.subcarrier_spacing_hz) + config.noise_figure_db;
    Ok(Scenario {
        area,
        bs_list,
        buildings,
        scatterers,
        noise_power: dbm_to_w(noise_dbm),
        carrier_frequency: config.carrier_frequency,
        subcarriers_per_rb: config.subcarriers_per_rb,
        symbols_per_slot: config.symbols_per_slot,
        seed,
        num_rx_antennas: config.num_rx_antennas,
        penetration_loss_db: config.penetration_loss_db,
        scatterer_rcs_m2: config.scatterer_rcs_m2,
        // One OFDM symbol at the configured spacing (cyclic prefix ignored).
        symbol_duration_s: 1.0 / config.subcarrier_spacing_hz,
    })
}

/// A point 1 m in front of a random wall of `b`.
fn facade_point(b: &Building, rng: &mut ChaCha8Rng) -> Point3 {
    let z = rng.random_range(2.0..=(b.max.z - 1.0).max(2.5));
    let u: f64 = rng.random_range(0.0..=1.0);
    match rng.random_range(0..4) {
        0 => Point3::new(b.min.x + u * (b.max.x - b.min.x), b.min.y - 1.0, z),
        1 => Point3::new(b.min.x + u * (b.max.x - b.min.x), b.max.y + 1.0, z),
        2 => Point3::new(b.min.x - 1.0, b.min.y + u * (b.max.y - b.min.y), z),
        _ => Point3::new(b.max.x + 1.0, b.min.y + u * (b.max.y - b.min.y), z),
    }
}

/// Amplitude factors (linear, <= 1) applied to each ray class.
#[derive(Debug, Clone, PartialEq)]
pub struct Blockage {
    pub los: f64,
    pub scattered: Vec<f64>,
}

impl Scenario {
    pub fn bs(&self, bs_id: usize) -> Result<&BaseStation> {
        self.bs_list.get(bs_id).ok_or(Error::UnknownBs(bs_id))
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// Total number of BS-RB pairs.
    pub fn total_rbs(&self) -> usize {
        self.bs_list.iter().map(|b| b.rb_count).sum()
    }

    pub fn max_height(&self) -> f64 {
        self.bs_list
            .iter()
            .map(|b| b.position.z)
            .chain(self.buildings.iter().map(|b| b.max.z))
            .fold(1.0, f64::max)
    }

    pub fn in_building(&self, x: f64, y: f64) -> bool {
        self.buildings.iter().any(|b| b.footprint_contains(x, y))
    }

    fn check_location(&self, ue: &Geolocation) -> Result<()> {
        if !(ue.x.is_finite() && ue.y.is_finite() && ue.z.is_finite()) || !self.area.contains(ue.x, ue.y) {
            return Err(Error::OutOfArea { x: ue.x, y: ue.y });
        }
        Ok(())
    }

    fn segment_blocked(&self, a: Point3, b: Point3) -> bool {
        self.buildings.iter().any(|bd| bd.intersects_segment(a, b))
    }
}

/// Per-ray-class attenuation from buildings.
pub fn blockage(s: &Scenario, bs_id: usize, ue: &Geolocation) -> Result<Blockage> {
    let bs = s.bs(bs_id)?;
    let loss = 10f64.powf(-s.penetration_loss_db / 20.0);
    let u = ue.point();
    if s.buildings.iter().any(|b| b.contains(u)) {
        return Ok(Blockage {
            los: loss,
            scattered: vec![loss; s.scatterers.len()],
        });
    }
    let los = if s.segment_blocked(bs.position, u) { loss } else { 1.0 };
    let scattered = s
        .scatterers
        .iter()
        .map(|&p| {
            if s.segment_blocked(bs.position, p) || s.segment_blocked(p, u) {
                loss
            } else {
                1.0
            }
        })
        .collect();
    Ok(Blockage { los, scattered })
}

#[derive(Debug, Clone)]
struct Ray {
    gain: f64,
    excess_length: f64,
    /// Unit vector from the UE toward the incoming wave.
    arrival: Point3,
    tx_steering: Vec<C64>,
    rx_steering: Vec<C64>,
}

/// All rays between one BS and one UE position; evaluate per (k, t).
#[derive(Debug, Clone)]
pub struct RayBundle {
    rays: Vec<Ray>,
    n_rx: usize,
    n_tx: usize,
    amplitude: f64,
    carrier: f64,
    spacing: f64,
    rb_count: usize,
    k_per_rb: usize,
    bandwidth: f64,
    velocity: Option<[f64; 3]>,
    symbol_duration: f64,
    lambda: f64,
}

/// BS port ordering used throughout: the first panel dimension is split into
/// two halves (co-phasing groups); within a group index = a + n1g * b.
pub fn bs_port_offsets(bs: &BaseStation, area: &Area) -> Vec<Point3> {
    let AntennaPanel { n1, n2 } = bs.antenna_panel;
    let facing = Point3::new(area.width / 2.0 - bs.position.x, area.height / 2.0 - bs.position.y, 0.0);
    let heading = if facing.norm() < 1e-9 { 0.0 } else { facing.y.atan2(facing.x) };
    // Horizontal axis perpendicular to boresight, vertical second axis.
    let u1 = Point3::new(-heading.sin(), heading.cos(), 0.0);
    let u2 = Point3::new(0.0, 0.0, 1.0);
    let (groups, n1g) = if n1 % 2 == 0 { (2, n1 / 2) } else { (1, n1) };
    let mut out = Vec::with_capacity(n1 * n2);
    for g in 0..groups {
        for b in 0..n2 {
            for a in 0..n1g {
                let e1 = (g * n1g + a) as f64;
                out.push(u1.scale(0.5 * e1).add(u2.scale(0.5 * b as f64)));
            }
        }
    }
    out
}

/// Element offsets of the UE array in wavelengths: ULA along x.
fn ue_element_offsets(n_rx: usize) -> Vec<Point3> {
    (0..n_rx).map(|i| Point3::new(0.5 * i as f64, 0.0, 0.0)).collect()
}

fn steering(offsets: &[Point3], dir: Point3, sign: f64) -> Vec<C64> {
    offsets
        .iter()
        .map(|o| C64::from_polar(1.0, sign * 2.0 * PI * o.dot(dir)))
        .collect()
}

impl RayBundle {
    pub fn new(s: &Scenario, bs_id: usize, ue: &Geolocation) -> Result<Self> {
        s.check_location(ue)?;
        let bs = s.bs(bs_id)?;
        let block = blockage(s, bs_id, ue)?;
        let lambda = s.wavelength();
        let u = ue.point();
        let tx_off = bs_port_offsets(bs, &s.area);
        let rx_off = ue_element_offsets(s.num_rx_antennas);
        let d_los = bs.position.distance(u).max(MIN_RAY_LEG_M);
        let mut rays = Vec::with_capacity(1 + s.scatterers.len());

        let mut push = |gain: f64, length: f64, departure: Point3, arrival: Point3| {
            rays.push(Ray {
                gain,
                excess_length: length - d_los,
                arrival,
                // Stored as conj(a_tx) so `evaluate` forms a_rx a_tx^H directly.
                tx_steering: steering(&tx_off, departure, 1.0),
                rx_steering: steering(&rx_off, arrival, 1.0),
            });
        };

        let los_dir = u.sub(bs.position).scale(1.0 / d_los);
        push(
            block.los * lambda / (4.0 * PI * d_los),
            d_los,
            los_dir,
            los_dir.scale(-1.0),
        );
        let bistatic = lambda * s.scatterer_rcs_m2.sqrt() / (4.0 * PI).powf(1.5);
        for (&p, &att) in s.scatterers.iter().zip(&block.scattered) {
            let d1 = bs.position.distance(p).max(MIN_RAY_LEG_M);
            let d2 = p.distance(u).max(MIN_RAY_LEG_M);
            let dep = p.sub(bs.position).scale(1.0 / d1);
            let arr = p.sub(u).scale(1.0 / d2);
            push(att * bistatic / (d1 * d2), d1 + d2, dep, arr);
        }

        Ok(Self {
            rays,
            n_rx: s.num_rx_antennas,
            n_tx: bs.num_tx_antennas,
            amplitude: bs.power_per_re_w().sqrt(),
            carrier: s.carrier_frequency,
            spacing: bs.subcarrier_spacing_hz(),
            rb_count: bs.rb_count,
            k_per_rb: s.subcarriers_per_rb,
            bandwidth: bs.bandwidth_hz,
            velocity: ue.velocity,
            symbol_duration: s.symbol_duration_s,
            lambda,
        })
    }

    /// Baseband frequency offset of sampled subcarrier `k`.
    pub fn subcarrier_offset_hz(&self, k: usize) -> f64 {
        let rb = k / self.k_per_rb;
        let j = k % self.k_per_rb;
        let prb_pos = (j as f64 + 0.5) * SUBCARRIERS_PER_PRB as f64 / self.k_per_rb as f64;
        (rb as f64 * SUBCARRIERS_PER_PRB as f64 + prb_pos) * self.spacing - self.bandwidth / 2.0
    }

    pub fn evaluate(&self, k: usize, t: usize) -> Result<ChannelMatrix> {
        let limit = self.k_per_rb * self.rb_count;
        if k >= limit {
            return Err(Error::OutOfRange {
                what: "subcarrier",
                index: k,
                limit,
            });
        }
        let f = self.carrier + self.subcarrier_offset_hz(k);
        let elapsed = t as f64 * self.symbol_duration;
        let mut h = CMatrix::zeros(self.n_rx, self.n_tx);
        for ray in &self.rays {
            let mut phase = -2.0 * PI * f * ray.excess_length / SPEED_OF_LIGHT;
            if let Some(v) = self.velocity {
                let v = Point3::new(v[0], v[1], v[2]);
                phase += 2.0 * PI * v.dot(ray.arrival) * elapsed / self.lambda;
            }
            let g = C64::from_polar(ray.gain * self.amplitude, phase);
            for r in 0..self.n_rx {
                let gr = g * ray.rx_steering[r];
                for p in 0..self.n_tx {
                    h[(r, p)] += gr * ray.tx_steering[p];
                }
            }
        }
        Ok(ChannelMatrix {
            entries: h,
            subcarrier_index: k,
            time_index: t,
        })
    }

    /// Channels over the `K x T` grid of one RB, subcarrier-major.
    pub fn rb_grid(&self, rb: usize, symbols: usize) -> Result<Vec<ChannelMatrix>> {
        if rb >= self.rb_count {
            return Err(Error::OutOfRange {
                what: "resource block",
                index: rb,
                limit: self.rb_count,
            });
        }
        let mut out = Vec::with_capacity(self.k_per_rb * symbols);
        for j in 0..self.k_per_rb {
            for t in 0..symbols {
                out.push(self.evaluate(rb * self.k_per_rb + j, t)?);
            }
        }
        Ok(out)
    }
}

pub fn channel_matrix(s: &Scenario, bs_id: usize, ue: &Geolocation, k: usize, t: usize) -> Result<ChannelMatrix> {
    RayBundle::new(s, bs_id, ue)?.evaluate(k, t)
}

/// Channel grid of one RB for one BS-UE link.
pub fn rb_channels(s: &Scenario, bs_id: usize, ue: &Geolocation, rb: usize) -> Result<Vec<ChannelMatrix>> {
    RayBundle::new(s, bs_id, ue)?.rb_grid(rb, s.symbols_per_slot)
}

pub const UE_HEIGHT_M: f64 = 1.5;

/// Uniform samples over the outdoor part of the area.
pub fn sample_geolocations(s: &Scenario, n: usize, seed: u64) -> Vec<Geolocation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = rng.random_range(0.0..=s.area.width);
        let y = rng.random_range(0.0..=s.area.height);
        if !s.in_building(x, y) {
            out.push(Geolocation::new(x, y, UE_HEIGHT_M));
        }
    }
    out
}

/// Straight-line motion with specular reflection at the area boundary.
///
/// `heading` is in radians from the +x axis. Negative `delta_t_s` moves
/// backwards along the same line. The returned location carries the
/// (possibly reflected) velocity vector.
pub fn advance(area: &Area, ue: &Geolocation, speed_kmh: f64, delta_t_s: f64, heading: f64) -> Geolocation {
    if speed_kmh == 0.0 {
        return *ue;
    }
    let v = speed_kmh / 3.6;
    let (vx, vy) = (v * heading.cos(), v * heading.sin());
    let (x, sx) = fold(ue.x + vx * delta_t_s, area.width);
    let (y, sy) = fold(ue.y + vy * delta_t_s, area.height);
    Geolocation {
        x,
        y,
        z: ue.z,
        velocity: Some([vx * sx, vy * sy, 0.0]),
    }
}

/// Folds `p` into `[0, len]`; second value is the direction sign after reflections.
fn fold(p: f64, len: f64) -> (f64, f64) {
    let period = 2.0 * len;
    let m = p.rem_euclid(period);
    if m <= len {
        (m, 1.0)
    } else {
        (period - m, -1.0)
    }
}
