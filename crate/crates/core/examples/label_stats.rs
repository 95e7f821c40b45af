//! Prints the label distribution of a generated scenario.
//!
//! `cargo run --release --example label_stats -- [seed] [locations] [tx_power_dbm] [rcs_m2]`

use std::time::Instant;

use ffmimo::codebook::{build_codebook, CodebookConfig};
use ffmimo::link::{compute_csi_reports, EsmConfig};
use ffmimo::rate::McsTable;
use ffmimo::scenario::{generate_scenario, sample_geolocations, ScenarioConfig};

fn main() -> ffmimo::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seed = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(7);
    let n = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(200);
    let mut cfg = ScenarioConfig::default();
    if let Some(p) = args.get(3).and_then(|a| a.parse().ok()) {
        cfg.tx_power_dbm = p;
    }
    if let Some(r) = args.get(4).and_then(|a| a.parse().ok()) {
        cfg.scatterer_rcs_m2 = r;
    }
    let s = generate_scenario(&cfg, seed)?;
    let cb = build_codebook(&CodebookConfig::for_panel(cfg.antenna_panel, 4, 1, 4)?)?;
    let esm = EsmConfig::from_mcs(&McsTable::default(), 1.0)?;
    println!("codebook size {}", cb.len());
    let mut ri = [0usize; 5];
    let mut cqi = [0usize; 16];
    let mut rb_agree = 0usize;
    let mut total = 0usize;
    let start = Instant::now();
    for ue in sample_geolocations(&s, n, seed + 1) {
        for bs in &s.bs_list {
            let reps = compute_csi_reports(&s, bs.id, &ue, &cb, &esm)?;
            for r in &reps {
                ri[r.ri] += 1;
                cqi[r.cqi1] += 1;
                total += 1;
            }
            rb_agree += reps.windows(2).filter(|w| w[0] == w[1]).count();
        }
    }
    println!("elapsed {:?} for {} reports", start.elapsed(), total);
    println!("ri {:?}", &ri[1..]);
    println!("cqi1 {:?}", cqi);
    println!("adjacent-RB identical reports {:.3}", rb_agree as f64 / (total - total / cfg.rb_count) as f64);
    Ok(())
}
