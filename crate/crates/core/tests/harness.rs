use std::collections::HashSet;
use std::process::Command;

use ffmimo::alloc::{brute_force_optimal, m3_mama, AllocProblem};
use ffmimo::csi_map::{CsiPredictor, GroundTruthPredictor, Split};
use ffmimo::harness::*;
use ffmimo::link::{compute_csi_reports, CsiReport};
use ffmimo::rate::{max_phy_rate, rate_matrix};
use ffmimo::scenario::{generate_scenario, rb_channels, sample_geolocations, Scenario};

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.predictor.kind = PredictorKind::GroundTruth;
    cfg.ue_counts = vec![3];
    cfg.quotas = vec![1, 2];
    cfg.num_seeds = 2;
    cfg.speeds_kmh = vec![0.0, 60.0];
    cfg.mobility_ues = 3;
    cfg
}

fn setup(cfg: &ExperimentConfig) -> (Scenario, LinkSetup) {
    (generate_scenario(&cfg.scenario, 7).unwrap(), LinkSetup::new(cfg).unwrap())
}

#[test]
fn dataset_is_disjoint_and_labels_match_direct_computation() {
    let cfg = small_config();
    let (s, st) = setup(&cfg);
    let ds = generate_dataset(&s, &st.codebook, &st.esm, 6, 4, 11).unwrap();
    assert_eq!(ds.len(), 10 * s.bs_list.len());
    let key = |r: &ffmimo::csi_map::CsiRecord| (r.ue_loc.x.to_bits(), r.ue_loc.y.to_bits());
    let train: HashSet<_> = ds.split(Split::Train).map(key).collect();
    let test: HashSet<_> = ds.split(Split::Test).map(key).collect();
    assert_eq!((train.len(), test.len()), (6, 4));
    assert!(train.is_disjoint(&test));
    for rec in ds.records.iter().step_by(7) {
        let direct = compute_csi_reports(&s, rec.bs_id, &rec.ue_loc, &st.codebook, &st.esm).unwrap();
        assert_eq!(rec.labels, direct);
    }
    ds.validate(&s).unwrap();
}

#[test]
fn genie_report_earns_the_full_rate_and_overshoot_earns_nothing() {
    let cfg = small_config();
    let (s, st) = setup(&cfg);
    let oracle = GroundTruthPredictor {
        codebook: st.codebook.clone(),
        esm: st.esm.clone(),
    };
    let mut checked = 0;
    for ue in sample_geolocations(&s, 6, 3) {
        let reports = oracle.predict(&s, 0, &ue).unwrap();
        for (rb, r) in reports.iter().enumerate() {
            let h = rb_channels(&s, 0, &ue, rb).unwrap();
            let got = realized_throughput(&h, r, &st.codebook, &st.esm, &st.mcs, &st.frame, s.noise_power).unwrap();
            let full = max_phy_rate(r, &st.mcs, &st.frame).unwrap();
            assert_eq!(got, full);
            if r.ri == 1 && r.cqi1 < 15 {
                let over = CsiReport { cqi1: 15, cqi2: 15, ..*r };
                let lost = realized_throughput(&h, &over, &st.codebook, &st.esm, &st.mcs, &st.frame, s.noise_power).unwrap();
                assert_eq!(lost, 0.0);
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn single_ue_allocation_is_optimal() {
    let cfg = small_config();
    let (s, st) = setup(&cfg);
    let oracle = GroundTruthPredictor {
        codebook: st.codebook.clone(),
        esm: st.esm.clone(),
    };
    let ues = sample_geolocations(&s, 1, 5);
    let rm = rate_matrix(&oracle, &s, &ues, &st.mcs, &st.frame).unwrap();
    let p = AllocProblem::from_rate_matrix(&rm, 1).unwrap();
    let best = brute_force_optimal(&p).unwrap();
    assert_eq!(m3_mama(&p).unwrap().matching.sum_rate(&p), best.sum_rate(&p));
}

#[test]
fn static_report_aggregates_recompute_from_records() {
    let cfg = small_config();
    let report = run_static_experiment(&cfg, 3).unwrap();
    assert_eq!(report.records.len(), 2 * 2 * 3);
    assert_eq!(report.aggregates, aggregate(&report.records));
    let csv = runs_csv(&report).unwrap();
    let back = read_runs_csv(&csv).unwrap();
    let again = aggregate(&back);
    for (a, b) in again.iter().zip(&report.aggregates) {
        assert_eq!((a.sum_rate_mean, a.jain_mean), (b.sum_rate_mean, b.jain_mean));
    }
    for r in report.records.iter().filter(|r| r.algorithm == "m3_mama") {
        let rr = report
            .records
            .iter()
            .find(|o| o.algorithm == "round_robin" && o.seed == r.seed && o.quota == r.quota)
            .unwrap();
        assert!(r.sum_rate >= rr.sum_rate);
    }
}

#[test]
fn zero_delay_feedback_matches_the_genie() {
    let mut cfg = small_config();
    cfg.feedback_delay_s = 0.0;
    let report = run_mobility_experiment(&cfg, 2).unwrap();
    let by = |scheme: &str| -> Vec<f64> {
        report.mobility.iter().filter(|m| m.scheme == scheme).map(|m| m.throughput).collect()
    };
    assert_eq!(by("clsm"), by("genie"));
    // Oracle CaFTRA at the true location is the genie as well.
    assert_eq!(by("caftra"), by("genie"));
}

#[test]
fn experiments_are_deterministic() {
    let cfg = small_config();
    let a = run_static_experiment(&cfg, 9).unwrap();
    let b = run_static_experiment(&cfg, 9).unwrap();
    assert_eq!(runs_csv(&a).unwrap(), runs_csv(&b).unwrap());
    let c = run_static_experiment(&cfg, 10).unwrap();
    assert_ne!(runs_csv(&a).unwrap(), runs_csv(&c).unwrap());
}

#[test]
fn infeasible_config_is_rejected_at_validation() {
    let mut cfg = small_config();
    cfg.ue_counts = vec![13];
    cfg.quotas = vec![2];
    assert!(matches!(cfg.validate(), Err(ffmimo::Error::Config(_))));
    assert!(run_static_experiment(&cfg, 0).is_err());
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ffmimo"))
}

#[test]
fn cli_exit_codes_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("c.json");
    std::fs::write(&cfg_path, serde_json::to_string(&small_config()).unwrap()).unwrap();
    let out = dir.path().join("out");

    let st = cli()
        .args(["experiment", "static", "--config"])
        .arg(&cfg_path)
        .args(["--seed", "4", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    for f in ["runs.csv", "aggregates.csv", "per_rb_cdf.csv", "report.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["config"]["num_seeds"], 2);
    let first = std::fs::read_to_string(out.join("runs.csv")).unwrap();

    let st = cli().args(["report", "--dir"]).arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert_eq!(std::fs::read_to_string(out.join("runs.csv")).unwrap(), first);

    let st = cli().args(["experiment", "static", "--bogus"]).output().unwrap();
    assert_eq!(st.status.code(), Some(2));

    let mut bad = small_config();
    bad.ue_counts = vec![40];
    std::fs::write(&cfg_path, serde_json::to_string(&bad).unwrap()).unwrap();
    let st = cli().args(["experiment", "static", "--config"]).arg(&cfg_path).status().unwrap();
    assert_eq!(st.code(), Some(2));

    let st = cli()
        .args(["alloc", "run", "--rates"])
        .arg(dir.path().join("missing.csv"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(1));
}

#[test]
fn cli_alloc_runs_on_a_rate_csv() {
    let cfg = small_config();
    let (s, st) = setup(&cfg);
    let oracle = GroundTruthPredictor {
        codebook: st.codebook.clone(),
        esm: st.esm.clone(),
    };
    let rm = rate_matrix(&oracle, &s, &sample_geolocations(&s, 4, 1), &st.mcs, &st.frame).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rates = dir.path().join("rates.csv");
    std::fs::write(&rates, rm.to_csv().unwrap()).unwrap();
    let st = cli()
        .args(["alloc", "run", "--quota", "2", "--rates"])
        .arg(&rates)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let runs = read_runs_csv(&std::fs::read_to_string(dir.path().join("runs.csv")).unwrap()).unwrap();
    assert_eq!(runs.len(), 3);
    assert!(runs.iter().all(|r| r.quota == 2));
}
