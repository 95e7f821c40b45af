use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ffmimo::alloc::AllocProblem;
use ffmimo::csi_map::{
    evaluate_mae, lqtn_train, samples_from, CsiDataset, LqtnConfig, LqtnModel, LqtnPredictor, Split, TrainConfig,
};
use ffmimo::harness::*;
use ffmimo::rate::RateMatrix;
use ffmimo::scenario::generate_scenario;
use ffmimo::Error;

#[derive(Parser)]
#[command(name = "ffmimo", version, about = "Geolocation CSI maps and multi-BS RB allocation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory, overriding `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    #[command(subcommand)]
    /// Scenario layout.
    Scenario(ScenarioCmd),
    #[command(subcommand)]
    /// Labelled CSI datasets.
    Dataset(DatasetCmd),
    /// Train the configured learned predictor and save a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Existing dataset (JSON lines); generated from the config otherwise.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Score a predictor against the test split of a dataset.
    EvalCsi {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Directory holding a `model` checkpoint written by `train`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    #[command(subcommand)]
    /// RB allocation on a given rate matrix.
    Alloc(AllocCmd),
    #[command(subcommand)]
    /// Full experiment sweeps.
    Experiment(ExperimentCmd),
    /// Recompute aggregates from the per-run records in a report directory.
    Report {
        #[command(flatten)]
        common: Common,
        /// Report directory; defaults to the output directory.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Generate the scenario layout and write it as JSON.
    Gen(Common),
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Label random geolocations with CSI reports.
    Gen(Common),
}

#[derive(Subcommand)]
enum AllocCmd {
    /// Run all allocators on a rate matrix CSV.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rates: PathBuf,
        /// Minimum RBs per UE; defaults to the first configured quota.
        #[arg(long)]
        quota: Option<usize>,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Static UEs: allocators across UE counts and quotas.
    Static(Common),
    /// Moving UEs: CLSM, CaFTRA and genie across speeds.
    Mobility(Common),
}

struct Ctx {
    cfg: ExperimentConfig,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn load(c: &Common) -> ffmimo::Result<Self> {
        let cfg = match &c.config {
            Some(p) => ExperimentConfig::from_file(p).map_err(|e| match e {
                Error::Io(io) => Error::Config(format!("{}: {io}", p.display())),
                other => other,
            })?,
            None => ExperimentConfig::default(),
        };
        let out = c.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        Ok(Self { cfg, seed: c.seed, out })
    }

    fn manifest<T: Serialize>(&self, command: &str, extra: T) -> ffmimo::Result<()> {
        fs::create_dir_all(&self.out)?;
        let m = serde_json::json!({
            "command": command,
            "seed": self.seed,
            "csv_schema_version": CSV_SCHEMA_VERSION,
            "config": self.cfg,
            "outputs": extra,
        });
        fs::write(self.out.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }
}

fn read_dataset(path: &Path) -> ffmimo::Result<CsiDataset> {
    CsiDataset::read_jsonl(BufReader::new(fs::File::open(path)?))
}

fn dataset_for(ctx: &Ctx, path: Option<&Path>, s: &ffmimo::scenario::Scenario, setup: &LinkSetup) -> ffmimo::Result<CsiDataset> {
    match path {
        Some(p) => read_dataset(p),
        None => {
            let p = &ctx.cfg.predictor;
            generate_dataset(s, &setup.codebook, &setup.esm, p.n_train, p.n_test, ctx.seed)
        }
    }
}

fn print_aggregates(report: &ExperimentReport) {
    for a in &report.aggregates {
        println!(
            "{:<12} M={:<3} Q={} sum_rate={:.4} Mbps  SE={:.4} b/s/Hz  jain={:.3}",
            a.algorithm, a.ue_count, a.quota, a.sum_rate_mean, a.spectral_efficiency_mean, a.jain_mean
        );
    }
    for m in &report.mobility_summary {
        println!("{:>6} km/h {:<7} {:.4} Mbps/user", m.speed_kmh, m.scheme, m.mean_throughput);
    }
    if let Some(e) = &report.csi_evaluation {
        println!("CSI prediction mean nMAE {:.4} over {} reports", e.mean_nmae(), e.count);
    }
}

fn run(cmd: Command) -> ffmimo::Result<()> {
    match cmd {
        Command::Scenario(ScenarioCmd::Gen(c)) => {
            let ctx = Ctx::load(&c)?;
            let s = generate_scenario(&ctx.cfg.scenario, ctx.seed)?;
            fs::create_dir_all(&ctx.out)?;
            fs::write(ctx.out.join("scenario.json"), serde_json::to_string_pretty(&s)?)?;
            ctx.manifest("scenario gen", ["scenario.json"])?;
            println!("{} BSs, {} buildings, {} scatterers", s.bs_list.len(), s.buildings.len(), s.scatterers.len());
        }
        Command::Dataset(DatasetCmd::Gen(c)) => {
            let ctx = Ctx::load(&c)?;
            let s = generate_scenario(&ctx.cfg.scenario, ctx.seed)?;
            let setup = LinkSetup::new(&ctx.cfg)?;
            let ds = dataset_for(&ctx, None, &s, &setup)?;
            fs::create_dir_all(&ctx.out)?;
            ds.write_jsonl(BufWriter::new(fs::File::create(ctx.out.join("dataset.jsonl"))?))?;
            ctx.manifest("dataset gen", ["dataset.jsonl"])?;
            println!("{} records", ds.len());
        }
        Command::Train { common, dataset } => {
            let ctx = Ctx::load(&common)?;
            if ctx.cfg.predictor.kind != PredictorKind::Lqtn {
                return Err(Error::Config("train needs predictor.kind = \"lqtn\"".into()));
            }
            let s = generate_scenario(&ctx.cfg.scenario, ctx.seed)?;
            let setup = LinkSetup::new(&ctx.cfg)?;
            let ds = dataset_for(&ctx, dataset.as_deref(), &s, &setup)?;
            ds.validate(&s)?;
            let p = &ctx.cfg.predictor;
            let mcfg = LqtnConfig::for_codebook(&setup.codebook, s.bs_list[0].rb_count, p.embed_dim, p.num_heads, ctx.seed);
            let mut model = LqtnModel::new(mcfg)?;
            let samples = samples_from(&ds, &s, Split::Train)?;
            let hp = TrainConfig {
                seed: ctx.seed,
                ..p.train.clone()
            };
            let training = vec![lqtn_train(&mut model, &samples, &hp)?];
            model.save(&ctx.out, "model")?;
            fs::write(ctx.out.join("training.json"), serde_json::to_string_pretty(&training)?)?;
            let predictor = LqtnPredictor { model };
            if ds.split(Split::Test).next().is_some() {
                let e = evaluate_mae(&predictor, &s, &ds)?;
                fs::write(ctx.out.join("csi_eval.json"), serde_json::to_string_pretty(&e)?)?;
                println!("test mean nMAE {:.4}", e.mean_nmae());
            }
            ctx.manifest("train", ["model.bin", "model.json", "training.json", "csi_eval.json"])?;
            if let Some(r) = training.first() {
                println!(
                    "loss {:.4} -> {:.4} over {} epochs",
                    r.initial_loss,
                    r.epoch_losses.last().copied().unwrap_or(r.initial_loss),
                    r.epoch_losses.len()
                );
            }
        }
        Command::EvalCsi { common, dataset, model } => {
            let ctx = Ctx::load(&common)?;
            let s = generate_scenario(&ctx.cfg.scenario, ctx.seed)?;
            let setup = LinkSetup::new(&ctx.cfg)?;
            let ds = dataset_for(&ctx, dataset.as_deref(), &s, &setup)?;
            ds.validate(&s)?;
            let eval = match model {
                Some(dir) => {
                    let p = LqtnPredictor {
                        model: LqtnModel::load(&dir, "model")?,
                    };
                    evaluate_mae(&p, &s, &ds)?
                }
                None => {
                    let built = train_on(&ctx.cfg, &s, &setup, ds.clone(), ctx.seed)?;
                    evaluate_mae(built.predictor.as_ref(), &s, &ds)?
                }
            };
            fs::create_dir_all(&ctx.out)?;
            fs::write(ctx.out.join("csi_eval.json"), serde_json::to_string_pretty(&eval)?)?;
            ctx.manifest("eval-csi", ["csi_eval.json"])?;
            println!(
                "nMAE ri {:.4} cqi1 {:.4} cqi2 {:.4} pmi {:.4} (mean {:.4}, {} reports)",
                eval.ri.nmae,
                eval.cqi1.nmae,
                eval.cqi2.nmae,
                eval.pmi.nmae,
                eval.mean_nmae(),
                eval.count
            );
        }
        Command::Alloc(AllocCmd::Run { common, rates, quota }) => {
            let ctx = Ctx::load(&common)?;
            let rm = RateMatrix::from_csv(&fs::read_to_string(&rates)?)?;
            let q = quota.or(ctx.cfg.quotas.first().copied()).unwrap_or(1);
            let p = AllocProblem::from_rate_matrix(&rm, q).map_err(|e| match e {
                Error::Infeasible { .. } => Error::Config(e.to_string()),
                other => other,
            })?;
            let bs_count = rm.resources.iter().map(|r| r.0).collect::<std::collections::BTreeSet<_>>().len();
            let s = generate_scenario(&ctx.cfg.scenario, ctx.seed)?;
            let rb_bw_mhz = s.bs_list[0].bandwidth_hz / 1e6;
            let records = allocate_all(&p, ctx.seed, rb_bw_mhz * bs_count as f64)?;
            let report = ExperimentReport {
                aggregates: aggregate(&records),
                records,
                ..Default::default()
            };
            write_report(&ctx.out, "alloc run", &ctx.cfg, ctx.seed, &report)?;
            print_aggregates(&report);
        }
        Command::Experiment(ExperimentCmd::Static(c)) => {
            let ctx = Ctx::load(&c)?;
            let report = run_static_experiment(&ctx.cfg, ctx.seed)?;
            write_report(&ctx.out, "experiment static", &ctx.cfg, ctx.seed, &report)?;
            print_aggregates(&report);
        }
        Command::Experiment(ExperimentCmd::Mobility(c)) => {
            let ctx = Ctx::load(&c)?;
            let report = run_mobility_experiment(&ctx.cfg, ctx.seed)?;
            write_report(&ctx.out, "experiment mobility", &ctx.cfg, ctx.seed, &report)?;
            print_aggregates(&report);
        }
        Command::Report { common, dir } => {
            let ctx = Ctx::load(&common)?;
            let dir = dir.unwrap_or_else(|| ctx.out.clone());
            let records = read_runs_csv(&fs::read_to_string(dir.join("runs.csv"))?)?;
            let report = ExperimentReport {
                aggregates: aggregate(&records),
                records,
                ..Default::default()
            };
            let mut w = csv::Writer::from_path(dir.join("aggregates.csv"))?;
            for a in &report.aggregates {
                w.serialize(a)?;
            }
            w.flush()?;
            print_aggregates(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
