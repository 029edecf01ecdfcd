use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use peer::error::{Error, Result, StageExt};
use peer::experiment::{self, ExperimentConfig};
use peer::{io, plot};
use peer_core::calibration::{calibration, CalibrationConfig, CalibrationMethod};
use peer_core::concordance::concordance_ci;
use peer_core::cox::{self, CoxFitConfig};
use peer_core::dataset::{NormStats, SurvivalDataset};
use peer_core::evaluation::{cv_grid_search, PUBLISHED_LAMBDA_GRID};
use peer_core::impute::{impute_with_model, ImputeConfig};
use peer_core::km::kaplan_meier;
use peer_core::nomogram::{build_nomogram, default_ranges, Term};
use peer_core::rng;
use peer_core::schema::FeatureSchema;
use peer_core::scores::{curb65, psi_port, smart_cop, ClinicalInputs, ConfusionSource, PublishedPeerModel};
use peer_core::synth::{self, SynthConfig};

/// PEER-score survival toolkit.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CohortArgs {
    /// Cohort CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Schema JSON; the pneumonia layout by default.
    #[arg(long)]
    schema: Option<PathBuf>,
}

impl CohortArgs {
    fn load(&self) -> Result<SurvivalDataset> {
        let schema = match &self.schema {
            Some(p) => io::load_schema(p)?,
            None => FeatureSchema::pneumonia(),
        };
        io::load_csv(&self.input, &schema)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fill missing values with iterative random-forest imputation.
    Impute {
        #[command(flatten)]
        cohort: CohortArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        max_iter: usize,
        /// Convergence trace CSV; defaults to `<out>.trace.csv`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Fit the Lasso-Cox model on a complete cohort.
    Fit {
        #[command(flatten)]
        cohort: CohortArgs,
        #[arg(long)]
        out: PathBuf,
        /// Fixed penalty; cross-validated over the default grid when absent.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
    },
    /// Score every patient with a fitted model or a clinical score.
    Score {
        #[command(flatten)]
        cohort: CohortArgs,
        /// Fitted model JSON.
        #[arg(long, conflicts_with = "score")]
        model: Option<PathBuf>,
        /// peer, curb65, psi_port, smart_cop, or a rule file.
        #[arg(long)]
        score: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Define confusion as GCS below 15 instead of disorientation.
        #[arg(long)]
        confusion_from_gcs: bool,
    },
    /// Concordance, calibration and risk strata of a fitted model.
    Evaluate {
        #[command(flatten)]
        cohort: CohortArgs,
        #[arg(long)]
        model: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        horizon: f64,
        #[arg(long, default_value_t = 5)]
        groups: usize,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// High-risk cutoff on the linear predictor; the cohort's 90th percentile by default.
        #[arg(long)]
        cutoff: Option<f64>,
        /// Refit the baseline on this cohort instead of reusing the model's.
        #[arg(long)]
        refit: bool,
    },
    /// Render a nomogram for a fitted model or the published PEER model.
    Nomogram {
        #[arg(long, required_unless_present = "published")]
        model: Option<PathBuf>,
        #[arg(long)]
        published: bool,
        /// Cohort used for axis ranges (1st to 99th percentile).
        #[command(flatten)]
        cohort: CohortArgs,
        #[arg(long, value_enum, default_value_t = Format::Svg)]
        format: Format,
        /// Survival axis horizon in days; needs a fitted model.
        #[arg(long)]
        day: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic cohort with known effects, plus its ground truth and
    /// schema next to it.
    Synth {
        #[arg(long, value_enum, default_value_t = Profile::Pneumonia)]
        profile: Profile,
        #[arg(long, default_value_t = 3000)]
        n: usize,
        /// Features for the numbered profile; the first five carry signal.
        #[arg(long, default_value_t = 20)]
        d: usize,
        /// Multiplier on the latent effects.
        #[arg(long, default_value_t = 1.0)]
        effect_scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth JSON; defaults to `<out>.truth.json`.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Also write the cohort before masking.
        #[arg(long)]
        complete: Option<PathBuf>,
    },
    /// Run the full protocol from a JSON configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Imputation-seed stability of the selected features.
    Stability {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Svg,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Pneumonia,
    Numbered,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Impute {
            cohort,
            out,
            trees,
            seed,
            max_iter,
            trace,
        } => {
            let ds = cohort.load()?;
            let cfg = ImputeConfig {
                n_trees: trees,
                seed,
                max_iterations: max_iter,
                ..ImputeConfig::default()
            };
            let (imp, _) = impute_with_model(&ds, &cfg).stage("impute")?;
            io::write_csv(&out, &imp.data)?;
            let mut csv = String::from("iteration,delta_continuous,delta_categorical\n");
            let cell = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
            for d in &imp.convergence_trace {
                csv.push_str(&format!("{},{},{}\n", d.iteration, cell(d.continuous), cell(d.categorical)));
            }
            io::write_bytes(&trace.unwrap_or_else(|| sidecar(&out, ".trace.csv")), csv.as_bytes())?;
            log::info!(
                "{} sweeps run, sweep {} kept",
                imp.iterations_run,
                imp.selected_iteration
            );
        }
        Command::Fit {
            cohort,
            out,
            lambda,
            folds,
            seed,
            epsilon,
        } => {
            let ds = cohort.load()?.normalize().stage("normalize")?;
            let lambda = match lambda {
                Some(l) => l,
                None => {
                    let data = ds.survival_data(0).stage("select")?;
                    let cv = cv_grid_search(
                        &data,
                        &PUBLISHED_LAMBDA_GRID,
                        folds,
                        rng::named(seed, "folds"),
                        epsilon,
                        &CoxFitConfig::default(),
                    )
                    .stage("select")?;
                    log::info!("lambda {} chosen, mean c-index {:.4}", cv.chosen_lambda, cv.best_mean_cindex);
                    cv.chosen_lambda
                }
            };
            let model = cox::fit(&ds, &CoxFitConfig::with_lambda(lambda)).stage("fit")?;
            io::save_model(&out, &model)?;
            for (name, hr) in model.hazard_ratios() {
                println!("{name}\t{hr:.4}");
            }
        }
        Command::Score {
            cohort,
            model,
            score,
            out,
            confusion_from_gcs,
        } => {
            let ds = cohort.load()?;
            let confusion = if confusion_from_gcs {
                ConfusionSource::GcsBelow15
            } else {
                ConfusionSource::Orientation
            };
            let values = match (model, score.as_deref()) {
                (Some(m), _) => io::load_model(&m)?.dataset_linear_predictors(&ds).stage("score")?,
                (None, Some(name)) => clinical_scores(&ds, name, confusion).stage("score")?,
                (None, None) => {
                    return Err(Error::Core(peer_core::Error::Config("pass --model or --score".into())))
                }
            };
            let mut csv = String::from("id,score\n");
            for (r, v) in ds.records.iter().zip(&values) {
                csv.push_str(&format!("{},{v}\n", r.id));
            }
            io::write_bytes(&out, csv.as_bytes())?;
        }
        Command::Evaluate {
            cohort,
            model,
            out,
            horizon,
            groups,
            replicates,
            seed,
            cutoff,
            refit,
        } => {
            let ds = cohort.load()?;
            let model = io::load_model(&model)?;
            let lp = model.dataset_linear_predictors(&ds).stage("evaluate")?;
            let time: Vec<f64> = ds.records.iter().map(|r| r.outcomes[0].time).collect();
            let event: Vec<bool> = ds.records.iter().map(|r| r.outcomes[0].event).collect();
            let c = concordance_ci(&lp, &time, &event, replicates, rng::named(seed, "concordance")).stage("evaluate")?;
            let ccfg = CalibrationConfig {
                groups,
                horizon,
                replicates,
                seed: rng::named(seed, "calibration"),
                method: if refit {
                    CalibrationMethod::Refit
                } else {
                    CalibrationMethod::NoRefit
                },
            };
            let stats = NormStats {
                features: model.norm_stats.iter().map(|s| Some(*s)).collect(),
            };
            let z = ds.apply_normalization(&stats).stage("evaluate")?;
            let cal = calibration(&model, &z, &ccfg).stage("calibrate")?;
            let cut = cutoff.unwrap_or_else(|| peer_core::math::quantile(&lp, 0.9));
            let (mut hi, mut lo) = ((vec![], vec![]), (vec![], vec![]));
            for i in 0..lp.len() {
                let g = if lp[i] >= cut { &mut hi } else { &mut lo };
                g.0.push(time[i]);
                g.1.push(event[i]);
            }
            let mut curves = Vec::new();
            for (label, (t, e)) in [("High risk", &hi), ("Low risk", &lo)] {
                if !t.is_empty() {
                    curves.push((format!("{label} (n={})", t.len()), kaplan_meier(t, e)?));
                }
            }
            let labelled: Vec<_> = curves.iter().map(|(l, k)| (l.as_str(), k)).collect();
            let summary = serde_json::json!({
                "concordance": c,
                "calibration": cal,
                "cutoff": cut,
                "n_high": hi.0.len(),
                "n_low": lo.0.len(),
                "seven_day_survival": curves.iter().map(|(l, k)| (l.clone(), k.survival_at(7.0))).collect::<Vec<_>>(),
            });
            io::write_bytes(&out.join("evaluation.json"), io::to_json(&summary).as_bytes())?;
            io::write_bytes(&out.join("calibration.svg"), plot::calibration_svg("Calibration", &cal).as_bytes())?;
            io::write_bytes(&out.join("km.svg"), plot::km_svg("Risk strata", &labelled).as_bytes())?;
            println!("c-index {:.4} ({:.4} to {:.4})", c.cindex, c.ci_low, c.ci_high);
        }
        Command::Nomogram {
            model,
            published,
            cohort,
            format,
            day,
            out,
        } => {
            let ds = cohort.load()?;
            let fitted = model.map(|m| io::load_model(&m)).transpose()?;
            let terms = match (&fitted, published) {
                (_, true) => Term::from_published(&PublishedPeerModel::published()),
                (Some(m), false) => Term::from_model(m),
                (None, false) => unreachable!("clap requires --model or --published"),
            };
            let ranges = default_ranges(&ds, &terms).stage("nomogram")?;
            let mut spec = build_nomogram(&terms, &ranges).stage("nomogram")?;
            if let Some(day) = day {
                match (&fitted, published) {
                    (Some(m), false) => spec = spec.with_survival(day, m.baseline_cumhaz.at(day)),
                    _ => {
                        return Err(Error::Core(peer_core::Error::Config(
                            "--day needs a fitted model with a baseline hazard".into(),
                        )))
                    }
                }
            }
            let text = spec
                .render(match format {
                    Format::Svg => "svg",
                    Format::Text => "text",
                })
                .stage("nomogram")?;
            io::write_bytes(&out, text.as_bytes())?;
        }
        Command::Synth {
            profile,
            n,
            d,
            effect_scale,
            seed,
            out,
            truth,
            complete,
        } => {
            let cfg = match profile {
                Profile::Pneumonia => SynthConfig::pneumonia(n, effect_scale, seed),
                Profile::Numbered => {
                    let beta = (0..d)
                        .map(|j| if j < 5 { effect_scale * if j % 2 == 0 { 0.5 } else { -0.5 } } else { 0.0 })
                        .collect();
                    SynthConfig::numbered(n, beta, seed)
                }
            };
            let cohort = synth::generate(&cfg).stage("synth")?;
            io::write_csv(&out, &cohort.dataset)?;
            if let Some(p) = complete {
                io::write_csv(&p, &cohort.complete)?;
            }
            io::write_json(&truth.unwrap_or_else(|| sidecar(&out, ".truth.json")), &cohort.truth)?;
            io::write_json(&sidecar(&out, ".schema.json"), &cfg.schema)?;
        }
        Command::Run { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let outcome = experiment::run_experiment(&cfg)?;
            print_summary(&outcome.report);
            println!("{} files written to {}", outcome.written.len(), cfg.output_dir.display());
        }
        Command::Stability { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            if cfg.stability_seeds.is_empty() {
                return Err(Error::Core(peer_core::Error::Config("stability_seeds is empty".into())));
            }
            let schema = match &cfg.schema {
                Some(p) => io::load_schema(p)?,
                None => FeatureSchema::pneumonia(),
            };
            let ds = io::load_csv(&cfg.cohort, &schema)?;
            let split = ds.split(cfg.split_fraction, rng::named(cfg.seed, "split")).stage("split")?;
            let train = ds.subset(&split.train_index);
            let lambda = cfg.lambda.unwrap_or(0.01);
            let fit = CoxFitConfig {
                lambda,
                max_iter: cfg.max_iter,
                tol: cfg.tol,
                ..CoxFitConfig::default()
            };
            let report =
                experiment::stability_with_lambda(&train, &cfg.impute, &cfg.stability_seeds, &fit).stage("stability")?;
            io::write_json(&out, &report)?;
        }
    }
    Ok(())
}

fn clinical_scores(ds: &SurvivalDataset, name: &str, confusion: ConfusionSource) -> peer_core::Result<Vec<f64>> {
    let rules = match name {
        "peer" | "curb65" | "psi_port" | "smart_cop" => None,
        path => Some(
            io::builtin_rules(path)
                .map(Ok)
                .unwrap_or_else(|| io::load_tabular_score(Path::new(path)))
                .map_err(|e| peer_core::Error::Config(e.to_string()))?,
        ),
    };
    let published = PublishedPeerModel::published();
    ds.records
        .iter()
        .map(|r| {
            let x = ClinicalInputs::from_record(&ds.schema, &r.values, confusion);
            match (name, &rules) {
                (_, Some(t)) => t.evaluate(&x),
                ("peer", _) => published.score(&x).map(|s| s.log_hazard),
                ("curb65", _) => curb65(&x).map(f64::from),
                ("psi_port", _) => psi_port(&x).map(|p| p.points as f64),
                _ => smart_cop(&x).map(|p| p.points as f64),
            }
        })
        .collect()
}

fn print_summary(r: &experiment::EvaluationReport) {
    println!(
        "lambda {} ({}), {} features selected",
        r.model_selection.lambda, r.model_selection.chosen_by, r.support_size
    );
    for c in &r.cells {
        match &c.status {
            experiment::CellStatus::Available { concordance, .. } => println!(
                "{:<16} {:<9} c-index {:.3} ({:.3} to {:.3})",
                c.score, c.split, concordance.cindex, concordance.ci_low, concordance.ci_high
            ),
            experiment::CellStatus::Unavailable { reason } => {
                println!("{:<16} {:<9} unavailable: {reason}", c.score, c.split)
            }
        }
    }
}
