use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use protolab::episodic::{ClassifierKind, EvalReport};
use protolab::experiment::{self, Ablation, ExperimentConfig, SemevoOptions, SyntheticSpec};
use protolab::semantic_evolution::{NameTemplate, SemanticSource};

/// Few-shot evaluation with semantically reconstructed prototypes.
#[derive(Parser)]
#[command(name = "protolab", version)]
struct Cli {
    /// Experiment config (TOML). Relative paths inside it resolve against its directory.
    #[arg(long, global = true, default_value = "experiment.toml")]
    config: PathBuf,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Seed for training, episode sampling and (under `synth`) data generation.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of evaluation episodes.
    #[arg(long, global = true)]
    tasks: Option<usize>,

    /// Fusion factor in [0, 1].
    #[arg(long, global = true, value_parser = parse_k)]
    k: Option<f64>,

    #[arg(long, global = true, value_enum)]
    classifier: Option<ClassifierArg>,

    /// Semantic source fed to the network.
    #[arg(long, global = true, value_enum)]
    source: Option<SourceArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassifierArg {
    #[value(alias = "co")]
    Cosine,
    #[value(alias = "eu")]
    Euclidean,
    #[value(alias = "lr")]
    Logistic,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    NameTemplate,
    Definition,
    Paraphrase,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationArg {
    Sources,
    Targets,
    Classifiers,
    Semantics,
}

#[derive(Subcommand)]
enum Command {
    /// Expand class definitions into paraphrases through the LLM cache.
    Semevo {
        #[arg(long)]
        definitions: PathBuf,
        /// Corpus JSON to write.
        #[arg(long)]
        out: PathBuf,
        /// Class table supplying names for bare definitions.
        #[arg(long)]
        classes: Option<PathBuf>,
        /// Serve cached paraphrases only; a miss is an error.
        #[arg(long)]
        offline: bool,
        #[arg(long, default_value = "paraphrase_cache")]
        cache_dir: PathBuf,
        /// Name template with a `{class_name}` placeholder.
        #[arg(long)]
        template: Option<String>,
    },
    /// Train the alignment network and write the checkpoint.
    Train,
    /// Evaluate at the configured fusion factor.
    Eval,
    /// Evaluate every fusion factor on the sweep grid.
    Sweep,
    /// Run one of the comparison tables.
    Ablate {
        #[arg(value_enum)]
        which: Option<AblationArg>,
    },
    /// Write a synthetic dataset and its experiment.toml.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        center_scale: Option<f64>,
        #[arg(long)]
        periphery_bias: Option<f64>,
    },
    /// Check how often reconstructions land closer to the center than supports.
    #[command(alias = "proximity")]
    Fig5,
}

fn parse_k(s: &str) -> Result<f64, String> {
    let k: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&k) {
        Ok(k)
    } else {
        Err(format!("{k} is outside [0, 1]"))
    }
}

impl Overrides {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            config.train.seed = seed;
            config.episodes.spec.seed = seed;
        }
        if let Some(tasks) = self.tasks {
            config.episodes.spec.task_count = tasks;
        }
        if let Some(k) = self.k {
            config.eval.k = k;
        }
        if let Some(c) = self.classifier {
            config.eval.classifier = match c {
                ClassifierArg::Cosine => ClassifierKind::Cosine,
                ClassifierArg::Euclidean => ClassifierKind::Euclidean,
                ClassifierArg::Logistic => ClassifierKind::LogisticRegression,
            };
        }
        if let Some(s) = self.source {
            config.train.semantic_source = match s {
                SourceArg::NameTemplate => SemanticSource::NameTemplate,
                SourceArg::Definition => SemanticSource::Definition,
                SourceArg::Paraphrase => SemanticSource::Paraphrase,
            };
        }
    }
}

fn load_config(path: &Path, overrides: &Overrides) -> protolab::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn print_report(report: &EvalReport) {
    let c = &report.config;
    println!(
        "{} {} k={}: {:.2} +- {:.2} ({} tasks)",
        c.episodes.setting(),
        c.classifier,
        c.fusion_k,
        100.0 * report.mean_accuracy,
        100.0 * report.ci95,
        report.per_task_accuracy.len()
    );
}

fn run(cli: Cli) -> protolab::Result<()> {
    let overrides = &cli.overrides;
    match cli.command {
        Command::Semevo {
            definitions,
            out,
            classes,
            offline,
            cache_dir,
            template,
        } => {
            let llm = if cli.config.exists() {
                ExperimentConfig::load(&cli.config)?.llm
            } else {
                Default::default()
            };
            let options = SemevoOptions {
                definitions,
                classes,
                out: out.clone(),
                cache_dir,
                template: template.map_or_else(NameTemplate::default, NameTemplate),
                offline,
            };
            let corpus = experiment::run_semevo(&llm, &options)?;
            println!("{} classes -> {}", corpus.classes.len(), out.display());
        }
        Command::Synth {
            out,
            noise_sigma,
            center_scale,
            periphery_bias,
        } => {
            let mut spec = SyntheticSpec::default();
            if let Some(seed) = overrides.seed {
                spec.seed = seed;
            }
            if let Some(v) = noise_sigma {
                spec.noise_sigma = v;
            }
            if let Some(v) = center_scale {
                spec.center_scale = v;
            }
            if let Some(v) = periphery_bias {
                spec.periphery_bias = v;
            }
            let mut config = experiment::run_synth(&spec, &out)?;
            overrides.apply(&mut config);
            config.save(out.join("experiment.toml"))?;
            println!("wrote {}", out.join("experiment.toml").display());
        }
        Command::Train => {
            let config = load_config(&cli.config, overrides)?;
            let outcome = experiment::run_train(&config)?;
            let (first, last) = (outcome.loss_curve[0], outcome.loss_curve[outcome.loss_curve.len() - 1]);
            println!(
                "trained {} epochs, loss {first:.4} -> {last:.4}; checkpoint {}",
                outcome.loss_curve.len(),
                config.resolve(&config.paths.checkpoint).display()
            );
        }
        Command::Eval => {
            let config = load_config(&cli.config, overrides)?;
            print_report(&experiment::run_eval(&config)?);
        }
        Command::Sweep => {
            let config = load_config(&cli.config, overrides)?;
            let curve = experiment::run_sweep(&config)?;
            print_report(curve.baseline());
            print_report(curve.best());
        }
        Command::Ablate { which } => {
            let config = load_config(&cli.config, overrides)?;
            let ablation = match which {
                Some(AblationArg::Sources) => Ablation::Sources,
                Some(AblationArg::Targets) => Ablation::Targets,
                Some(AblationArg::Classifiers) => Ablation::Classifiers,
                Some(AblationArg::Semantics) => Ablation::Semantics,
                None => config.ablation.ok_or_else(|| {
                    protolab::Error::Argument("name an ablation or set `ablation` in the config".into())
                })?,
            };
            if ablation == Ablation::Semantics {
                for row in experiment::run_semantic_grid(&config)? {
                    println!(
                        "{:<14} {:<16} {:.2} +- {:.2}",
                        row.semantic_source,
                        row.encoder,
                        100.0 * row.mean_accuracy,
                        100.0 * row.ci95
                    );
                }
            } else {
                let rows = match ablation {
                    Ablation::Sources => experiment::run_ablation_sources(&config)?,
                    Ablation::Targets => experiment::run_ablation_targets(&config)?,
                    _ => experiment::run_ablation_classifiers(&config)?,
                };
                for row in rows {
                    println!(
                        "{:<8} {} {}: {:.2} +- {:.2}",
                        row.arm,
                        row.setting,
                        row.classifier,
                        100.0 * row.mean_accuracy,
                        100.0 * row.ci95
                    );
                }
            }
        }
        Command::Fig5 => {
            let config = load_config(&cli.config, overrides)?;
            let report = experiment::run_proximity_check(&config)?;
            println!(
                "reconstruction closer to the {} center in {}/{} pairs ({:.3})",
                report.center_source, report.closer, report.pairs, report.fraction
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
