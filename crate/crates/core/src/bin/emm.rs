use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use emm_core::dataset::{descriptive_summary, generate_synthetic, load_csv, ColumnSchema};
use emm_core::pipeline::{
    export_artifacts, load_data, run_pipeline, DataSource, EmmReport, ExportFormat, PipelineConfig,
};
use emm_core::rng::named_seed;
use emm_core::Error;

#[derive(Parser)]
#[command(name = "emm", version, about = "Effect measure modification with tree ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline config file (flat `key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig, Error> {
        let mut c = PipelineConfig::from_file(&self.config)?;
        if let Some(s) = self.seed {
            c.seed = s;
        }
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write the report and artifacts.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run estimators concurrently.
        #[arg(long)]
        parallel_methods: bool,
    },
    /// Write the configured synthetic dataset to CSV, with true effects in `<stem>_truth.csv`.
    Synth {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print counts of each binary variable overall and by outcome.
    Summarize {
        #[arg(long, conflicts_with = "data")]
        config: Option<PathBuf>,
        /// CSV file to summarize instead of a config's data source.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "outcome")]
        outcome: String,
        #[arg(long, default_value = "exposure")]
        exposure: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-export trees or plot data from a saved report.json.
    Export {
        #[arg(long)]
        report: PathBuf,
        /// dot, tree-doc or plotdata; repeat for several.
        #[arg(long = "format", required = true)]
        formats: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidArgument(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_error(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn execute(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Run {
            config,
            out,
            parallel_methods,
        } => {
            let mut c = config.load()?;
            if let Some(o) = out {
                c.output_dir = o;
            }
            c.parallel_methods |= parallel_methods;
            let outcome = run_pipeline(&c)?;
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.report.succeeded() {
                Ok(ExitCode::SUCCESS)
            } else {
                for f in &outcome.report.failures {
                    eprintln!("{} failed: {}", f.method.as_str(), f.error);
                }
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Synth { config, out } => {
            let c = config.load()?;
            let DataSource::Synthetic { spec, seed } = &c.data else {
                return Err(Error::Config("synth needs data.source = synthetic".into()));
            };
            let mut spec = spec.clone();
            spec.seed = seed.unwrap_or_else(|| named_seed(c.seed, "synthetic"));
            let (data, truth) = generate_synthetic(&spec)?;
            data.write_csv(&out, "outcome", "exposure")?;
            let stem = out.file_stem().map_or("synthetic".into(), |s| s.to_string_lossy().into_owned());
            let truth_path = out.with_file_name(format!("{stem}_truth.csv"));
            let mut text = String::from("unit,tau\n");
            for (i, t) in truth.iter().enumerate() {
                text.push_str(&format!("{i},{}\n", emm_core::dataset::format_number(*t)));
            }
            std::fs::write(&truth_path, text).map_err(|e| io_error(&truth_path, e))?;
            println!("wrote {}", out.display());
            println!("wrote {}", truth_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Summarize {
            config,
            data,
            outcome,
            exposure,
            seed,
            out,
        } => {
            let table = match (config, data) {
                (Some(path), _) => {
                    let mut c = PipelineConfig::from_file(path)?;
                    if let Some(s) = seed {
                        c.seed = s;
                    }
                    let name = match &c.data {
                        DataSource::Csv { schema, .. } => schema.exposure.clone(),
                        DataSource::Synthetic { .. } => "exposure".to_string(),
                    };
                    let loaded = load_data(&c)?;
                    descriptive_summary(&loaded.data, &name)
                }
                (None, Some(csv)) => {
                    let d = load_csv(&csv, &ColumnSchema::new(outcome, exposure.clone()))?;
                    descriptive_summary(&d, &exposure)
                }
                (None, None) => {
                    return Err(Error::InvalidArgument("summarize needs --config or --data".into()))
                }
            };
            write_output(out.as_deref(), &table.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Export {
            report,
            formats,
            out,
        } => {
            let formats = formats
                .iter()
                .map(|f| f.parse::<ExportFormat>())
                .collect::<Result<Vec<_>, _>>()?;
            let text = std::fs::read_to_string(&report).map_err(|e| io_error(&report, e))?;
            let r = EmmReport::from_json(&text)?;
            for f in export_artifacts(&r, &formats, &out)? {
                println!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
