//! Command-line interface: model analysis with the exact, firefront and
//! avatar engines, random model generation, and cross-method comparison.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use attrq::avatar::{avatar_run, emit_run_trace, AvatarConfig, InflationaryMode};
use attrq::firefront::{default_max_iterations, emit_trace, firefront_run, FirefrontConfig};
use attrq::markov::exact_run;
use attrq::parse::{parse_model, print_document, ModelDocument};
use attrq::report::OutputFormat;
use attrq::stg::{build_stg, quotient_dot, tarjan_scc};
use attrq::{genrand, serialize_result, AbsorptionResult};

#[derive(Parser)]
#[command(name = "attrq", version, about = "Attractor reachability quantification for asynchronous logical models")]
struct Cli {
    /// Worker threads for avatar simulations (0 = all cores).
    #[arg(long, global = true, env = "ATTRQ_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Exact,
    Firefront,
    Avatar,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InflArg {
    Auto,
    On,
    Off,
}

impl From<InflArg> for InflationaryMode {
    fn from(v: InflArg) -> Self {
        match v {
            InflArg::Auto => InflationaryMode::Auto,
            InflArg::On => InflationaryMode::On,
            InflArg::Off => InflationaryMode::Off,
        }
    }
}

#[derive(Args)]
struct FirefrontFlags {
    /// Neglect threshold on per-state mass.
    #[arg(long, default_value_t = 1e-5)]
    alpha: f64,
    /// Termination threshold on the firefront mass.
    #[arg(long, default_value_t = 1e-3)]
    beta: f64,
    /// Iteration cap (default: |S|^2, clamped to 2^31).
    #[arg(long)]
    max_iters: Option<u64>,
}

#[derive(Args)]
struct AvatarFlags {
    #[arg(long, default_value_t = 10_000)]
    runs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial cycle-extension depth.
    #[arg(long, default_value_t = 3)]
    tau: u32,
    /// Smallest cycle worth rewiring.
    #[arg(long, default_value_t = 4)]
    min_rewire: usize,
    #[arg(long, value_enum, default_value_t = InflArg::Auto)]
    inflationary: InflArg,
    /// Cache admission: minimum transient size to keep.
    #[arg(long, default_value_t = 32)]
    keep_transients: usize,
    #[arg(long, default_value_t = 10_000_000)]
    max_steps: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a model file with one engine and print the result.
    Analyze {
        /// Analysis engine.
        #[arg(long, value_enum)]
        method: MethodArg,
        model: PathBuf,
        /// Emit JSON (the default).
        #[arg(long)]
        json: bool,
        /// Emit CSV instead of JSON.
        #[arg(long, conflicts_with = "json")]
        csv: bool,
        /// Explicit state cap for exact analysis.
        #[arg(long, default_value_t = 1 << 22)]
        cap: u64,
        /// Write a per-iteration (firefront) or per-run (avatar) CSV trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the quotient DAG as DOT (exact only).
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Solve absorption in exact rational arithmetic (exact only).
        #[arg(long)]
        rational: bool,
        #[command(flatten)]
        firefront: FirefrontFlags,
        #[command(flatten)]
        avatar: AvatarFlags,
    },
    /// Generate a random Boolean model.
    Generate {
        /// Number of components.
        #[arg(long)]
        n: usize,
        /// Regulators per component.
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Retry until the model has at least two attractors.
        #[arg(long)]
        require_multistable: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every applicable engine and print one summary row per method.
    Compare {
        model: PathBuf,
        #[arg(long, default_value_t = 1 << 22)]
        cap: u64,
        #[command(flatten)]
        firefront: FirefrontFlags,
        #[command(flatten)]
        avatar: AvatarFlags,
    },
}

enum CliError {
    Usage(String),
    Core(attrq::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(attrq::Error::CapacityExceeded { .. }) => 3,
            CliError::Core(_) => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

impl From<attrq::Error> for CliError {
    fn from(e: attrq::Error) -> Self {
        CliError::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let benign = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            return if benign {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };

    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}

fn load_document(path: &Path) -> Result<(ModelDocument, String), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let doc = parse_model(&text)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok((doc, name))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Analyze {
            method,
            model,
            json: _,
            csv,
            cap,
            trace,
            dot,
            rational,
            firefront,
            avatar,
        } => {
            let (doc, name) = load_document(&model)?;
            let format = if csv {
                OutputFormat::Csv
            } else {
                OutputFormat::Json
            };
            let result = match method {
                MethodArg::Exact => {
                    if trace.is_some() {
                        return Err(CliError::Usage(
                            "--trace applies to firefront and avatar only".into(),
                        ));
                    }
                    if let Some(dot_path) = &dot {
                        let stg = if doc.initial.is_sampling() {
                            build_stg(&doc.model, None, cap as u128)?
                        } else {
                            build_stg(
                                &doc.model,
                                Some(&doc.initial.base_state(&doc.model)),
                                cap as u128,
                            )?
                        };
                        let dec = tarjan_scc(&stg);
                        write_file(dot_path, &quotient_dot(&stg, &dec))?;
                    }
                    exact_run(&doc, &name, cap as u128, rational)?
                }
                MethodArg::Firefront => {
                    let cfg = FirefrontConfig {
                        alpha: firefront.alpha,
                        beta: firefront.beta,
                        max_iterations: firefront
                            .max_iters
                            .unwrap_or_else(|| default_max_iterations(&doc.model)),
                        oracles: doc.oracles.clone(),
                        trace: trace.is_some(),
                    };
                    let run = firefront_run(&doc.model, &doc, &cfg)?;
                    if let (Some(path), Some(rows)) = (&trace, &run.trace) {
                        write_file(path, &emit_trace(rows))?;
                    }
                    let mut result = run.result;
                    result.model = name;
                    result
                }
                MethodArg::Avatar => {
                    let cfg = avatar_config(&avatar, trace.is_some());
                    let run = avatar_run(&doc.model, &doc, &cfg)?;
                    if let (Some(path), Some(rows)) = (&trace, &run.trace) {
                        write_file(path, &emit_run_trace(rows))?;
                    }
                    let mut result = run.result;
                    result.model = name;
                    result
                }
            };
            print!("{}", serialize_result(&result, format));
            Ok(())
        }
        Command::Generate {
            n,
            k,
            seed,
            require_multistable,
            out,
        } => {
            let (model, _attempt) =
                genrand::generate(n, k, seed, require_multistable, 1 << 22)?;
            let doc = ModelDocument {
                model,
                initial: Default::default(),
                oracles: vec![],
            };
            write_file(&out, &print_document(&doc))?;
            Ok(())
        }
        Command::Compare {
            model,
            cap,
            firefront,
            avatar,
        } => {
            let (doc, name) = load_document(&model)?;
            println!(
                "{:<10} {:>9}  {:<48} {:>9}  {}",
                "method", "time_s", "attractors (p)", "residual", "notes"
            );

            let sampling = doc.initial.is_sampling();
            let skip = |method: &str, reason: &str| {
                println!("{:<10} {:>9}  {:<48} {:>9}  {}", method, "-", reason, "-", "");
            };

            // exact and firefront mirror each other's applicability
            if sampling {
                skip("exact", "N/A - due to sampling");
                skip("firefront", "N/A - due to sampling");
            } else {
                match exact_run(&doc, &name, cap as u128, false) {
                    Ok(result) => print_row("exact", &result, String::new()),
                    Err(attrq::Error::CapacityExceeded { .. }) => {
                        skip("exact", "N/A - state cap exceeded");
                    }
                    Err(e) => return Err(e.into()),
                }
                let cfg = FirefrontConfig {
                    alpha: firefront.alpha,
                    beta: firefront.beta,
                    max_iterations: firefront
                        .max_iters
                        .unwrap_or_else(|| default_max_iterations(&doc.model)),
                    oracles: doc.oracles.clone(),
                    trace: false,
                };
                let run = firefront_run(&doc.model, &doc, &cfg)?;
                let notes = format!("{} iterations", run.result.iterations.unwrap_or(0));
                print_row("firefront", &run.result, notes);
            }

            let cfg = avatar_config(&avatar, false);
            let run = avatar_run(&doc.model, &doc, &cfg)?;
            let notes = format!("{} runs", cfg.runs);
            print_row("avatar", &run.result, notes);
            Ok(())
        }
    }
}

fn avatar_config(flags: &AvatarFlags, trace: bool) -> AvatarConfig {
    AvatarConfig {
        runs: flags.runs,
        tau0: flags.tau,
        min_cycle_to_rewire: flags.min_rewire,
        keep_transients_min_size: flags.keep_transients,
        max_steps_per_run: flags.max_steps,
        seed: flags.seed,
        inflationary: flags.inflationary.into(),
        trace,
        ..AvatarConfig::default()
    }
}

fn print_row(method: &str, result: &AbsorptionResult, notes: String) {
    let ids = result.attractor_ids();
    let mut cells: Vec<String> = Vec::new();
    for (outcome, id) in result.attractors.iter().zip(&ids) {
        let mut cell = format!("{id}({:.4}", outcome.probability);
        if let Some(d) = outcome.avg_depth {
            cell.push_str(&format!(", d={d:.2}"));
        }
        cell.push(')');
        cells.push(cell);
    }
    let attractors = if cells.is_empty() {
        "-".to_string()
    } else {
        cells.join(" ")
    };
    println!(
        "{:<10} {:>9.3}  {:<48} {:>9.4}  {}",
        method, result.wall_time_s, attractors, result.residual, notes
    );
}
