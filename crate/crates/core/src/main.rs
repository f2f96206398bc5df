use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tiersim::arch::validate_spec;
use tiersim::cli::{
    execute_run, execute_sweep, gen_messages_text, gen_trace_text, hops_line, load_run_config,
    sweep_threads, CliError,
};
use tiersim::workload::{MessageTraffic, SyntheticTrace};

#[derive(Parser)]
#[command(
    name = "tiersim",
    version,
    about = "Discrete-event simulator for 3D MPSoC memory hierarchies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and write its report.
    Run {
        /// Config JSON file, or a preset name such as fig33.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Report path; printed to stdout when neither this nor the config sets one.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a config value, e.g. `--set l2.tech=MRAM`.
        #[arg(long = "set", value_name = "PATH=VALUE")]
        set: Vec<String>,
        /// Write per-sample latencies as CSV.
        #[arg(long)]
        dump_latencies: Option<PathBuf>,
    },
    /// Run one simulation per value of a config parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted config path, e.g. l2.tech.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "set", value_name = "PATH=VALUE")]
        set: Vec<String>,
    },
    /// Check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "PATH=VALUE")]
        set: Vec<String>,
    },
    /// Generate a synthetic access trace or message list as CSV.
    GenTrace {
        #[arg(long, value_enum, default_value_t = Kind::Trace)]
        kind: Kind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        cores: u32,
        /// Accesses per core.
        #[arg(long, default_value_t = 10_000)]
        length: u64,
        #[arg(long, default_value_t = 0.9)]
        hot_fraction: f64,
        #[arg(long, default_value_t = 16384)]
        hot_set_bytes: u64,
        #[arg(long, default_value_t = 2.0 / 3.0)]
        read_fraction: f64,
        #[arg(long, default_value_t = 8)]
        access_size: u32,
        #[arg(long)]
        shared_hot_set: bool,
        #[arg(long, default_value_t = 4)]
        clusters: u32,
        #[arg(long, default_value_t = 100_000)]
        cycles: u64,
        #[arg(long, default_value_t = 0.002)]
        rate: f64,
        #[arg(long, default_value_t = 64)]
        payload: u64,
    },
    /// Print the exact mean hop count of a mesh.
    Hops {
        /// Mesh dimensions as XxYxZ.
        #[arg(long)]
        dims: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Trace,
    Messages,
}

fn write_out(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            set,
            dump_latencies,
        } => {
            let (mut cfg, base) = load_run_config(&config, &set)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out = Some(o.to_string_lossy().into_owned());
            }
            for w in cfg.system.warnings() {
                eprintln!("warning: {w}");
            }
            let outcome = execute_run(&cfg, &base, dump_latencies.as_deref())?;
            match outcome.report_path {
                Some(p) => eprintln!("report written to {}", p.display()),
                None => print!("{}", outcome.report_json),
            }
            Ok(())
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
            seed,
            set,
        } => {
            let (mut cfg, base) = load_run_config(&config, &set)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let paths = execute_sweep(&cfg, &base, &param, &values, &out, sweep_threads())?;
            eprintln!(
                "{} reports and summary.csv written to {}",
                paths.len(),
                out.display()
            );
            Ok(())
        }
        Command::Validate { config, set } => {
            let (cfg, _) = load_run_config(&config, &set)?;
            for w in cfg.system.warnings() {
                eprintln!("warning: {w}");
            }
            let violations = validate_spec(&cfg.system);
            if violations.is_empty() {
                println!("valid");
                Ok(())
            } else {
                Err(CliError::Invalid(violations))
            }
        }
        Command::GenTrace {
            kind,
            seed,
            out,
            cores,
            length,
            hot_fraction,
            hot_set_bytes,
            read_fraction,
            access_size,
            shared_hot_set,
            clusters,
            cycles,
            rate,
            payload,
        } => {
            let text = match kind {
                Kind::Trace => gen_trace_text(
                    &SyntheticTrace {
                        cores,
                        length,
                        hot_fraction,
                        hot_set_bytes,
                        read_fraction,
                        access_size,
                        shared_hot_set,
                    },
                    seed,
                )?,
                Kind::Messages => gen_messages_text(
                    &MessageTraffic {
                        clusters,
                        cycles,
                        rate,
                        payload,
                    },
                    seed,
                )?,
            };
            write_out(out.as_ref(), &text)
        }
        Command::Hops { dims } => {
            println!("{}", hops_line(&dims)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
