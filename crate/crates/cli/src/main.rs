use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use npuflow_cli::{cmd_compile, cmd_run, CompileOptions, InputSource, RunOptions};

#[derive(Parser)]
#[command(name = "npuflow", version, about = "Offload linalg reductions, transposes and matmuls to a simulated NPU")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a module into host and device artifacts.
    Compile {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Plan as if no NPU were present.
        #[arg(long)]
        no_npu: bool,
        /// Narrow float32 operands to bfloat16 on the host.
        #[arg(long)]
        allow_conversion: bool,
        /// Kernel template directory (overrides NPUFLOW_LIBDIR).
        #[arg(long)]
        libdir: Option<PathBuf>,
    },
    /// Execute compiled artifacts.
    Run {
        dir: PathBuf,
        /// Input tensor file, one per module argument in order.
        #[arg(long = "input", conflicts_with = "random")]
        inputs: Vec<PathBuf>,
        /// Generate inputs from this seed.
        #[arg(long)]
        random: Option<u64>,
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        /// Compare every result against the oracle.
        #[arg(long)]
        check: bool,
        /// TOML file overriding cost parameters.
        #[arg(long)]
        cost_config: Option<PathBuf>,
        /// Print the scheduler trace.
        #[arg(long)]
        trace: bool,
        /// Also write the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Compile { input, output, no_npu, allow_conversion, libdir } => {
            match cmd_compile(&input, &output, &CompileOptions { no_npu, allow_conversion, libdir }) {
                Ok(plan) => {
                    print!("{}", npuflow_cli::commands::placement_summary(&plan.ops));
                    0
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    1
                }
            }
        }
        Cmd::Run { dir, inputs, random, repeat, check, cost_config, trace, csv } => {
            let source = match random {
                Some(seed) => InputSource::Random(seed),
                None if inputs.is_empty() => InputSource::Random(0),
                None => InputSource::Files(inputs),
            };
            let opts = RunOptions { inputs: source, repeat, check, cost_config, trace };
            match cmd_run(&dir, &opts) {
                Ok(out) => {
                    for line in &out.trace {
                        println!("{line}");
                    }
                    print!("{}", out.report.to_text());
                    for o in &out.report.ops {
                        if let Some(v) = out.values.get(&o.result) {
                            println!("%{} = {v}", o.result);
                        }
                    }
                    let mut code = out.exit_code();
                    if let Some(path) = csv {
                        let written = std::fs::File::create(&path).map_err(anyhow::Error::from).and_then(|f| out.report.write_csv(f));
                        if let Err(e) = written {
                            eprintln!("error: writing {}: {e:#}", path.display());
                            code = code.max(1);
                        }
                    }
                    code
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
