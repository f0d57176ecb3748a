use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gact::bench::report::{self, Format};
use gact::bench::{self, Bench, Params};
use gact::explorer::{self, specfile, Verdict};
use gact::frontend::{self, Diagnostic, ValidateOptions};
use gact::model::compile;
use gact::sched::{self, Config, Mode, Outcome, StealBatch};

const EXIT_DIAGNOSTICS: u8 = 1;
const EXIT_FAULT: u8 = 2;
const EXIT_BLOCKED: u8 = 3;
const EXIT_COUNTEREXAMPLE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "gact",
    version,
    about = "Run, explore and benchmark guarded-action programs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Batch {
    #[value(name = "1")]
    One,
    Half,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
    Gnuplot,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Runtime {
    /// Work-stealing M:N scheduler.
    Mn,
    /// One OS thread per originating object.
    ThreadPerObject,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a program until it is quiescent.
    Run {
        file: PathBuf,
        #[arg(long, env = "GACT_WORKERS", default_value_t = default_workers())]
        workers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Single worker, seeded scheduling choices; implies --workers 1.
        #[arg(long)]
        deterministic: bool,
        #[arg(long, value_enum, default_value = "1")]
        steal_batch: Batch,
        /// Retry blocked activations instead of parking them.
        #[arg(long)]
        spin_retry: bool,
        /// Exit with status 3 if any activation is blocked at quiescence.
        #[arg(long)]
        fail_on_block: bool,
        /// Print run statistics as JSON on stderr.
        #[arg(long)]
        stats: bool,
        #[arg(long, value_enum, default_value = "mn")]
        runtime: Runtime,
    },
    /// Exhaustively check invariants or a refinement on a bounded state space.
    Explore {
        file: PathBuf,
        /// Property file.
        #[arg(long)]
        props: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        max_states: usize,
        /// Interleave at single instructions instead of atomic segments.
        #[arg(long)]
        fine: bool,
        #[arg(long)]
        json: bool,
    },
    /// Time a built-in benchmark.
    Bench {
        name: String,
        #[arg(long, default_value_t = 100)]
        num: usize,
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        /// Comma-separated worker counts.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        workers: Vec<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: ReportFormat,
        #[arg(long, value_enum, default_value = "mn")]
        runtime: Runtime,
    },
    /// Parse and validate programs without running them.
    ParseCheck {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
        /// Report programs without a Start class.
        #[arg(long)]
        require_start: bool,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn read(path: &Path) -> Result<String, ExitCode> {
    fs::read_to_string(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::from(EXIT_DIAGNOSTICS)
    })
}

fn report_diagnostics(path: &Path, ds: &[Diagnostic]) {
    let name = path.display().to_string();
    for d in ds {
        eprintln!("{}", d.render(&name));
    }
}

fn load(path: &Path, require_start: bool) -> Result<gact::frontend::ast::Program, ExitCode> {
    let src = read(path)?;
    frontend::load(&src, ValidateOptions { require_start }).map_err(|ds| {
        report_diagnostics(path, &ds);
        ExitCode::from(EXIT_DIAGNOSTICS)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run {
            file,
            workers,
            seed,
            deterministic,
            steal_batch,
            spin_retry,
            fail_on_block,
            stats,
            runtime,
        } => {
            let ast = match load(&file, true) {
                Ok(a) => a,
                Err(code) => return code,
            };
            let program = compile(&ast);
            let mode = match (deterministic, runtime) {
                (true, _) => Mode::Deterministic,
                (false, Runtime::Mn) => Mode::Parallel,
                (false, Runtime::ThreadPerObject) => Mode::ThreadPerObject,
            };
            let cfg = Config {
                workers: if deterministic { 1 } else { workers.max(1) },
                seed,
                mode,
                steal_batch: match steal_batch {
                    Batch::One => StealBatch::One,
                    Batch::Half => StealBatch::Half,
                },
                spin_retry,
                echo: true,
                ..Config::default()
            };
            let r = sched::run(&program, program.start().expect("validated"), &cfg);
            let _ = std::io::stdout().flush();
            if stats {
                eprintln!(
                    "{}",
                    serde_json::to_string(&r.stats).expect("stats serialize")
                );
            }
            match r.outcome {
                Outcome::Fault(f) => {
                    eprintln!("{f}");
                    ExitCode::from(EXIT_FAULT)
                }
                Outcome::Aborted => ExitCode::from(EXIT_FAULT),
                Outcome::Quiescent if fail_on_block && r.stats.blocked > 0 => {
                    eprintln!("{} activation(s) blocked at quiescence", r.stats.blocked);
                    ExitCode::from(EXIT_BLOCKED)
                }
                Outcome::Quiescent => ExitCode::SUCCESS,
            }
        }
        Cmd::Explore {
            file,
            props,
            max_states,
            fine,
            json,
        } => {
            let ast = match load(&file, false) {
                Ok(a) => a,
                Err(code) => return code,
            };
            let text = match read(&props) {
                Ok(t) => t,
                Err(code) => return code,
            };
            let spec = match specfile::parse(&text, &ast) {
                Ok(s) => s,
                Err(ds) => {
                    report_diagnostics(&props, &ds);
                    return ExitCode::from(EXIT_DIAGNOSTICS);
                }
            };
            let opts = explorer::Options { max_states, fine };
            let reports = explorer::check(&ast, &spec, &opts);
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&reports).expect("reports serialize")
                );
            } else {
                for r in &reports {
                    print!("{}", r.render());
                }
            }
            if reports.iter().any(|r| r.is_counterexample()) {
                ExitCode::from(EXIT_COUNTEREXAMPLE)
            } else if reports
                .iter()
                .any(|r| matches!(r.verdict, Verdict::Error { .. }))
            {
                ExitCode::from(EXIT_DIAGNOSTICS)
            } else {
                ExitCode::SUCCESS
            }
        }
        Cmd::Bench {
            name,
            num,
            repeat,
            workers,
            seed,
            reps,
            out,
            format,
            runtime,
        } => {
            let bench: Bench = match name.parse() {
                Ok(b) => b,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(EXIT_DIAGNOSTICS);
                }
            };
            let params = Params { num, repeat, seed };
            let mut rows = Vec::new();
            for w in workers {
                let cfg = Config {
                    workers: w.max(1),
                    seed,
                    mode: match runtime {
                        Runtime::Mn => Mode::Parallel,
                        Runtime::ThreadPerObject => Mode::ThreadPerObject,
                    },
                    ..Config::default()
                };
                match bench::measure(bench, &params, &cfg, reps) {
                    Ok(s) => rows.push(s),
                    Err(e) => {
                        eprintln!("{e}");
                        return ExitCode::from(EXIT_FAULT);
                    }
                }
            }
            let format = match format {
                ReportFormat::Csv => Format::Csv,
                ReportFormat::Gnuplot => Format::Gnuplot,
                ReportFormat::Json => Format::Json,
            };
            let written = match &out {
                Some(path) => fs::File::create(path)
                    .map_err(bench::BenchError::from)
                    .and_then(|f| report::write(&rows, format, f)),
                None => report::write(&rows, format, std::io::stdout().lock()),
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(EXIT_FAULT)
                }
            }
        }
        Cmd::ParseCheck {
            files,
            json,
            require_start,
        } => {
            let mut all = Vec::new();
            for path in &files {
                let src = match read(path) {
                    Ok(s) => s,
                    Err(code) => return code,
                };
                if let Err(ds) = frontend::load(&src, ValidateOptions { require_start }) {
                    for d in ds {
                        all.push((path.display().to_string(), d));
                    }
                }
            }
            if json {
                let items: Vec<_> = all
                    .iter()
                    .map(|(f, d)| {
                        serde_json::json!({
                            "file": f,
                            "line": d.pos.line,
                            "col": d.pos.col,
                            "message": d.message,
                        })
                    })
                    .collect();
                println!("{}", serde_json::Value::Array(items));
            } else {
                for (f, d) in &all {
                    println!("{}", d.render(f));
                }
            }
            if all.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_DIAGNOSTICS)
            }
        }
    }
}
