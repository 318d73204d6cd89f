use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use odeim::cli::{self, Cli, EXIT_CHECK_FAILED, EXIT_ERROR, EXIT_OK, EXIT_USAGE};
use odeim::OdeimError;

fn init_threads() {
    if let Ok(s) = std::env::var("ODEIM_THREADS") {
        match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("warning: could not size the thread pool: {}", e);
                }
            }
            _ => eprintln!("warning: ignoring ODEIM_THREADS={}", s),
        }
    }
}

fn main() -> ExitCode {
    let args = match cli::expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}", e);
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    let parsed = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            e.print().ok();
            return ExitCode::from(code as u8);
        }
    };
    init_threads();
    let start = std::time::Instant::now();
    let report = match cli::run(&parsed.command) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}", e);
            let code = match e {
                OdeimError::InvalidLabel(_) | OdeimError::InvalidArgument(_) | OdeimError::Parse(_) => EXIT_USAGE,
                _ => EXIT_ERROR,
            };
            return ExitCode::from(code as u8);
        }
    };
    let bytes = match cli::export_report(&report, cli::format_of(&parsed.command)) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {}", e);
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    if let Err(e) = std::io::stdout().lock().write_all(&bytes) {
        eprintln!("error: {}", e);
        return ExitCode::from(EXIT_ERROR as u8);
    }
    eprintln!("{}: {} in {:.2}s", report.command, if report.ok { "ok" } else { "check failed" }, start.elapsed().as_secs_f64());
    ExitCode::from(if report.ok { EXIT_OK } else { EXIT_CHECK_FAILED } as u8)
}
