use std::io::Write;

use clap::Parser;

fn main() {
    let cli = lreq_cli::Cli::parse();
    let report = lreq_cli::execute(&cli);
    // a closed pipe is not an error worth reporting
    let _ = std::io::stdout().write_all(report.stdout.as_bytes());
    let _ = std::io::stderr().write_all(report.stderr.as_bytes());
    std::process::exit(report.code);
}
