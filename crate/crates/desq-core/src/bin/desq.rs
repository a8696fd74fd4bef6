use clap::Parser;

use desq_core::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("desq: {err}");
        std::process::exit(err.exit_code());
    }
}
