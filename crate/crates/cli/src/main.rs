use clap::Parser;
use dlmg_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("dlmg: {e}");
        std::process::exit(e.exit_code());
    }
}
