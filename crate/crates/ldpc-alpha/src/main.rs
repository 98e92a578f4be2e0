use clap::Parser;
use ldpc_alpha::cli::{run, Cli};
use ldpc_alpha::Error;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        let code = match e {
            Error::InfeasibleDegreeCounts { .. } => 3,
            _ => 1,
        };
        std::process::exit(code);
    }
}
