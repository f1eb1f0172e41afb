use clap::Parser;
use lrplab_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = lrplab_cli::run(&cli.command) {
        eprintln!("lrplab: {e}");
        std::process::exit(e.exit_code());
    }
}
