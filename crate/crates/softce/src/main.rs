use clap::Parser;

use softce::cli;

fn main() {
    cli::init_logging();
    let args = cli::Cli::parse();
    std::process::exit(cli::run(args));
}
