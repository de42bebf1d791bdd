use clap::Parser;

fn main() {
    let cli = stokes_harness::Cli::parse();
    std::process::exit(stokes_harness::run(&cli));
}
