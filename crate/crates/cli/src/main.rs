use clap::Parser;

fn main() {
    let cli = bifkit_cli::Cli::parse();
    std::process::exit(bifkit_cli::run(&cli));
}
