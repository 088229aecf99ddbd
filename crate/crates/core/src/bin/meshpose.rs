use clap::Parser;

fn main() {
    let cli = meshpose::cli::Cli::parse();
    std::process::exit(meshpose::cli::run(cli));
}
