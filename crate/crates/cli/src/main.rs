use clap::Parser;

fn main() {
    let cli = rislab_cli::Cli::parse();
    std::process::exit(rislab_cli::run(&cli));
}
