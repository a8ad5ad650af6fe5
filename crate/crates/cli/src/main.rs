use clap::Parser;

fn main() {
    let cli = exolimits_cli::Cli::parse();
    if let Err(e) = exolimits_cli::run(cli) {
        eprintln!("exolimits: {e}");
        std::process::exit(e.exit_code());
    }
}
