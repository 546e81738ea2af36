use clap::Parser;

fn main() {
    let cli = space_split_cli::Cli::parse();
    if let Err(e) = space_split_cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
