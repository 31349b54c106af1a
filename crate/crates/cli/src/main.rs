use clap::Parser;

fn main() {
    let cli = apportion_cli::Cli::parse();
    if let Err(err) = apportion_cli::run(cli) {
        eprintln!("{err}");
        std::process::exit(err.exit_code());
    }
}
