use clap::Parser;

fn main() {
    let cli = aoa_cli::Cli::parse();
    let stdout = std::io::stdout();
    if let Err(e) = aoa_cli::run(&cli, &mut stdout.lock()) {
        eprintln!("aoanet: {e}");
        std::process::exit(e.code);
    }
}
