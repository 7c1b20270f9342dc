use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CELE_LOG", "warn")).init();
    let cli = cele::cli::Cli::parse();
    if let Err(e) = cele::cli::run(cli) {
        eprintln!("cele: {e}");
        std::process::exit(e.exit_code());
    }
}
