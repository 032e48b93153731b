use clap::Parser;

fn main() {
    let cli = slack_sac::cli::Cli::parse();
    if let Err(e) = slack_sac::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
