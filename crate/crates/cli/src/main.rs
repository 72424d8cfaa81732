use clap::Parser;

fn main() -> std::process::ExitCode {
    let cli = ghostlab_cli::Cli::parse();
    match ghostlab_cli::run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
