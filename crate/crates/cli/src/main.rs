use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(prunelens_cli::run(std::env::args_os()))
}
