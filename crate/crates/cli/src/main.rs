use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(inertia_cli::run(std::env::args_os()))
}
