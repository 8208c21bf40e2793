use std::process::ExitCode;

fn main() -> ExitCode {
    tdqn::cli::run(std::env::args_os())
}
