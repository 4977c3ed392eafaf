use std::process::ExitCode;

fn main() -> ExitCode {
    gean::cli::run(std::env::args_os())
}
