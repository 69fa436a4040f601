use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(colmax::cli::run(std::env::args_os()) as u8)
}
