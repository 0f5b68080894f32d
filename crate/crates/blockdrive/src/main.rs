use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(blockdrive::cli::main_with(std::env::args()))
}
