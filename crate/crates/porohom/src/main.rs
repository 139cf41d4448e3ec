use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(porohom::harness::run_cli(std::env::args_os()) as u8)
}
