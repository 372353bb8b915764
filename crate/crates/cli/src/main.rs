use std::process::ExitCode;

fn main() -> ExitCode {
    convngc_cli::main_with(std::env::args_os())
}
