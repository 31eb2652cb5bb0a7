use std::process::ExitCode;

fn main() -> ExitCode {
    manifold_tools::cli::main_with_args(std::env::args_os())
}
