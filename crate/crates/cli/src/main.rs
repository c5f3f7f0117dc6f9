use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(mtsvm_cli::run(std::env::args_os()))
}
