use std::process::ExitCode;

fn main() -> ExitCode {
    twin_trust::cli::main()
}
