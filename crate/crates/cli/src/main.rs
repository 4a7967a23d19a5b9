fn main() -> std::process::ExitCode {
    radar_dogm_cli::main_with_args(std::env::args_os())
}
