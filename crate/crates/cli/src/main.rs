fn main() -> std::process::ExitCode {
    elastic_ds_cli::run(std::env::args_os())
}
