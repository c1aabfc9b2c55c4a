use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(pmp_horizon::LOG_ENV, "warn"))
        .format_timestamp(None)
        .init();
    let code = pmp_horizon::main_with(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    ExitCode::from(code)
}
