use std::collections::HashMap;
use std::io;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let env: HashMap<String, String> = std::env::vars().collect();
    let stdin = io::stdin();
    let code = issuelens::cli::run_main(
        std::env::args_os(),
        &env,
        &mut stdin.lock(),
        &mut io::stdout().lock(),
        &mut io::stderr().lock(),
    );
    std::process::exit(code);
}
