fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FRACOBSTACLE_LOG", "error")).init();
    std::process::exit(fracobstacle_cli::run(std::env::args_os()));
}
