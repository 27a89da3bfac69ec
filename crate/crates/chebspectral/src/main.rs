fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CHEBSPECTRAL_LOG", "warn")).init();
    std::process::exit(chebspectral::cli::run(std::env::args_os()));
}
