fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MARGIN_RANK_LOG", "warn")).init();
    std::process::exit(margin_rank::cli::main_with_args(std::env::args_os()));
}
