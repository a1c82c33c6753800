fn main() {
    env_logger::init();
    std::process::exit(evestim::cli::run());
}
