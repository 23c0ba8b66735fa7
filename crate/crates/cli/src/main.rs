fn main() {
    env_logger::init();
    std::process::exit(block_anderson::harness::run_cli(std::env::args_os()));
}
