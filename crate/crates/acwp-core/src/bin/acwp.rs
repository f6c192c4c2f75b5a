fn main() {
    std::process::exit(acwp_core::cli::run(std::env::args().skip(1).collect()));
}
