fn main() {
    std::process::exit(nonlocal_core::cli::run(std::env::args_os()));
}
