fn main() {
    std::process::exit(pds_core::cli::run(std::env::args_os()));
}
