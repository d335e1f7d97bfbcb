fn main() {
    std::process::exit(impute_xai::cli::run(std::env::args_os()));
}
