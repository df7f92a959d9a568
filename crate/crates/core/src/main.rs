fn main() {
    std::process::exit(lmcortex::cli::run(std::env::args_os()));
}
