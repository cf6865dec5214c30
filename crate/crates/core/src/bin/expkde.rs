fn main() {
    std::process::exit(expkde::cli::main_from_args(std::env::args_os()));
}
