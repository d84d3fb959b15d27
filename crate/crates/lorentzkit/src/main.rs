fn main() {
    std::process::exit(lorentzkit::cli::main_with_args(std::env::args_os()));
}
