fn main() {
    std::process::exit(ontoprobe::cli::main_with_args(std::env::args_os()));
}
