fn main() {
    std::process::exit(afc_stark::cli::main_with_args(std::env::args_os()));
}
