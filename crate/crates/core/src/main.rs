fn main() {
    std::process::exit(cournot_core::cli::main_with(std::env::args_os()));
}
