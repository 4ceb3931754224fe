fn main() {
    std::process::exit(kapi_core::harness::cli::main_with_args(std::env::args_os()));
}
