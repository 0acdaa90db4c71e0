fn main() {
    std::process::exit(sce_core::cli::main_with_args(std::env::args_os()));
}
