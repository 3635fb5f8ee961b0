fn main() {
    std::process::exit(singulax::cli::main_with_args(std::env::args_os()));
}
