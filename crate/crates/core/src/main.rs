fn main() {
    std::process::exit(kktcont::cli::main_with(std::env::args_os()));
}
