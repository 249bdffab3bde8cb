fn main() {
    std::process::exit(glyphnet::cli::main_with(std::env::args_os()));
}
