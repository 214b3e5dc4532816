fn main() {
    std::process::exit(ggn::cli::run(std::env::args_os()));
}
