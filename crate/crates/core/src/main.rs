fn main() {
    std::process::exit(rxnbench::cli::run(std::env::args_os()));
}
