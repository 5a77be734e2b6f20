fn main() {
    std::process::exit(cayley_gibbs_cli::run(std::env::args_os()));
}
