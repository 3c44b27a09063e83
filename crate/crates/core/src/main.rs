fn main() {
    std::process::exit(basis_voting::cli::run_subcommand(std::env::args_os()));
}
