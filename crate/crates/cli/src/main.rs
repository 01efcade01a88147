fn main() {
    std::process::exit(netalign_cli::run());
}
