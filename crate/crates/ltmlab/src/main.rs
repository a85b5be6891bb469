fn main() {
    std::process::exit(ltmlab::cli::run());
}
