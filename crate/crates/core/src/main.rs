fn main() {
    std::process::exit(l3svm::cli::run(std::env::args_os()));
}
