fn main() {
    std::process::exit(geohnn::cli::main());
}
