fn main() {
    std::process::exit(fracheat::run(std::env::args_os()));
}
