fn main() {
    std::process::exit(vcsg_bench::cli::main_with(std::env::args_os()));
}
