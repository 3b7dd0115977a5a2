fn main() {
    std::process::exit(seranet::harness::main_with_args(std::env::args_os()));
}
