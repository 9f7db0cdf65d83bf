fn main() {
    std::process::exit(mpc_infer::run());
}
