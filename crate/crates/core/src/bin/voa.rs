fn main() {
    let code = grasp_voa::harness::cli(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
