use std::io;

fn main() {
    let code = cubicot::cli::run(std::env::args_os(), &mut io::stdout(), &mut io::stderr());
    std::process::exit(code);
}
