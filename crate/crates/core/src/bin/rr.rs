use std::io;

fn main() {
    let argv = std::env::args().collect();
    let code = romberg::cli::run(argv, &mut io::stdout().lock(), &mut io::stderr().lock());
    std::process::exit(code);
}
