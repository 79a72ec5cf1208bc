//! Command-line front end: dispatches the engine subcommands and writes
//! CSV/JSON artifacts under the output directory.

use lobq::cli::{run, Invocation};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let code = match Invocation::parse(&args) {
        Ok(inv) => match run(&inv) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
