//! Thin binary wrapper: parse, execute, print, exit.

use std::io::Write as _;

fn main() {
    let result = audit_design_cli::run(std::env::args_os());
    if result.exit_code == 0 {
        print!("{}", result.report);
        std::io::stdout().flush().ok();
    } else {
        eprint!("{}", result.report);
        std::io::stderr().flush().ok();
    }
    std::process::exit(result.exit_code);
}
