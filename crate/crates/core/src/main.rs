use std::io;
use std::process::ExitCode;

use scarcity::harness::cli::{execute, parse_cli};

fn main() -> ExitCode {
    let command = match parse_cli(std::env::args_os()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let code = execute(command, &mut io::stdout().lock(), &mut io::stderr().lock());
    ExitCode::from(code as u8)
}
