use std::io::{self, IsTerminal};
use std::process::ExitCode;

fn main() -> ExitCode {
    let env = tkp::Env {
        stdin_is_terminal: io::stdin().is_terminal(),
    };
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut stdout = io::stdout().lock();
    let mut stderr = io::stderr().lock();
    let code = tkp::run(std::env::args_os(), env, &mut input, &mut stdout, &mut stderr);
    ExitCode::from(code as u8)
}
