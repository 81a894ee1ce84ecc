use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let (mut out, mut err) = (io::stdout().lock(), io::stderr().lock());
    let code = afrelay_cli::run(
        std::env::args_os(),
        &mut afrelay_cli::Io {
            stdout: &mut out,
            stderr: &mut err,
        },
    );
    ExitCode::from(code as u8)
}
