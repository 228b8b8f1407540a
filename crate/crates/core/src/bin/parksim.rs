use std::process::ExitCode;

use parksim::cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PARKSIM_LOG", "warn"))
        .format_timestamp_millis()
        .init();

    let cmd = match cli::parse_args(std::env::args_os().skip(1)) {
        Ok(cmd) => cmd,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(cli::usage_exit_code(&e) as u8);
        }
    };
    let mut stdout = std::io::stdout().lock();
    match cli::run(cmd, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("parksim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
