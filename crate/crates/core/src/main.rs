use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<_> = std::env::args_os().collect();
    let verbosity = args.iter().fold(0, |n, a| match a.to_str() {
        Some("--verbose") => n + 1,
        Some(s) if s.starts_with('-') && !s.starts_with("--") && s[1..].chars().all(|c| c == 'v') => n + s.len() - 1,
        _ => n,
    });
    let level = match verbosity {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let code = prism_core::cli::run(args, &mut io::stdout().lock(), &mut io::stderr().lock());
    ExitCode::from(code as u8)
}
