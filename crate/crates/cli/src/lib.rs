//! `prunelens` command line and HTTP service.

mod commands;
pub mod server;

use std::ffi::OsString;

use clap::Parser;

pub use commands::Cli;

/// Parses `args` (program name first) and runs the subcommand.
///
/// Returns 0 on success, 2 on a usage error and 1 when the pipeline fails.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
