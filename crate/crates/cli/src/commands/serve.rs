use std::io;

use tlime_core::models::serve_predictor;

use super::load_model;
use crate::args::ServeArgs;
use crate::error::CliResult;

pub fn run(a: &ServeArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let stdin = io::stdin();
    let stdout = io::stdout();
    serve_predictor(&model, stdin.lock(), stdout.lock())?;
    Ok(())
}
