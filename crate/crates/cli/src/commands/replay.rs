use clap::Parser;

use crate::args::{Cli, Command, ReplayArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::{RunManifest, VERSION};

pub fn run(a: &ReplayArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.manifest)
        .map_err(|e| CliError::data(format!("reading {}: {e}", a.manifest.display())))?;
    let manifest = RunManifest::extract(&text)?;
    if manifest.version != VERSION {
        eprintln!(
            "tlime: warning: manifest written by version {}, replaying with {VERSION}",
            manifest.version
        );
    }
    // a seed taken from the environment is not in the argument vector
    std::env::set_var("TLIME_SEED", manifest.seed.to_string());
    let cli = Cli::try_parse_from(&manifest.command)
        .map_err(|e| CliError::usage(format!("recorded command no longer parses: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::usage("refusing to replay a replay"));
    }
    if !manifest.working_dir.is_empty() {
        std::env::set_current_dir(&manifest.working_dir)
            .map_err(|e| CliError::data(format!("entering {}: {e}", manifest.working_dir)))?;
    }
    let changed = manifest.changed_inputs();
    if !changed.is_empty() {
        return Err(CliError::data(format!(
            "inputs changed since the recorded run: {}",
            changed.join(", ")
        )));
    }
    crate::run(cli, manifest.command)
}
