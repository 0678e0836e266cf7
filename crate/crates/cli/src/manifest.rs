//! Run manifests: enough to re-run a command without its original flags.

use std::path::Path;

use crate::commands::Command;
use crate::error::{invalid, Result};

const HEADER: &str = "abn run manifest";
const CONFIG_KEY: &str = "config: ";

pub fn render(command: &Command, argv: &[String]) -> Result<String> {
    Ok(format!(
        "{HEADER}\nversion: {}\ncommand: {}\nseed: {}\ninvocation: {}\n{CONFIG_KEY}{}\n",
        env!("CARGO_PKG_VERSION"),
        command.name(),
        command.seed().map_or("none".to_string(), |s| s.to_string()),
        argv.join(" "),
        serde_json::to_string(command)?
    ))
}

pub fn write(path: &Path, command: &Command, argv: &[String]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, render(command, argv)?)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Command> {
    let text = std::fs::read_to_string(path)?;
    if !text.starts_with(HEADER) {
        return invalid(format!("{} is not a run manifest", path.display()));
    }
    match text.lines().find_map(|l| l.strip_prefix(CONFIG_KEY)) {
        Some(json) => Ok(serde_json::from_str(json)?),
        None => invalid(format!("{} has no config line", path.display())),
    }
}
