//! File plumbing shared by the subcommands. All filesystem access of the
//! binary lives here; the library crates never touch files.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use plx_core::interchange::parse_graph;
use plx_core::ArtifactGraph;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes to the given path, or to stdout when no path is given. Stream
/// output gains a trailing newline when the document lacks one.
pub fn write_text(target: Option<&Path>, contents: &str) -> Result<()> {
    match target {
        Some(path) => fs::write(path, contents)
            .with_context(|| format!("writing {}", path.display())),
        None => {
            if contents.ends_with('\n') {
                print!("{contents}");
            } else {
                println!("{contents}");
            }
            Ok(())
        }
    }
}

pub fn load_graph(path: &Path) -> Result<ArtifactGraph> {
    parse_graph(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_graphs(paths: &[std::path::PathBuf]) -> Result<Vec<ArtifactGraph>> {
    paths.iter().map(|p| load_graph(p)).collect()
}

/// Distinguishes JSON bundles from text documents by the first non-blank
/// byte; every JSON format the toolkit writes starts with an object brace.
pub fn looks_like_json(text: &str) -> bool {
    text.trim_start().starts_with('{')
}

/// Pretty JSON plus trailing newline, the shape all JSON output uses.
pub fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value).context("serializing to JSON")?;
    text.push('\n');
    Ok(text)
}
