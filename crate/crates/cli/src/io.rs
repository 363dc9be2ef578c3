//! Input listing, image loading, and output tracking.

use std::path::{Path, PathBuf};

use scsc::signal::{contrast_normalize, NormalizeWindow, Signal};

use crate::CliError;

/// Expand inputs: files pass through, directories list *.png / *.pgm sorted
/// by name. Order is deterministic.
pub fn list_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(input)
                .map_err(|e| CliError::io(format!("{}: {e}", input.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    matches!(
                        p.extension().and_then(|e| e.to_str()),
                        Some("png") | Some("pgm")
                    )
                })
                .collect();
            entries.sort();
            files.extend(entries);
        } else if input.is_file() {
            files.push(input.clone());
        } else {
            return Err(CliError::io(format!("{}: no such file or directory", input.display())));
        }
    }
    if files.is_empty() {
        return Err(CliError::usage("no input images found".to_string()));
    }
    Ok(files)
}

pub fn load_images(paths: &[PathBuf], normalize: bool) -> Result<Vec<Signal>, CliError> {
    let window = NormalizeWindow::default();
    paths
        .iter()
        .map(|p| {
            let img = Signal::load(p).map_err(CliError::from)?;
            if normalize {
                contrast_normalize(&img, &window).map_err(CliError::from)
            } else {
                Ok(img)
            }
        })
        .collect()
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image")
        .to_string()
}

/// Tracks files created by a command so they can be removed if it fails
/// partway (no partial outputs are left behind).
#[derive(Default)]
pub struct OutputTracker {
    created: Vec<PathBuf>,
}

impl OutputTracker {
    pub fn track(&mut self, path: &Path) {
        self.created.push(path.to_path_buf());
    }

    pub fn discard_all(&self) {
        for p in &self.created {
            let _ = std::fs::remove_file(p);
        }
    }
}
