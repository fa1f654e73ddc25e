//! Paired image directories: `<root>/input/NAME` and `<root>/target/NAME`.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::imaging::{load_image, save_image, ImageU8, ImagingError};
use crate::synth::SynthPair;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("directory not found: {0}")]
    MissingDirectory(PathBuf),
    #[error("no images in {0}")]
    Empty(PathBuf),
    #[error("{0} has no matching target image")]
    Unpaired(PathBuf),
    #[error("{name}: input is {input:?}, target is {target:?}")]
    DimensionMismatch {
        name: String,
        input: (usize, usize),
        target: (usize, usize),
    },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub const INPUT_DIR: &str = "input";
pub const TARGET_DIR: &str = "target";

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "ppm")
    )
}

/// Image files (`.png`, `.ppm`) directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    if !dir.is_dir() {
        return Err(DatasetError::MissingDirectory(dir.to_path_buf()));
    }
    let entries = std::fs::read_dir(dir).map_err(|source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|source| DatasetError::Io {
                path: dir.to_path_buf(),
                source,
            })?
            .path();
        if path.is_file() && is_image(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone)]
pub struct ImagePair {
    pub name: String,
    pub input: ImageU8,
    pub target: ImageU8,
}

/// Load every input under `root/input` with its same-named target under `root/target`.
pub fn load_pairs(root: &Path) -> Result<Vec<ImagePair>, DatasetError> {
    let input_dir = root.join(INPUT_DIR);
    let target_dir = root.join(TARGET_DIR);
    let inputs = list_images(&input_dir)?;
    if !target_dir.is_dir() {
        return Err(DatasetError::MissingDirectory(target_dir));
    }
    if inputs.is_empty() {
        return Err(DatasetError::Empty(input_dir));
    }
    let mut pairs = Vec::with_capacity(inputs.len());
    for path in inputs {
        let name = path.file_name().expect("listed file").to_string_lossy().into_owned();
        let target_path = target_dir.join(&name);
        if !target_path.is_file() {
            return Err(DatasetError::Unpaired(path));
        }
        let input = load_image(&path)?;
        let target = load_image(&target_path)?;
        if !input.same_dimensions(&target) {
            return Err(DatasetError::DimensionMismatch {
                name,
                input: (input.width(), input.height()),
                target: (target.width(), target.height()),
            });
        }
        pairs.push(ImagePair { name, input, target });
    }
    Ok(pairs)
}

/// Write pairs in the layout [`load_pairs`] reads, creating directories as needed.
pub fn save_pairs(root: &Path, pairs: &[SynthPair]) -> Result<(), DatasetError> {
    for sub in [INPUT_DIR, TARGET_DIR] {
        let dir = root.join(sub);
        std::fs::create_dir_all(&dir).map_err(|source| DatasetError::Io { path: dir, source })?;
    }
    for p in pairs {
        save_image(&p.input, &root.join(INPUT_DIR).join(&p.name))?;
        save_image(&p.target, &root.join(TARGET_DIR).join(&p.name))?;
    }
    Ok(())
}
