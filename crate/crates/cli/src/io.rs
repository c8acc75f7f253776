//! Reading models and documents from files and directories.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use spcc_core::codec::parse_with_id;
use spcc_core::{CadModel, SpccDocument};

pub const CODE_EXTENSIONS: [&str; 4] = ["py", "spcc", "cad", "txt"];

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string()
}

fn extension(path: &Path) -> &str {
    path.extension().and_then(|s| s.to_str()).unwrap_or_default()
}

pub fn is_model_file(path: &Path) -> bool {
    let ext = extension(path);
    ext == "json" || CODE_EXTENSIONS.contains(&ext)
}

/// The file itself, or the model files of a directory sorted by name.
pub fn list_inputs(path: &Path, keep: fn(&Path) -> bool) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && keep(p))
        .collect();
    files.sort();
    Ok(files)
}

/// What a single input file holds.
pub enum Loaded {
    Model(CadModel),
    Document(SpccDocument),
}

impl Loaded {
    pub fn model(&self) -> &CadModel {
        match self {
            Loaded::Model(m) => m,
            Loaded::Document(d) => &d.model,
        }
    }

    pub fn into_model(self) -> CadModel {
        match self {
            Loaded::Model(m) => m,
            Loaded::Document(d) => d.model,
        }
    }
}

/// A `.json` model or code/SPCC text; the id defaults to the file stem.
pub fn load(path: &Path) -> Result<Loaded> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let id = stem(path);
    if extension(path) == "json" {
        let mut m = CadModel::from_json(&text).with_context(|| format!("{}: not a model", path.display()))?;
        if m.id.is_empty() {
            m.id = id;
        }
        Ok(Loaded::Model(m))
    } else {
        let doc = parse_with_id(&text, &id).with_context(|| format!("{}", path.display()))?;
        Ok(Loaded::Document(doc))
    }
}

/// `(file, reason)` for every input that could not be loaded.
pub type Failures = Vec<(String, String)>;

/// Loads every model under `path`; unreadable files are reported by name.
pub fn load_models(path: &Path) -> Result<(Vec<CadModel>, Failures)> {
    let mut models = Vec::new();
    let mut failed = Vec::new();
    for file in list_inputs(path, is_model_file)? {
        match load(&file) {
            Ok(l) => models.push(l.into_model()),
            Err(e) => failed.push((file.display().to_string(), format!("{e:#}"))),
        }
    }
    Ok((models, failed))
}

pub fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}
