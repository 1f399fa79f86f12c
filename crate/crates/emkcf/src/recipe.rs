//! `kernels.json`: the kernel recipe as an array of `{kind, params}`.

use std::path::Path;

use emkcf_core::KernelSpec;

use crate::error::{Error, Result};

pub fn parse_recipe(text: &str, path: &Path) -> Result<Vec<KernelSpec>> {
    let specs: Vec<KernelSpec> =
        serde_json::from_str(text).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    if specs.is_empty() {
        return Err(Error::format(path, "recipe lists no kernels"));
    }
    for s in &specs {
        s.validate().map_err(|e| Error::format(path, e.to_string()))?;
    }
    Ok(specs)
}

pub fn load_recipe(path: &Path) -> Result<Vec<KernelSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_recipe(&text, path)
}

pub fn save_recipe(path: &Path, specs: &[KernelSpec]) -> Result<()> {
    let text = serde_json::to_string_pretty(specs).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
