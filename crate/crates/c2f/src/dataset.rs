//! Case files on disk: `<id>.image.<ext>` with `<id>.mask.<ext>`, where `<ext>` is
//! `rvol`, `nii` or `nii.gz`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use c2f_core::volume::{Mask, Volume};

use crate::{nifti, rvol};

pub const EXTENSIONS: [&str; 3] = ["rvol", "nii.gz", "nii"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaseFiles {
    pub id: String,
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
}

/// Splits `<id>.<role>.<ext>` into (id, ext) when the role matches.
pub fn split_name<'a>(name: &'a str, role: &str) -> Option<(&'a str, &'static str)> {
    EXTENSIONS.iter().find_map(|&ext| {
        let stem = name.strip_suffix(ext)?.strip_suffix('.')?;
        let id = stem.strip_suffix(role)?.strip_suffix('.')?;
        (!id.is_empty()).then_some((id, ext))
    })
}

/// Case id of a file path: the name without its extension and role suffix.
pub fn case_id(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    for role in ["image", "mask", "fine", "coarse"] {
        if let Some((id, _)) = split_name(&name, role) {
            return id.to_string();
        }
    }
    EXTENSIONS
        .iter()
        .find_map(|ext| name.strip_suffix(ext).and_then(|s| s.strip_suffix('.')))
        .unwrap_or(&name)
        .to_string()
}

fn files_with_role(dir: &Path, role: &str) -> Result<Vec<(String, PathBuf, &'static str)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if let Some((id, ext)) = split_name(&name, role) {
            out.push((id.to_string(), path.clone(), ext));
        }
    }
    out.sort();
    Ok(out)
}

/// Image files in `dir` with their masks, sorted by id.
pub fn list_cases(dir: &Path) -> Result<Vec<CaseFiles>> {
    Ok(files_with_role(dir, "image")?
        .into_iter()
        .map(|(id, image, ext)| {
            let mask = dir.join(format!("{id}.mask.{ext}"));
            CaseFiles {
                mask: mask.exists().then_some(mask),
                id,
                image,
            }
        })
        .collect())
}

/// Mask files in `dir` as (id, path), sorted by id.
pub fn list_masks(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    Ok(files_with_role(dir, "mask")?
        .into_iter()
        .map(|(id, p, _)| (id, p))
        .collect())
}

fn is_nifti(path: &Path) -> bool {
    let name = path.to_string_lossy();
    name.ends_with(".nii") || name.ends_with(".nii.gz")
}

pub fn load_volume(path: &Path, nifti_depth_axis: usize) -> Result<Volume> {
    let v = if is_nifti(path) {
        nifti::read_nifti(path, nifti_depth_axis)?
    } else {
        rvol::read_volume(path)?
    };
    Ok(v)
}

pub fn load_mask(path: &Path, nifti_depth_axis: usize) -> Result<Mask> {
    let m = if is_nifti(path) {
        nifti::read_nifti_mask(path, nifti_depth_axis)?
    } else {
        rvol::read_mask(path)?
    };
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names() {
        assert_eq!(
            split_name("case_001.image.rvol", "image"),
            Some(("case_001", "rvol"))
        );
        assert_eq!(
            split_name("a.b.mask.nii.gz", "mask"),
            Some(("a.b", "nii.gz"))
        );
        assert_eq!(split_name("a.mask.nii", "image"), None);
        assert_eq!(split_name(".image.rvol", "image"), None);
        assert_eq!(case_id(Path::new("/x/case_7.image.nii.gz")), "case_7");
        assert_eq!(case_id(Path::new("scan.rvol")), "scan");
    }
}
