use std::path::{Path, PathBuf};

use super::image::read_png;
use crate::error::DataError;
use crate::parallel;
use crate::tensor::Tensor;

/// Aligned rainy/clean images sharing an id (the file name).
#[derive(Debug, Clone)]
pub struct ImagePair {
    pub id: String,
    pub rainy: Tensor<f32>,
    pub clean: Tensor<f32>,
}

impl ImagePair {
    pub fn new(id: impl Into<String>, rainy: Tensor<f32>, clean: Tensor<f32>) -> Result<Self, DataError> {
        let id = id.into();
        if rainy.dims() != clean.dims() || rainy.dims().c != 3 || rainy.dims().n != 1 {
            return Err(DataError::Invalid(format!(
                "pair `{id}`: rainy {} and clean {} must both be 1x3xHxW",
                rainy.dims(),
                clean.dims()
            )));
        }
        Ok(ImagePair { id, rainy, clean })
    }
}

/// PNG file names in `dir`, byte-wise sorted.
pub fn list_pngs(dir: &Path) -> Result<Vec<String>, DataError> {
    let rd = std::fs::read_dir(dir).map_err(|source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut names = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|source| DataError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let is_png = Path::new(&name)
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && entry.path().is_file() {
            names.push(name);
        }
    }
    names.sort_unstable();
    Ok(names)
}

/// Pairs file names of two directories; errors on the first orphan.
fn match_names(
    left_dir: &Path,
    left: &[String],
    right_dir: &Path,
    right: &[String],
) -> Result<(), DataError> {
    for name in left {
        if right.binary_search(name).is_err() {
            return Err(DataError::Orphan {
                id: name.clone(),
                dir: right_dir.to_path_buf(),
            });
        }
    }
    for name in right {
        if left.binary_search(name).is_err() {
            return Err(DataError::Orphan {
                id: name.clone(),
                dir: left_dir.to_path_buf(),
            });
        }
    }
    Ok(())
}

/// Loads `<root>/rainy/*.png` against `<root>/clean/*.png`, sorted by file name.
///
/// A root without either subdirectory holds no pairs.
pub fn load_pair_dir(root: &Path) -> Result<Vec<ImagePair>, DataError> {
    if !root.is_dir() {
        return Err(DataError::MissingDir(root.to_path_buf()));
    }
    let (rainy_dir, clean_dir) = (root.join("rainy"), root.join("clean"));
    let list = |d: &PathBuf| if d.is_dir() { list_pngs(d) } else { Ok(Vec::new()) };
    let rainy = list(&rainy_dir)?;
    let clean = list(&clean_dir)?;
    match_names(&rainy_dir, &rainy, &clean_dir, &clean)?;
    let loaded = parallel::map_indexed(rainy.len(), |i| {
        let name = &rainy[i];
        let r = read_png(&rainy_dir.join(name))?;
        let c = read_png(&clean_dir.join(name))?;
        ImagePair::new(name.clone(), r, c)
    });
    loaded.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::write_png;

    fn write(dir: &Path, name: &str, v: f32) {
        std::fs::create_dir_all(dir).unwrap();
        write_png(&dir.join(name), &Tensor::full([1, 3, 4, 6], v)).unwrap();
    }

    #[test]
    fn empty_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_pair_dir(dir.path()).unwrap().is_empty());
        assert!(matches!(
            load_pair_dir(&dir.path().join("nope")),
            Err(DataError::MissingDir(_))
        ));
    }

    #[test]
    fn sorted_pairs_and_orphans() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        write(&root.join("rainy"), "b.png", 1.0);
        write(&root.join("clean"), "b.png", 0.0);
        write(&root.join("rainy"), "a.png", 0.5);
        write(&root.join("clean"), "a.png", 0.0);
        let pairs = load_pair_dir(root).unwrap();
        assert_eq!(pairs.iter().map(|p| p.id.as_str()).collect::<Vec<_>>(), ["a.png", "b.png"]);
        assert!(pairs[1].rainy.data().iter().all(|&v| v == 1.0));
        assert!(pairs[1].clean.data().iter().all(|&v| v == 0.0));

        write(&root.join("rainy"), "c.png", 0.5);
        match load_pair_dir(root) {
            Err(DataError::Orphan { id, .. }) => assert_eq!(id, "c.png"),
            other => panic!("{other:?}"),
        }
    }
}
