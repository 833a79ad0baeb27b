//! Flat TOML run settings. Every key is optional and every key has a
//! command-line flag of the same meaning; flags override file values.

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileSettings {
    pub methods: Option<MethodList>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub df_scale: Option<f64>,
    pub out: Option<PathBuf>,
    pub sequential: Option<bool>,
    pub set: Option<u8>,
    pub dim: Option<usize>,
    pub train_n: Option<usize>,
    pub test_n: Option<usize>,
    pub data: Option<PathBuf>,
    pub train_frac: Option<f64>,
    pub label_column: Option<String>,
    pub positive_label: Option<String>,
    pub ignore_columns: Option<Vec<String>>,
}

/// `methods = "glm,gamboost"` or `methods = ["glm", "gamboost"]`.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MethodList {
    Joined(String),
    Items(Vec<String>),
}

impl MethodList {
    pub fn joined(&self) -> String {
        match self {
            MethodList::Joined(s) => s.clone(),
            MethodList::Items(v) => v.join(","),
        }
    }
}

pub fn read_settings(path: &Path) -> Result<FileSettings, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_method_spellings_parse() {
        let a: FileSettings = toml::from_str("methods = \"glm,backfit\"\nreps = 3").unwrap();
        let b: FileSettings = toml::from_str("methods = [\"glm\", \"backfit\"]").unwrap();
        assert_eq!(a.methods.unwrap().joined(), "glm,backfit");
        assert_eq!(b.methods.unwrap().joined(), "glm,backfit");
        assert_eq!(a.reps, Some(3));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileSettings>("repz = 3").is_err());
    }
}
