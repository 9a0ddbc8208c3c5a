use serde::{Deserialize, Serialize};

/// Tunables shared by every analysis stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Minimum combined probability for a check/resource association to count.
    pub assoc_threshold: f64,
    /// Maximum number of blocks on an enumerated path.
    pub max_path_depth: usize,
    /// Extra traversals allowed through any block on a single path.
    pub loop_unroll: usize,
    /// Cap on paths recorded per (entry, resource) pair.
    #[serde(skip)]
    pub max_paths: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            assoc_threshold: 0.5,
            max_path_depth: 64,
            loop_unroll: 1,
            max_paths: 4096,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.assoc_threshold > 0.0 && self.assoc_threshold < 1.0) {
            return Err(crate::Error::Usage(format!(
                "assoc_threshold must lie strictly between 0 and 1, got {}",
                self.assoc_threshold
            )));
        }
        if self.max_path_depth == 0 {
            return Err(crate::Error::Usage("max_path_depth must be at least 1".into()));
        }
        Ok(())
    }
}
