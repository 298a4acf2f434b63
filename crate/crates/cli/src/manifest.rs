use std::time::{SystemTime, UNIX_EPOCH};

use fewl::digest::json_digest;
use serde::{Deserialize, Serialize};

/// Provenance for one command invocation. Timestamps sit outside the
/// digested part so replays of the same inputs share a digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub dataset_digest: String,
    pub providers: Vec<String>,
    pub seed: u64,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    #[serde(flatten)]
    pub manifest: RunManifest,
    pub digest: String,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn digest(&self) -> String {
        json_digest(self)
    }

    pub fn stamped(self, started_unix: u64) -> ManifestFile {
        let digest = self.digest();
        ManifestFile { manifest: self, digest, started_unix, finished_unix: unix_now() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_timestamps() {
        let m = RunManifest {
            command: "score".into(),
            config_digest: "c".into(),
            dataset_digest: "d".into(),
            providers: vec!["a".into()],
            seed: 1,
            tool_version: "0".into(),
        };
        let (a, b) = (m.clone().stamped(1), m.clone().stamped(99));
        assert_eq!(a.digest, b.digest);
        let other = RunManifest { seed: 2, ..m };
        assert_ne!(other.digest(), a.digest);
    }
}
