use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::{NnError, Result};

/// Self-describing checkpoint wrapper: a format tag plus version guard any
/// payload the agents define (networks, optimizer state, RNG state).
#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointEnvelope<T> {
    pub format: String,
    pub version: u32,
    pub payload: T,
}

pub fn save_json<T: Serialize>(path: &Path, format: &str, version: u32, payload: &T) -> Result<()> {
    let envelope = CheckpointEnvelope {
        format: format.to_string(),
        version,
        payload,
    };
    let text = serde_json::to_string(&envelope)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path, format: &str) -> Result<CheckpointEnvelope<T>> {
    let text = fs::read_to_string(path)?;
    let envelope: CheckpointEnvelope<T> = serde_json::from_str(&text)?;
    if envelope.format != format {
        return Err(NnError::FormatTag {
            expected: format.to_string(),
            found: envelope.format,
        });
    }
    Ok(envelope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Activation, Adam, Mlp, SeededRng};

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Blob {
        net: Mlp,
        adam: Adam,
        rng: crate::rng::RngState,
    }

    #[test]
    fn roundtrip_preserves_parameters_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let mut rng = SeededRng::new(5);
        let net = Mlp::new(&[4, 8, 3], &[Activation::Relu, Activation::Identity], &mut rng).unwrap();
        let blob = Blob {
            net: net.clone(),
            adam: Adam::new(net.param_count(), 1e-3),
            rng: rng.state(),
        };
        save_json(&path, "test-ck", 1, &blob).unwrap();
        let loaded: CheckpointEnvelope<Blob> = load_json(&path, "test-ck").unwrap();
        assert_eq!(loaded.payload, blob);
        assert_eq!(loaded.payload.net.params_flat(), net.params_flat());
    }

    #[test]
    fn rejects_wrong_format_tag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        save_json(&path, "tag-a", 1, &vec![1.0f64]).unwrap();
        let err = load_json::<Vec<f64>>(&path, "tag-b").unwrap_err();
        assert!(matches!(err, NnError::FormatTag { .. }));
    }
}
