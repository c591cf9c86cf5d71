use std::path::Path;

use serde::{Deserialize, Serialize};

use super::combine::{Ensemble, EnsembleMode};
use crate::net::{load_model, save_model};
use crate::{Error, Result, Scalar};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub mode: EnsembleMode,
    pub p: usize,
    pub experts: Vec<String>,
    pub gate: Option<String>,
    /// Free-form training metadata.
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn save_ensemble<S: Scalar>(ens: &Ensemble<S>, dir: impl AsRef<Path>, metadata: serde_json::Value) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut experts = Vec::new();
    for (k, e) in ens.experts.iter().enumerate() {
        let name = format!("expert_{k}.iocnn");
        save_model(e, dir.join(&name))?;
        experts.push(name);
    }
    let gate = match &ens.gate {
        Some(g) => {
            save_model(g, dir.join("gate.iocnn"))?;
            Some("gate.iocnn".to_string())
        }
        None => None,
    };
    let manifest = Manifest {
        mode: ens.mode,
        p: ens.len(),
        experts,
        gate,
        metadata,
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_ensemble<S: Scalar>(dir: impl AsRef<Path>) -> Result<(Ensemble<S>, Manifest)> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.experts.len() != manifest.p {
        return Err(Error::Format(format!(
            "manifest lists {} experts but p = {}",
            manifest.experts.len(),
            manifest.p
        )));
    }
    let experts = manifest
        .experts
        .iter()
        .map(|f| load_model(dir.join(f)))
        .collect::<Result<Vec<_>>>()?;
    let gate = manifest.gate.as_ref().map(|f| load_model(dir.join(f))).transpose()?;
    Ok((Ensemble::new(manifest.mode, experts, gate)?, manifest))
}
