//! JSON checkpoint container.
//!
//! Layout: a `format`/`version` tag, the cache capacity, hidden sizes, the
//! config hash, `log_alpha`, and the networks in the order actor, critic1,
//! critic2, target1, target2. Each layer stores its dimensions, the weight
//! matrix row-major (`inputs x outputs`), then the bias vector. Floats are
//! written in shortest round-trip form, so loading is bit-exact.

use std::fs;
use std::path::Path;

use log::warn;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::agent::AgentParams;
use super::mlp::{Layer, Mlp};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "edgecache-sac-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
const NETWORK_ORDER: [&str; 5] = ["actor", "critic1", "critic2", "target1", "target2"];

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    inputs: usize,
    outputs: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkRecord {
    name: String,
    layers: Vec<LayerRecord>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    capacity: usize,
    state_dim: usize,
    n_actions: usize,
    hidden_sizes: Vec<usize>,
    config_hash: String,
    log_alpha: f64,
    networks: Vec<NetworkRecord>,
}

/// A loaded checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: AgentParams,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn capacity(&self) -> usize {
        self.params.capacity()
    }

    /// Reject a capacity mismatch; warn (and return `false`) on a config hash
    /// mismatch.
    pub fn check_compatible(&self, capacity: usize, config_hash: Option<&str>) -> Result<bool> {
        if self.capacity() != capacity {
            return Err(Error::IncompatibleCheckpoint(format!(
                "checkpoint was trained for C={}, config has C={capacity}",
                self.capacity()
            )));
        }
        match config_hash {
            Some(h) if h != self.config_hash => {
                warn!("checkpoint config hash {} differs from {h}", self.config_hash);
                Ok(false)
            }
            _ => Ok(true),
        }
    }
}

fn network_record(name: &str, net: &Mlp) -> NetworkRecord {
    NetworkRecord {
        name: name.to_string(),
        layers: net
            .layers()
            .iter()
            .map(|l| LayerRecord {
                inputs: l.inputs(),
                outputs: l.outputs(),
                weight: l.weight.iter().copied().collect(),
                bias: l.bias.to_vec(),
            })
            .collect(),
    }
}

fn network_from_record(rec: NetworkRecord) -> Result<Mlp> {
    let layers = rec
        .layers
        .into_iter()
        .map(|l| {
            let weight = Array2::from_shape_vec((l.inputs, l.outputs), l.weight).map_err(|e| {
                Error::IncompatibleCheckpoint(format!("{}: weight shape: {e}", rec.name))
            })?;
            if l.bias.len() != l.outputs {
                return Err(Error::IncompatibleCheckpoint(format!(
                    "{}: bias has {} entries, expected {}",
                    rec.name,
                    l.bias.len(),
                    l.outputs
                )));
            }
            Ok(Layer {
                weight,
                bias: Array1::from(l.bias),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Mlp::from_layers(layers).map_err(|e| Error::IncompatibleCheckpoint(e.to_string()))
}

pub fn to_json(params: &AgentParams, config_hash: &str) -> Result<String> {
    let hidden = params.actor.sizes();
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        capacity: params.capacity(),
        state_dim: params.actor.input_dim(),
        n_actions: params.actor.output_dim(),
        hidden_sizes: hidden[1..hidden.len() - 1].to_vec(),
        config_hash: config_hash.to_string(),
        log_alpha: params.log_alpha,
        networks: params
            .networks()
            .iter()
            .map(|(name, net)| network_record(name, net))
            .collect(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn from_json(text: &str) -> Result<Checkpoint> {
    let file: CheckpointFile = serde_json::from_str(text)
        .map_err(|e| Error::IncompatibleCheckpoint(format!("unreadable checkpoint: {e}")))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::IncompatibleCheckpoint(format!("unknown format `{}`", file.format)));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::IncompatibleCheckpoint(format!(
            "version {} is not supported (expected {CHECKPOINT_VERSION})",
            file.version
        )));
    }
    let names: Vec<&str> = file.networks.iter().map(|n| n.name.as_str()).collect();
    if names != NETWORK_ORDER {
        return Err(Error::IncompatibleCheckpoint(format!("unexpected networks {names:?}")));
    }
    let mut nets = file.networks.into_iter().map(network_from_record);
    let mut next = || nets.next().expect("five networks checked above");
    let params = AgentParams {
        actor: next()?,
        critic1: next()?,
        critic2: next()?,
        target1: next()?,
        target2: next()?,
        log_alpha: file.log_alpha,
    };
    params
        .validate()
        .map_err(|e| Error::IncompatibleCheckpoint(e.to_string()))?;
    let mut expected = vec![file.state_dim];
    expected.extend(&file.hidden_sizes);
    expected.push(file.n_actions);
    if params.capacity() != file.capacity || params.actor.sizes() != expected {
        return Err(Error::IncompatibleCheckpoint(
            "declared dimensions do not match stored layers".into(),
        ));
    }
    Ok(Checkpoint {
        params,
        config_hash: file.config_hash,
    })
}

pub fn save_agent(params: &AgentParams, config_hash: &str, path: &Path) -> Result<()> {
    fs::write(path, to_json(params, config_hash)?)?;
    Ok(())
}

pub fn load_agent(path: &Path) -> Result<Checkpoint> {
    from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut params = AgentParams::new(3, &[5, 4], 11).unwrap();
        params.log_alpha = -0.123_456_789_012_345_67;
        params.actor.layers_mut()[2].bias[1] = 1.0 / 3.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.json");
        save_agent(&params, "abc", &path).unwrap();
        let loaded = load_agent(&path).unwrap();
        assert_eq!(loaded.params, params);
        assert_eq!(loaded.config_hash, "abc");
        for ((_, a), (_, b)) in params.networks().iter().zip(loaded.params.networks().iter()) {
            for (x, y) in a.tensors().iter().zip(b.tensors()) {
                for (u, v) in x.iter().zip(y) {
                    assert_eq!(u.to_bits(), v.to_bits());
                }
            }
        }
    }

    #[test]
    fn capacity_mismatch_rejected_and_hash_mismatch_warns() {
        let params = AgentParams::new(2, &[4], 1).unwrap();
        let ck = from_json(&to_json(&params, "h1").unwrap()).unwrap();
        assert!(matches!(
            ck.check_compatible(3, None),
            Err(Error::IncompatibleCheckpoint(_))
        ));
        assert!(ck.check_compatible(2, Some("h1")).unwrap());
        assert!(!ck.check_compatible(2, Some("h2")).unwrap());
    }

    #[test]
    fn malformed_files_rejected() {
        let params = AgentParams::new(2, &[4], 1).unwrap();
        let good = to_json(&params, "h").unwrap();
        assert!(from_json("").is_err());
        assert!(from_json("{}").is_err());
        assert!(from_json(&good.replace("\"version\":1", "\"version\":2")).is_err());
        assert!(from_json(&good.replace("\"capacity\":2", "\"capacity\":3")).is_err());
        assert!(from_json(&good.replace("\"critic1\"", "\"criticX\"")).is_err());
    }
}
