//! Model checkpoints: a versioned JSON container holding the network config
//! and named parameter tensors. Values are written with 17 significant
//! digits, so `load(save(net))` reproduces outputs bitwise.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{Network, NetworkConfig};
use super::real::Real;
use super::sgd::Parameter;
use super::NnError;

pub const CHECKPOINT_SCHEMA: &str = "radcam-net/1";

#[derive(Serialize, Deserialize)]
struct WireParam {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct WireCheckpoint {
    schema: String,
    config: NetworkConfig,
    params: Vec<WireParam>,
}

struct Fixed17;

impl serde_json::ser::Formatter for Fixed17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

pub fn save<T: Real>(net: &Network<T>, path: &Path) -> Result<(), NnError> {
    let wire = WireCheckpoint {
        schema: CHECKPOINT_SCHEMA.to_string(),
        config: net.config.clone(),
        params: net
            .params
            .iter()
            .map(|p| WireParam {
                name: p.name.clone(),
                shape: p.shape.clone(),
                data: p.value.iter().map(|v| v.to_f64()).collect(),
            })
            .collect(),
    };
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed17);
    wire.serialize(&mut ser).expect("in-memory serialization");
    buf.push(b'\n');
    let mut file = std::fs::File::create(path).map_err(|e| NnError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    file.write_all(&buf).map_err(|e| NnError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load<T: Real>(path: &Path) -> Result<Network<T>, NnError> {
    let text = std::fs::read_to_string(path).map_err(|e| NnError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let wire: WireCheckpoint = serde_json::from_str(&text).map_err(|e| NnError::Checkpoint {
        msg: format!("unreadable checkpoint: {e}"),
    })?;
    if wire.schema != CHECKPOINT_SCHEMA {
        return Err(NnError::Checkpoint {
            msg: format!("schema `{}`, expected `{CHECKPOINT_SCHEMA}`", wire.schema),
        });
    }
    let fresh: Network<T> = Network::new(wire.config.clone())?;
    if wire.params.len() != fresh.params.len() {
        return Err(NnError::Checkpoint {
            msg: format!(
                "{} parameters, architecture needs {}",
                wire.params.len(),
                fresh.params.len()
            ),
        });
    }
    let mut params = Vec::with_capacity(wire.params.len());
    for (got, want) in wire.params.into_iter().zip(&fresh.params) {
        if got.name != want.name || got.shape != want.shape {
            return Err(NnError::Checkpoint {
                msg: format!(
                    "parameter `{}` {:?} does not match architecture `{}` {:?}",
                    got.name, got.shape, want.name, want.shape
                ),
            });
        }
        if got.data.len() != want.value.len() {
            return Err(NnError::Checkpoint {
                msg: format!("parameter `{}` has {} values", got.name, got.data.len()),
            });
        }
        params.push(Parameter::new(
            got.name,
            got.shape,
            got.data.into_iter().map(T::from_f64).collect(),
        ));
    }
    Ok(Network {
        config: wire.config,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::tensor::Tensor;

    #[test]
    fn roundtrip_reproduces_outputs_bitwise() {
        let cfg = NetworkConfig {
            base_channels: 4,
            out_channels: 4,
            weight_init_seed: 3,
            ..NetworkConfig::default()
        };
        let net: Network<f32> = Network::new(cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save(&net, &path).unwrap();
        let loaded: Network<f32> = load(&path).unwrap();
        let data: Vec<f32> = (0..14 * 16 * 16).map(|i| (i as f32 * 0.11).cos()).collect();
        let input = Tensor::from_vec(vec![14, 16, 16], data).unwrap();
        let a = net.infer(&input).unwrap().to_vec();
        let b = loaded.infer(&input).unwrap().to_vec();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn mismatched_architecture_rejected() {
        let cfg = NetworkConfig {
            base_channels: 4,
            out_channels: 4,
            ..NetworkConfig::default()
        };
        let net: Network<f32> = Network::new(cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save(&net, &path).unwrap();
        // Corrupt a parameter name.
        let text = std::fs::read_to_string(&path).unwrap();
        let text = text.replacen("stem.w", "mets.w", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load::<f32>(&path),
            Err(NnError::Checkpoint { .. })
        ));
    }
}
