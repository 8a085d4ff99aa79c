use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use safetensors::tensor::{Dtype, SafeTensors, TensorView};

use super::{Refiner, RefinerConfig};
use crate::error::{DotError, Result};
use crate::io::write_atomic;
use crate::nn::{ParamStore, Tensor};

const FORMAT: &str = "dot-refiner-v1";
/// Single metadata key; one entry keeps the header bytes independent of map order.
const META_KEY: &str = "dot";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    fingerprint: String,
    config: RefinerConfig,
}

impl Refiner {
    /// Serialize weights, config and fingerprint to safetensors bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let raw: Vec<(String, Vec<usize>, Vec<u8>)> = self
            .params()
            .iter()
            .map(|(name, t)| {
                let bytes = t.data.iter().flat_map(|v| v.to_le_bytes()).collect();
                (name.to_string(), t.shape.to_vec(), bytes)
            })
            .collect();
        let views = raw
            .iter()
            .map(|(name, shape, bytes)| {
                TensorView::new(Dtype::F32, shape.clone(), bytes)
                    .map(|v| (name.clone(), v))
                    .map_err(|e| DotError::Invalid(format!("tensor {name}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let header = Header {
            format: FORMAT.to_string(),
            fingerprint: self.config().fingerprint(),
            config: self.config().clone(),
        };
        let meta = HashMap::from([(META_KEY.to_string(), serde_json::to_string(&header)?)]);
        safetensors::serialize(views, Some(meta)).map_err(|e| DotError::Invalid(format!("serialize: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes()?)
    }

    /// Parse a checkpoint. With `expected`, the stored fingerprint must match it.
    pub fn from_bytes(bytes: &[u8], expected: Option<&RefinerConfig>, origin: &Path) -> Result<Self> {
        let bad = |reason: String| DotError::format(origin, reason);
        let (_, header) = SafeTensors::read_metadata(bytes).map_err(|e| bad(e.to_string()))?;
        let meta = header
            .metadata()
            .as_ref()
            .ok_or_else(|| bad("checkpoint has no metadata".into()))?;
        let header: Header = meta
            .get(META_KEY)
            .and_then(|h| serde_json::from_str(h).ok())
            .filter(|h: &Header| h.format == FORMAT)
            .ok_or_else(|| bad("not a refiner checkpoint".into()))?;
        let Header {
            fingerprint: stored,
            config,
            ..
        } = header;
        if stored != config.fingerprint() {
            return Err(DotError::Config(format!(
                "fingerprint {stored} does not match the stored config ({})",
                config.fingerprint()
            )));
        }
        if let Some(exp) = expected {
            if exp.fingerprint() != stored {
                return Err(DotError::Config(format!(
                    "checkpoint fingerprint {stored} differs from the requested config ({})",
                    exp.fingerprint()
                )));
            }
        }
        let st = SafeTensors::deserialize(bytes).map_err(|e| bad(e.to_string()))?;
        let mut params = ParamStore::new();
        for (name, shape) in super::param_shapes(&config) {
            let view = st
                .tensor(&name)
                .map_err(|_| DotError::Config(format!("checkpoint is missing {name}")))?;
            if view.dtype() != Dtype::F32 || view.shape() != shape {
                return Err(DotError::Config(format!(
                    "{name}: stored {:?} {:?}, expected F32 {shape:?}",
                    view.dtype(),
                    view.shape()
                )));
            }
            let data = view
                .data()
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            params.insert(name, Tensor::from_vec(shape, data));
        }
        Refiner::from_params(config, params)
    }

    pub fn load(path: impl AsRef<Path>, expected: Option<&RefinerConfig>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| DotError::io(path, e))?;
        Refiner::from_bytes(&bytes, expected, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let r = Refiner::new(RefinerConfig::gradient_check(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.safetensors");
        r.save(&path).unwrap();
        let back = Refiner::load(&path, Some(r.config())).unwrap();
        assert_eq!(back.config(), r.config());
        for ((na, ta), (nb, tb)) in r.params().iter().zip(back.params().iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta, tb);
        }
    }

    #[test]
    fn bytes_are_stable() {
        let r = Refiner::new(RefinerConfig::gradient_check(), 5).unwrap();
        let a = r.to_bytes().unwrap();
        for _ in 0..8 {
            assert_eq!(Refiner::new(RefinerConfig::gradient_check(), 5).unwrap().to_bytes().unwrap(), a);
        }
    }

    #[test]
    fn fingerprint_mismatch_is_rejected() {
        let r = Refiner::new(RefinerConfig::gradient_check(), 5).unwrap();
        let bytes = r.to_bytes().unwrap();
        let other = RefinerConfig::gradient_check().with_iterations(3);
        let err = Refiner::from_bytes(&bytes, Some(&other), Path::new("w")).unwrap_err();
        assert!(matches!(err, DotError::Config(_)));
    }

    #[test]
    fn garbage_is_a_format_error() {
        let err = Refiner::from_bytes(b"not safetensors", None, Path::new("w")).unwrap_err();
        assert!(matches!(err, DotError::Format { .. }));
    }
}
