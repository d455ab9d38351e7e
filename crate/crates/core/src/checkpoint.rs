//! Trained-model files: a JSON header line followed by every parameter as
//! little-endian f64, score network first.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conditioning::{Emotion, NULL_ROW};
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::schedule::NoiseSchedule;
use crate::score::ToyScoreNet;
use crate::text_prior::TextPriorNet;

const MAGIC: &str = "emotts-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Topology {
    state_dim: usize,
    hidden: usize,
    params: Vec<(String, usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorTopology {
    vocab: usize,
    channels: usize,
    params: Vec<(String, usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    schedule: NoiseSchedule,
    emotions: Vec<Emotion>,
    null_row: usize,
    score_net: Topology,
    text_prior: Option<PriorTopology>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub schedule: NoiseSchedule,
    pub score_net: ToyScoreNet,
    pub text_prior: Option<TextPriorNet>,
}

fn rebuild(shapes: &[(String, usize, usize)], values: &[f64]) -> std::result::Result<ParamStore, String> {
    let mut store = ParamStore::new();
    let mut offset = 0;
    for (name, r, c) in shapes {
        let n = r * c;
        let chunk = values
            .get(offset..offset + n)
            .ok_or("payload shorter than the header's parameter shapes")?;
        store.push(
            name.clone(),
            ndarray::Array2::from_shape_vec((*r, *c), chunk.to_vec()).map_err(|e| e.to_string())?,
        );
        offset += n;
    }
    Ok(store)
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format: MAGIC.into(),
            version: VERSION,
            schedule: self.schedule,
            emotions: Emotion::ALL.to_vec(),
            null_row: NULL_ROW,
            score_net: Topology {
                state_dim: self.score_net.state_dim(),
                hidden: self.score_net.hidden(),
                params: self.score_net.params().shapes(),
            },
            text_prior: self.text_prior.as_ref().map(|tp| PriorTopology {
                vocab: tp.vocab(),
                channels: tp.channels(),
                params: tp.params().shapes(),
            }),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        let values = self
            .score_net
            .params()
            .to_flat()
            .into_iter()
            .chain(self.text_prior.iter().flat_map(|tp| tp.params().to_flat()));
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or("missing header line")?;
        let header: Header =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| format!("bad header: {e}"))?;
        if header.format != MAGIC || header.version != VERSION {
            return Err(format!("unsupported format {} v{}", header.format, header.version));
        }
        if header.emotions != Emotion::ALL || header.null_row != NULL_ROW {
            return Err("emotion inventory differs from this build".into());
        }
        let body = &bytes[nl + 1..];
        if body.len() % 8 != 0 {
            return Err("payload is not a whole number of f64 values".into());
        }
        let values: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let net_len: usize = header.score_net.params.iter().map(|p| p.1 * p.2).sum();
        let prior_len: usize = header
            .text_prior
            .as_ref()
            .map_or(0, |t| t.params.iter().map(|p| p.1 * p.2).sum());
        if values.len() != net_len + prior_len {
            return Err(format!(
                "payload holds {} values, header implies {}",
                values.len(),
                net_len + prior_len
            ));
        }
        let net_store = rebuild(&header.score_net.params, &values[..net_len])?;
        let score_net = ToyScoreNet::from_params(header.score_net.state_dim, header.score_net.hidden, net_store)
            .map_err(|e| e.to_string())?;
        let text_prior = match &header.text_prior {
            Some(t) => {
                let store = rebuild(&t.params, &values[net_len..])?;
                Some(TextPriorNet::from_params(t.vocab, t.channels, store).map_err(|e| e.to_string())?)
            }
            None => None,
        };
        Ok(Self {
            schedule: header.schedule,
            score_net,
            text_prior,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| Error::Format {
            kind: "checkpoint",
            path: path.to_path_buf(),
            reason,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn round_trip_is_exact() {
        let ck = Checkpoint {
            schedule: NoiseSchedule::default(),
            score_net: ToyScoreNet::with_hidden(3, 8, &mut rng::stream(1)),
            text_prior: Some(TextPriorNet::new(5, 3, &mut rng::stream(2)).unwrap()),
        };
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        let plain = Checkpoint {
            text_prior: None,
            ..ck
        };
        assert_eq!(Checkpoint::from_bytes(&plain.to_bytes()).unwrap(), plain);
    }

    #[test]
    fn damaged_files_are_rejected() {
        let ck = Checkpoint {
            schedule: NoiseSchedule::default(),
            score_net: ToyScoreNet::with_hidden(2, 4, &mut rng::stream(1)),
            text_prior: None,
        };
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"{}\n").is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.ckpt");
        std::fs::write(&p, b"nonsense").unwrap();
        assert!(matches!(Checkpoint::read(&p), Err(Error::Format { .. })));
    }
}
