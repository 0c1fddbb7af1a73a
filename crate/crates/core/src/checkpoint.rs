//! Model checkpoints: a magic line, a `key=value` manifest, then the raw
//! little-endian `f64` parameter values in manifest order.
//!
//! ```text
//! FSEGCKPT1
//! classes=6
//! stem_channels=16
//! decoder_channels=32
//! modality=photo:3
//! param=stem.photo.weight:16x3x1x1
//! ...
//! end
//! <data>
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{ModalitySpec, ModelConfig, Params};
use crate::tensor::Tensor;

pub const MAGIC: &str = "FSEGCKPT1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint (missing {MAGIC} header)")]
    Magic,
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("expected {expected} bytes of parameter data, found {got}")]
    DataSize { expected: usize, got: usize },
    #[error("parameters do not match the model: {0}")]
    Layout(String),
}

type Result<T> = std::result::Result<T, CheckpointError>;

/// Serializes `params` for `config`.
pub fn encode(config: &ModelConfig, params: &Params) -> Result<Vec<u8>> {
    params
        .check(config)
        .map_err(|e| CheckpointError::Layout(e.to_string()))?;
    let mut text = format!(
        "{MAGIC}\nclasses={}\nstem_channels={}\ndecoder_channels={}\n",
        config.classes, config.stem_channels, config.decoder_channels
    );
    for m in &config.modalities {
        text += &format!("modality={}:{}\n", m.name, m.channels);
    }
    for (name, shape) in config.param_layout() {
        let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
        text += &format!("param={name}:{}\n", dims.join("x"));
    }
    text += "end\n";
    let mut bytes = text.into_bytes();
    for t in &params.tensors {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(bytes)
}

fn parse_usize(line: usize, key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|_| CheckpointError::Manifest {
        line,
        msg: format!("`{key}` is not a non-negative integer: `{value}`"),
    })
}

/// Parses a checkpoint produced by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<(ModelConfig, Params)> {
    let mut pos = 0;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(if lines.is_empty() {
                CheckpointError::Magic
            } else {
                CheckpointError::Manifest {
                    line: lines.len() + 1,
                    msg: "manifest is not terminated by `end`".into(),
                }
            });
        };
        let line = std::str::from_utf8(&rest[..nl]).map_err(|_| CheckpointError::Manifest {
            line: lines.len() + 1,
            msg: "not valid UTF-8".into(),
        })?;
        pos += nl + 1;
        if lines.is_empty() && line != MAGIC {
            return Err(CheckpointError::Magic);
        }
        if line == "end" {
            break;
        }
        lines.push(line.to_string());
    }

    let mut classes = None;
    let mut stem = None;
    let mut decoder = None;
    let mut modalities = Vec::new();
    let mut layout: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(1) {
        let n = i + 1;
        let bad = |msg: String| CheckpointError::Manifest { line: n, msg };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got `{line}`")))?;
        match key {
            "classes" => classes = Some(parse_usize(n, key, value)?),
            "stem_channels" => stem = Some(parse_usize(n, key, value)?),
            "decoder_channels" => decoder = Some(parse_usize(n, key, value)?),
            "modality" | "param" => {
                let (name, spec) = value
                    .rsplit_once(':')
                    .ok_or_else(|| bad(format!("expected name:spec, got `{value}`")))?;
                if key == "modality" {
                    modalities.push(ModalitySpec::new(name, parse_usize(n, "channels", spec)?));
                } else {
                    let dims = spec
                        .split('x')
                        .map(|d| parse_usize(n, "shape", d))
                        .collect::<Result<Vec<_>>>()?;
                    layout.push((name.to_string(), dims));
                }
            }
            _ => return Err(bad(format!("unknown key `{key}`"))),
        }
    }
    let missing = |key: &str| CheckpointError::Manifest {
        line: lines.len() + 1,
        msg: format!("missing `{key}`"),
    };
    let mut config = ModelConfig::new(modalities, classes.ok_or_else(|| missing("classes"))?);
    config.stem_channels = stem.ok_or_else(|| missing("stem_channels"))?;
    config.decoder_channels = decoder.ok_or_else(|| missing("decoder_channels"))?;
    config
        .validate()
        .map_err(|e| CheckpointError::Layout(e.to_string()))?;
    if layout != config.param_layout() {
        return Err(CheckpointError::Layout(
            "parameter list disagrees with the model configuration".into(),
        ));
    }

    let data = &bytes[pos..];
    let expected = 8 * config.param_count();
    if data.len() != expected {
        return Err(CheckpointError::DataSize {
            expected,
            got: data.len(),
        });
    }
    let mut values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
    let tensors = layout
        .iter()
        .map(|(_, shape)| {
            let n = shape.iter().product();
            Tensor::new(shape, values.by_ref().take(n).collect()).expect("sizes checked")
        })
        .collect();
    Ok((config, Params { tensors }))
}

pub fn save(path: &Path, config: &ModelConfig, params: &Params) -> Result<()> {
    let bytes = encode(config, params)?;
    fs::write(path, bytes).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<(ModelConfig, Params)> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}
