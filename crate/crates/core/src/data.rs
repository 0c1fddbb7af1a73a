//! Synthetic multi-modal segmentation scenes and their on-disk format.
//!
//! Labels are a Voronoi partition of random sites. The `photo` modality paints
//! each class with a fixed palette colour but is grayed out on random
//! rectangles covering a configurable fraction of the image; `range` encodes
//! the class id as a level; `edge` marks class boundaries. Values are rounded
//! to `f32` at generation so files round-trip exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{ModalitySpec, IGNORE_LABEL};
use crate::rng::{derive_seed, Stream};
use crate::tensor::Tensor;

pub const MANIFEST: &str = "manifest.json";
const FORMAT: &str = "fisherseg-dataset";
const MAX_MASK_RECTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("unknown modality `{0}`")]
    UnknownModality(String),
    #[error("cannot drop every modality")]
    DropAll,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed manifest: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error("{path}: expected {expected} bytes, found {got}")]
    BlobSize { path: PathBuf, expected: usize, got: usize },
    #[error("{path}: label {label} outside 0..{classes} and not the ignore label")]
    BadLabel { path: PathBuf, label: u8, classes: usize },
    #[error("samples disagree on layout: {0}")]
    Inconsistent(String),
}

type Result<T> = std::result::Result<T, DataError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityNoise {
    pub name: String,
    pub channels: usize,
    pub noise_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub sites: usize,
    pub modalities: Vec<ModalityNoise>,
    pub dominance_mask_fraction: f64,
    pub boundary_band: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let m = |name: &str, channels| ModalityNoise {
            name: name.into(),
            channels,
            noise_sigma: 0.05,
        };
        Self {
            height: 64,
            width: 64,
            classes: 6,
            sites: 8,
            modalities: vec![m("photo", 3), m("range", 1), m("edge", 1)],
            dominance_mask_fraction: 0.5,
            boundary_band: 1,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DataError::InvalidConfig(msg));
        if self.height == 0 || self.width == 0 {
            return bad(format!("height/width: must be positive, got {}x{}", self.height, self.width));
        }
        if self.classes < 2 || self.classes > 255 {
            return bad(format!("classes: must be in 2..=255, got {}", self.classes));
        }
        if self.sites == 0 {
            return bad("sites: must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.dominance_mask_fraction) {
            return bad(format!(
                "dominance_mask_fraction: must be in [0, 1], got {}",
                self.dominance_mask_fraction
            ));
        }
        if self.modalities.is_empty() {
            return bad("modalities: at least one is required".into());
        }
        for (i, m) in self.modalities.iter().enumerate() {
            if m.channels == 0 {
                return bad(format!("modalities[{i}].channels: must be positive"));
            }
            if !(m.noise_sigma >= 0.0 && m.noise_sigma.is_finite()) {
                return bad(format!("modalities[{i}].noise_sigma: must be >= 0, got {}", m.noise_sigma));
            }
            if !matches!(m.name.as_str(), "photo" | "range" | "edge") {
                return bad(format!(
                    "modalities[{i}].name: `{}` is not one of photo, range, edge",
                    m.name
                ));
            }
            if self.modalities[..i].iter().any(|o| o.name == m.name) {
                return bad(format!("modalities[{i}].name: duplicate `{}`", m.name));
            }
        }
        Ok(())
    }

    pub fn specs(&self) -> Vec<ModalitySpec> {
        self.modalities
            .iter()
            .map(|m| ModalitySpec::new(&m.name, m.channels))
            .collect()
    }
}

/// One modality's `(channels, H, W)` values.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityArray {
    pub name: String,
    pub channels: usize,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiModalSample {
    pub height: usize,
    pub width: usize,
    pub modalities: Vec<ModalityArray>,
    /// `(H, W)` class ids, `255` = ignore.
    pub labels: Vec<u8>,
}

impl MultiModalSample {
    pub fn modality(&self, name: &str) -> Option<&ModalityArray> {
        self.modalities.iter().find(|m| m.name == name)
    }
}

/// Per-class colours of the `photo` modality, fixed by the run seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Palette {
    colors: Vec<Vec<f64>>,
}

impl Palette {
    /// Colours in `[0.1, 0.9]^channels`, redrawn (a bounded number of times)
    /// until every pair is at least 0.3 apart.
    pub fn new(run_seed: u64, classes: usize, channels: usize) -> Self {
        let mut rng = Stream::new(derive_seed(run_seed, u64::MAX));
        let draw = |rng: &mut Stream| -> Vec<f64> { (0..channels).map(|_| 0.1 + 0.8 * rng.uniform()).collect() };
        let mut colors: Vec<Vec<f64>> = Vec::with_capacity(classes);
        for _ in 0..classes {
            let mut c = draw(&mut rng);
            for _ in 0..1000 {
                if colors.iter().all(|o| dist(o, &c) >= 0.3) {
                    break;
                }
                c = draw(&mut rng);
            }
            colors.push(c);
        }
        Self { colors }
    }

    pub fn color(&self, class: usize) -> &[f64] {
        &self.colors[class]
    }

    /// Class whose colour is nearest to `value` (lowest index on ties).
    pub fn nearest(&self, value: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (k, c) in self.colors.iter().enumerate() {
            let d = dist(c, value);
            if d < best.0 {
                best = (d, k);
            }
        }
        best.1
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Pixels with a differently labelled pixel within Chebyshev distance `band`.
fn near_boundary(labels: &[u8], h: usize, w: usize, band: usize) -> Vec<bool> {
    let mut out = vec![false; h * w];
    if band == 0 {
        return out;
    }
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            let (y0, y1) = (y.saturating_sub(band), (y + band).min(h - 1));
            let (x0, x1) = (x.saturating_sub(band), (x + band).min(w - 1));
            out[y * w + x] = (y0..=y1).any(|yy| (x0..=x1).any(|xx| labels[yy * w + xx] != l));
        }
    }
    out
}

/// Random rectangles until at least `fraction` of the image is covered.
/// Each rectangle gets its own gray level.
fn gray_mask(rng: &mut Stream, h: usize, w: usize, fraction: f64) -> Vec<Option<f64>> {
    let mut mask = vec![None; h * w];
    if fraction <= 0.0 {
        return mask;
    }
    if fraction >= 1.0 {
        let level = 0.3 + 0.4 * rng.uniform();
        return vec![Some(level); h * w];
    }
    let target = (fraction * (h * w) as f64).ceil() as usize;
    let mut covered = 0;
    let (min_h, min_w) = ((h / 8).max(1), (w / 8).max(1));
    let (max_h, max_w) = ((h / 2).max(min_h), (w / 2).max(min_w));
    for _ in 0..MAX_MASK_RECTS {
        if covered >= target {
            break;
        }
        let rh = min_h + rng.below((max_h - min_h + 1) as u64) as usize;
        let rw = min_w + rng.below((max_w - min_w + 1) as u64) as usize;
        let top = rng.below((h - rh + 1) as u64) as usize;
        let left = rng.below((w - rw + 1) as u64) as usize;
        let level = 0.3 + 0.4 * rng.uniform();
        for y in top..top + rh {
            for x in left..left + rw {
                let cell = &mut mask[y * w + x];
                if cell.is_none() {
                    covered += 1;
                }
                *cell = Some(level);
            }
        }
    }
    mask
}

/// Draws one scene. Randomness is consumed in a fixed order: site positions
/// and classes, the gray mask, then per-modality noise in config order.
pub fn generate_sample(rng: &mut Stream, palette: &Palette, config: &SceneConfig) -> MultiModalSample {
    let (h, w, k) = (config.height, config.width, config.classes);
    let sites: Vec<(f64, f64, u8)> = (0..config.sites)
        .map(|_| {
            let y = rng.uniform() * h as f64;
            let x = rng.uniform() * w as f64;
            (y, x, rng.below(k as u64) as u8)
        })
        .collect();
    let mut classes = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
            let mut best = (f64::INFINITY, 0u8);
            for &(sy, sx, c) in &sites {
                let d = (py - sy) * (py - sy) + (px - sx) * (px - sx);
                if d < best.0 {
                    best = (d, c);
                }
            }
            classes[y * w + x] = best.1;
        }
    }
    let edge_map = near_boundary(&classes, h, w, 1);
    let band = near_boundary(&classes, h, w, config.boundary_band);
    let labels = classes
        .iter()
        .zip(&band)
        .map(|(&c, &b)| if b { IGNORE_LABEL } else { c })
        .collect();
    let mask = gray_mask(rng, h, w, config.dominance_mask_fraction);

    let modalities = config
        .modalities
        .iter()
        .map(|m| {
            let mut data = Vec::with_capacity(m.channels * h * w);
            for ch in 0..m.channels {
                for p in 0..h * w {
                    let class = classes[p] as usize;
                    let clean = match m.name.as_str() {
                        "photo" => mask[p].unwrap_or_else(|| palette.color(class)[ch % palette.color(class).len()]),
                        "range" => class as f64 / (k - 1) as f64,
                        _ => f64::from(u8::from(edge_map[p])),
                    };
                    let noisy = if m.noise_sigma > 0.0 {
                        clean + m.noise_sigma * rng.normal()
                    } else {
                        clean
                    };
                    data.push(noisy.clamp(0.0, 1.0) as f32);
                }
            }
            ModalityArray {
                name: m.name.clone(),
                channels: m.channels,
                data,
            }
        })
        .collect();
    MultiModalSample {
        height: h,
        width: w,
        modalities,
        labels,
    }
}

/// Samples `first..first + count` of the run, each from its own derived seed.
pub fn generate_range(run_seed: u64, config: &SceneConfig, first: u64, count: usize) -> Result<Vec<MultiModalSample>> {
    config.validate()?;
    let channels = config
        .modalities
        .iter()
        .find(|m| m.name == "photo")
        .map_or(1, |m| m.channels);
    let palette = Palette::new(run_seed, config.classes, channels);
    Ok((first..first + count as u64)
        .map(|k| generate_sample(&mut Stream::new(derive_seed(run_seed, k)), &palette, config))
        .collect())
}

/// Replaces the arrays of `drop` with zeros.
pub fn corrupt(sample: &MultiModalSample, drop: &[String]) -> Result<MultiModalSample> {
    for d in drop {
        if sample.modality(d).is_none() {
            return Err(DataError::UnknownModality(d.clone()));
        }
    }
    if sample.modalities.iter().all(|m| drop.contains(&m.name)) {
        return Err(DataError::DropAll);
    }
    let mut out = sample.clone();
    for m in &mut out.modalities {
        if drop.contains(&m.name) {
            m.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(out)
}

/// A stacked mini-batch: per-modality `(B, C, H, W)` tensors and `(B, H, W)` labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: BTreeMap<String, Tensor>,
    pub labels: Vec<u8>,
    pub size: usize,
}

impl Batch {
    pub fn from_samples(samples: &[&MultiModalSample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| DataError::Inconsistent("empty batch".into()))?;
        let mut inputs = BTreeMap::new();
        for m in &first.modalities {
            let mut data = Vec::with_capacity(samples.len() * m.data.len());
            for s in samples {
                let other = s
                    .modality(&m.name)
                    .filter(|o| o.data.len() == m.data.len())
                    .ok_or_else(|| DataError::Inconsistent(format!("modality `{}`", m.name)))?;
                data.extend(other.data.iter().map(|&v| f64::from(v)));
            }
            let shape = [samples.len(), m.channels, first.height, first.width];
            let t = Tensor::new(&shape, data).map_err(|e| DataError::Inconsistent(e.to_string()))?;
            inputs.insert(m.name.clone(), t);
        }
        let mut labels = Vec::with_capacity(samples.len() * first.labels.len());
        for s in samples {
            if s.labels.len() != first.labels.len() {
                return Err(DataError::Inconsistent("label map sizes".into()));
            }
            labels.extend_from_slice(&s.labels);
        }
        Ok(Self {
            inputs,
            labels,
            size: samples.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ManifestModality {
    name: String,
    shape: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SampleFiles {
    labels: String,
    modalities: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format: String,
    count: usize,
    height: usize,
    width: usize,
    classes: usize,
    dtype: String,
    label_dtype: String,
    modalities: Vec<ManifestModality>,
    samples: Vec<SampleFiles>,
}

/// A dataset as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub classes: usize,
    pub samples: Vec<MultiModalSample>,
}

impl Dataset {
    pub fn specs(&self) -> Vec<ModalitySpec> {
        self.samples
            .first()
            .map(|s| {
                s.modalities
                    .iter()
                    .map(|m| ModalitySpec::new(&m.name, m.channels))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// SHA-256 over every label and value (little-endian) in sample order.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.samples {
            for m in &s.modalities {
                h.update(m.name.as_bytes());
                for v in &m.data {
                    h.update(v.to_le_bytes());
                }
            }
            h.update(&s.labels);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let first = dataset
        .samples
        .first()
        .ok_or_else(|| DataError::Inconsistent("no samples to write".into()))?;
    let modalities: Vec<ManifestModality> = first
        .modalities
        .iter()
        .map(|m| ManifestModality {
            name: m.name.clone(),
            shape: [m.channels, first.height, first.width],
        })
        .collect();
    let mut files = Vec::with_capacity(dataset.samples.len());
    for (k, s) in dataset.samples.iter().enumerate() {
        if s.height != first.height || s.width != first.width || s.modalities.len() != modalities.len() {
            return Err(DataError::Inconsistent(format!("sample {k}")));
        }
        let mut entry = SampleFiles {
            labels: format!("{k:06}.labels.u8"),
            modalities: BTreeMap::new(),
        };
        let path = dir.join(&entry.labels);
        fs::write(&path, &s.labels).map_err(io_err(&path))?;
        for (m, spec) in s.modalities.iter().zip(&modalities) {
            if m.name != spec.name || m.data.len() != spec.shape.iter().product::<usize>() {
                return Err(DataError::Inconsistent(format!("sample {k}, modality `{}`", m.name)));
            }
            let name = format!("{k:06}.{}.f32", m.name);
            let bytes: Vec<u8> = m.data.iter().flat_map(|v| v.to_le_bytes()).collect();
            let path = dir.join(&name);
            fs::write(&path, bytes).map_err(io_err(&path))?;
            entry.modalities.insert(m.name.clone(), name);
        }
        files.push(entry);
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        count: dataset.samples.len(),
        height: first.height,
        width: first.width,
        classes: dataset.classes,
        dtype: "f32le".into(),
        label_dtype: "u8".into(),
        modalities,
        samples: files,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

fn read_blob(path: &Path, expected: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() != expected {
        return Err(DataError::BlobSize {
            path: path.to_path_buf(),
            expected,
            got: bytes.len(),
        });
    }
    Ok(bytes)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let malformed = |msg: String| DataError::Manifest {
        path: path.clone(),
        msg,
    };
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    if manifest.format != FORMAT || manifest.dtype != "f32le" || manifest.label_dtype != "u8" {
        return Err(malformed("unsupported format or dtype".into()));
    }
    if manifest.count != manifest.samples.len() {
        return Err(malformed(format!(
            "count {} but {} sample entries",
            manifest.count,
            manifest.samples.len()
        )));
    }
    let (h, w) = (manifest.height, manifest.width);
    for m in &manifest.modalities {
        if m.shape[1] != h || m.shape[2] != w || m.shape[0] == 0 {
            return Err(malformed(format!(
                "modality `{}` has shape {:?}, expected (C, {h}, {w})",
                m.name, m.shape
            )));
        }
    }
    let mut samples = Vec::with_capacity(manifest.count);
    for entry in &manifest.samples {
        let lpath = dir.join(&entry.labels);
        let labels = read_blob(&lpath, h * w)?;
        if let Some(&label) = labels
            .iter()
            .find(|&&l| l != IGNORE_LABEL && l as usize >= manifest.classes)
        {
            return Err(DataError::BadLabel {
                path: lpath,
                label,
                classes: manifest.classes,
            });
        }
        let mut modalities = Vec::with_capacity(manifest.modalities.len());
        for m in &manifest.modalities {
            let file = entry
                .modalities
                .get(&m.name)
                .ok_or_else(|| malformed(format!("sample entry lacks modality `{}`", m.name)))?;
            let n: usize = m.shape.iter().product();
            let bpath = dir.join(file);
            let bytes = read_blob(&bpath, 4 * n)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            modalities.push(ModalityArray {
                name: m.name.clone(),
                channels: m.shape[0],
                data,
            });
        }
        samples.push(MultiModalSample {
            height: h,
            width: w,
            modalities,
            labels,
        });
    }
    Ok(Dataset {
        classes: manifest.classes,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(config: &SceneConfig, seed: u64) -> MultiModalSample {
        generate_range(seed, config, 0, 1).unwrap().remove(0)
    }

    #[test]
    fn noiseless_photo_recovers_class() {
        let config = SceneConfig {
            dominance_mask_fraction: 0.0,
            modalities: SceneConfig::default()
                .modalities
                .into_iter()
                .map(|m| ModalityNoise { noise_sigma: 0.0, ..m })
                .collect(),
            ..SceneConfig::default()
        };
        let palette = Palette::new(3, config.classes, 3);
        for s in generate_range(3, &config, 0, 4).unwrap() {
            let photo = s.modality("photo").unwrap();
            let hw = s.height * s.width;
            for (p, &l) in s.labels.iter().enumerate() {
                if l == IGNORE_LABEL {
                    continue;
                }
                let v: Vec<f64> = (0..3).map(|c| f64::from(photo.data[c * hw + p])).collect();
                assert_eq!(palette.nearest(&v), l as usize);
            }
        }
    }

    #[test]
    fn single_site_has_no_edges() {
        let config = SceneConfig {
            sites: 1,
            modalities: vec![ModalityNoise {
                name: "edge".into(),
                channels: 1,
                noise_sigma: 0.0,
            }],
            ..SceneConfig::default()
        };
        let s = sample(&config, 1);
        assert!(s.modality("edge").unwrap().data.iter().all(|&v| v == 0.0));
        let first = s.labels[0];
        assert!(s.labels.iter().all(|&l| l == first && l != IGNORE_LABEL));
    }

    #[test]
    fn labels_in_range_and_values_in_unit_interval() {
        let config = SceneConfig::default();
        for s in generate_range(5, &config, 0, 3).unwrap() {
            assert!(s.labels.iter().all(|&l| l == IGNORE_LABEL || (l as usize) < config.classes));
            for m in &s.modalities {
                assert!(m.data.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let config = SceneConfig::default();
        assert_eq!(generate_range(9, &config, 4, 2).unwrap(), generate_range(9, &config, 4, 2).unwrap());
        assert_ne!(sample(&config, 9), sample(&config, 10));
    }

    #[test]
    fn mask_fraction_is_reached() {
        let mut rng = Stream::new(4);
        for fraction in [0.25, 0.5, 0.9] {
            let m = gray_mask(&mut rng, 64, 64, fraction);
            let covered = m.iter().filter(|c| c.is_some()).count() as f64 / 4096.0;
            assert!(covered >= fraction && covered < fraction + 0.3, "{fraction}: {covered}");
        }
        assert!(gray_mask(&mut rng, 8, 8, 1.0).iter().all(Option::is_some));
        assert!(gray_mask(&mut rng, 8, 8, 0.0).iter().all(Option::is_none));
    }

    #[test]
    fn corrupt_cases() {
        let s = sample(&SceneConfig::default(), 2);
        assert_eq!(corrupt(&s, &[]).unwrap(), s);
        let drop = vec!["photo".to_string()];
        let c = corrupt(&s, &drop).unwrap();
        assert!(c.modality("photo").unwrap().data.iter().all(|&v| v == 0.0));
        assert_eq!(c.modality("range"), s.modality("range"));
        assert_eq!(c.modality("edge"), s.modality("edge"));
        assert_eq!(c.labels, s.labels);
        assert_eq!(corrupt(&c, &drop).unwrap(), c);
        let all: Vec<String> = ["photo", "range", "edge"].iter().map(|s| s.to_string()).collect();
        assert!(matches!(corrupt(&s, &all), Err(DataError::DropAll)));
        assert!(matches!(corrupt(&s, &["lidar".into()]), Err(DataError::UnknownModality(_))));
    }

    #[test]
    fn config_validation_names_fields() {
        let c = SceneConfig {
            classes: 0,
            ..SceneConfig::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("classes"));
        let c = SceneConfig {
            dominance_mask_fraction: 1.5,
            ..SceneConfig::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("dominance_mask_fraction"));
        let mut c = SceneConfig::default();
        c.modalities[1].noise_sigma = -1.0;
        assert!(c.validate().unwrap_err().to_string().contains("noise_sigma"));
    }

    #[test]
    fn batch_stacks_samples() {
        let samples = generate_range(1, &SceneConfig::default(), 0, 3).unwrap();
        let refs: Vec<&MultiModalSample> = samples.iter().collect();
        let b = Batch::from_samples(&refs).unwrap();
        assert_eq!(b.inputs["photo"].shape(), &[3, 3, 64, 64]);
        assert_eq!(b.inputs["edge"].shape(), &[3, 1, 64, 64]);
        assert_eq!(b.labels.len(), 3 * 64 * 64);
        assert_eq!(b.inputs["range"].data()[4096], f64::from(samples[1].modality("range").unwrap().data[0]));
    }
}
