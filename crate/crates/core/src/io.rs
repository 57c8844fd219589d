//! On-disk formats. Everything is JSON; numeric arrays are stored as tensor
//! envelopes `{version, dims, dtype: "f64", data}` where `data` is the
//! base64 encoding of the little-endian array, so values round-trip bit for
//! bit. Writes go to a temporary sibling file that is renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::autoencoder::{Autoencoder, EpochRecord, LatentEmbedding, ModelConfig, TrainConfig};
use crate::features::{FeatureDataset, MultiHopFeature};
use crate::graph::{GyralNet, NodeRecord};
use crate::kan::{GridSpec, KanLayer, SplineGrid};
use crate::struct_sim::SimilarityMatrix;
use crate::synth::GroundTruth;

/// Major version written by this build; anything newer is rejected.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {msg}")]
    Json { path: PathBuf, msg: String },
    #[error("{path}: format version {found} is newer than supported version {FORMAT_VERSION}")]
    Version { path: PathBuf, found: u32 },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl IoError {
    fn format(path: &Path, msg: impl std::fmt::Display) -> Self {
        IoError::Format {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn default_version() -> u32 {
    FORMAT_VERSION
}

fn check_version(path: &Path, found: u32) -> Result<(), IoError> {
    if found > FORMAT_VERSION {
        return Err(IoError::Version {
            path: path.to_path_buf(),
            found,
        });
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String, IoError> {
    Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let name = path
        .file_name()
        .ok_or_else(|| IoError::format(path, "not a file path"))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| IoError::Json {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| IoError::Json {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Reads just the `version` field so newer files fail with a clear error
/// even when the rest of their layout changed.
fn read_versioned<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    #[derive(Deserialize)]
    struct Probe {
        #[serde(default = "default_version")]
        version: u32,
    }
    let probe: Probe = read_json(path)?;
    check_version(path, probe.version)?;
    read_json(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    #[serde(default = "default_version")]
    pub version: u32,
    pub dims: Vec<usize>,
    pub dtype: String,
    pub data: String,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, values: &[f64]) -> Self {
        assert_eq!(dims.iter().product::<usize>(), values.len(), "tensor dims do not match data");
        let mut raw = Vec::with_capacity(values.len() * 8);
        for v in values {
            raw.extend_from_slice(&v.to_le_bytes());
        }
        Self {
            version: FORMAT_VERSION,
            dims,
            dtype: "f64".into(),
            data: B64.encode(raw),
        }
    }

    pub fn decode(&self) -> Result<Vec<f64>, String> {
        if self.version > FORMAT_VERSION {
            return Err(format!("tensor version {} is newer than {FORMAT_VERSION}", self.version));
        }
        if self.dtype != "f64" {
            return Err(format!("unsupported dtype {:?}", self.dtype));
        }
        let raw = B64.decode(&self.data).map_err(|e| format!("bad base64: {e}"))?;
        let n: usize = self.dims.iter().product();
        if raw.len() != n * 8 {
            return Err(format!("tensor {:?} needs {} bytes, found {}", self.dims, n * 8, raw.len()));
        }
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    fn decode_at(&self, path: &Path, what: &str) -> Result<Vec<f64>, IoError> {
        self.decode().map_err(|m| IoError::format(path, format!("{what}: {m}")))
    }
}

// ---------------------------------------------------------------- graphs

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    #[serde(default = "default_version")]
    pub version: u32,
    pub subject_id: String,
    pub n_rois: usize,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<[usize; 2]>,
}

impl GraphFile {
    pub fn from_graph(g: &GyralNet) -> Self {
        Self {
            version: FORMAT_VERSION,
            subject_id: g.subject_id().to_owned(),
            n_rois: g.n_rois(),
            nodes: g.nodes().to_vec(),
            edges: g.edges().iter().map(|&(u, v)| [u, v]).collect(),
        }
    }
}

pub fn save_graph(path: &Path, g: &GyralNet) -> Result<(), IoError> {
    write_json(path, &GraphFile::from_graph(g))
}

pub fn load_graph(path: &Path) -> Result<GyralNet, IoError> {
    let f: GraphFile = read_versioned(path)?;
    let edges = f.edges.iter().map(|e| (e[0], e[1])).collect();
    GyralNet::new(f.subject_id, f.n_rois, f.nodes, edges).map_err(|e| IoError::format(path, e))
}

/// Hash of a graph's canonical serialization; keys similarity caches.
pub fn graph_hash(g: &GyralNet) -> String {
    let bytes = serde_json::to_vec(&GraphFile::from_graph(g)).expect("graph serializes");
    sha256_hex(&bytes)
}

/// Every `*.json` graph in `dir`, sorted by file name.
pub fn load_graph_dir(dir: &Path) -> Result<Vec<GyralNet>, IoError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(IoError::format(dir, "no graph files (*.json) found"));
    }
    paths.iter().map(|p| load_graph(p)).collect()
}

// -------------------------------------------------------------- features

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleKey {
    pub subject_id: String,
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeatureFile {
    version: u32,
    hops: usize,
    n_rois: usize,
    samples: Vec<SampleKey>,
    /// `[samples, hops + 1, n_rois]`
    features: Tensor,
}

pub fn save_features(path: &Path, data: &FeatureDataset) -> Result<(), IoError> {
    let mut flat = Vec::with_capacity(data.len() * (data.hops() + 1) * data.n_rois());
    let samples = data
        .samples()
        .iter()
        .map(|s| {
            flat.extend_from_slice(&s.data);
            SampleKey {
                subject_id: s.subject_id.clone(),
                node: s.node,
            }
        })
        .collect();
    let file = FeatureFile {
        version: FORMAT_VERSION,
        hops: data.hops(),
        n_rois: data.n_rois(),
        samples,
        features: Tensor::new(vec![data.len(), data.hops() + 1, data.n_rois()], &flat),
    };
    write_json(path, &file)
}

pub fn load_features(path: &Path) -> Result<FeatureDataset, IoError> {
    let f: FeatureFile = read_versioned(path)?;
    let expected = vec![f.samples.len(), f.hops + 1, f.n_rois];
    if f.features.dims != expected {
        return Err(IoError::format(path, format!("feature dims {:?}, expected {expected:?}", f.features.dims)));
    }
    let flat = f.features.decode_at(path, "features")?;
    let width = (f.hops + 1) * f.n_rois;
    let samples = f
        .samples
        .into_iter()
        .enumerate()
        .map(|(i, key)| MultiHopFeature {
            subject_id: key.subject_id,
            node: key.node,
            hops: f.hops,
            n_rois: f.n_rois,
            data: flat[i * width..(i + 1) * width].to_vec(),
        })
        .collect();
    FeatureDataset::new(f.hops, f.n_rois, samples).map_err(|e| IoError::format(path, e))
}

// ------------------------------------------------------------ embeddings

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EmbeddingFile {
    version: u32,
    latent_width: usize,
    theta_len: usize,
    samples: Vec<SampleKey>,
    delta: Tensor,
    theta: Tensor,
}

pub fn save_embeddings(path: &Path, embs: &[LatentEmbedding]) -> Result<(), IoError> {
    let latent_width = embs.first().map_or(0, |e| e.delta.len());
    let theta_len = embs.first().map_or(0, |e| e.theta.len());
    if embs.iter().any(|e| e.delta.len() != latent_width || e.theta.len() != theta_len) {
        return Err(IoError::format(path, "embeddings have mixed widths"));
    }
    let delta: Vec<f64> = embs.iter().flat_map(|e| e.delta.iter().copied()).collect();
    let theta: Vec<f64> = embs.iter().flat_map(|e| e.theta.iter().copied()).collect();
    let file = EmbeddingFile {
        version: FORMAT_VERSION,
        latent_width,
        theta_len,
        samples: embs
            .iter()
            .map(|e| SampleKey {
                subject_id: e.subject_id.clone(),
                node: e.node,
            })
            .collect(),
        delta: Tensor::new(vec![embs.len(), latent_width], &delta),
        theta: Tensor::new(vec![embs.len(), theta_len], &theta),
    };
    write_json(path, &file)
}

pub fn load_embeddings(path: &Path) -> Result<Vec<LatentEmbedding>, IoError> {
    let f: EmbeddingFile = read_versioned(path)?;
    let n = f.samples.len();
    if f.delta.dims != [n, f.latent_width] || f.theta.dims != [n, f.theta_len] {
        return Err(IoError::format(path, "embedding tensor dims disagree with header"));
    }
    let delta = f.delta.decode_at(path, "delta")?;
    let theta = f.theta.decode_at(path, "theta")?;
    Ok(f.samples
        .into_iter()
        .enumerate()
        .map(|(i, key)| LatentEmbedding {
            subject_id: key.subject_id,
            node: key.node,
            delta: delta[i * f.latent_width..(i + 1) * f.latent_width].to_vec(),
            theta: theta[i * f.theta_len..(i + 1) * f.theta_len].to_vec(),
        })
        .collect())
}

/// Groups embeddings by subject, each list sorted by node id.
pub fn group_by_subject(embs: Vec<LatentEmbedding>) -> BTreeMap<String, Vec<LatentEmbedding>> {
    let mut out: BTreeMap<String, Vec<LatentEmbedding>> = BTreeMap::new();
    for e in embs {
        out.entry(e.subject_id.clone()).or_default().push(e);
    }
    for list in out.values_mut() {
        list.sort_by_key(|e| e.node);
    }
    out
}

// ----------------------------------------------------------- checkpoints

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Autoencoder,
    pub train: Option<TrainConfig>,
    pub seed: u64,
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerFile {
    name: String,
    d_in: usize,
    d_out: usize,
    spline_coef: Tensor,
    base_weight: Tensor,
    spline_weight: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    model: ModelConfig,
    train: Option<TrainConfig>,
    seed: u64,
    epoch: usize,
    history: Vec<EpochRecord>,
    layers: Vec<LayerFile>,
}

const LAYER_NAMES: [&str; 4] = ["phi_roi", "phi_mh", "phi_mh_hat", "phi_roi_hat"];

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), IoError> {
    let layers = ckpt
        .model
        .layers()
        .iter()
        .zip(LAYER_NAMES)
        .map(|(l, name)| {
            let nb = l.grid().num_basis();
            let [coef, base, spline] = l.param_tensors();
            LayerFile {
                name: name.into(),
                d_in: l.d_in(),
                d_out: l.d_out(),
                spline_coef: Tensor::new(vec![l.d_out(), l.d_in(), nb], coef),
                base_weight: Tensor::new(vec![l.d_out(), l.d_in()], base),
                spline_weight: Tensor::new(vec![l.d_out(), l.d_in()], spline),
            }
        })
        .collect();
    let file = CheckpointFile {
        version: FORMAT_VERSION,
        model: *ckpt.model.config(),
        train: ckpt.train,
        seed: ckpt.seed,
        epoch: ckpt.epoch,
        history: ckpt.history.clone(),
        layers,
    };
    write_json(path, &file)
}

fn load_layer(path: &Path, f: &LayerFile, grid: GridSpec) -> Result<KanLayer, IoError> {
    let grid = SplineGrid::new(grid).map_err(|e| IoError::format(path, e))?;
    KanLayer::from_parts(
        f.d_in,
        f.d_out,
        grid,
        f.spline_coef.decode_at(path, &f.name)?,
        f.base_weight.decode_at(path, &f.name)?,
        f.spline_weight.decode_at(path, &f.name)?,
    )
    .map_err(|e| IoError::format(path, format!("{}: {e}", f.name)))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, IoError> {
    let f: CheckpointFile = read_versioned(path)?;
    let names: Vec<&str> = f.layers.iter().map(|l| l.name.as_str()).collect();
    if names != LAYER_NAMES {
        return Err(IoError::format(path, format!("expected layers {LAYER_NAMES:?}, found {names:?}")));
    }
    let layers = [
        load_layer(path, &f.layers[0], f.model.grid)?,
        load_layer(path, &f.layers[1], f.model.grid)?,
        load_layer(path, &f.layers[2], f.model.grid)?,
        load_layer(path, &f.layers[3], f.model.grid)?,
    ];
    let model = Autoencoder::from_layers(f.model, layers).map_err(|e| IoError::format(path, e))?;
    Ok(Checkpoint {
        model,
        train: f.train,
        seed: f.seed,
        epoch: f.epoch,
        history: f.history,
    })
}

// ---------------------------------------------------------- ground truth

pub fn save_truth(path: &Path, truth: &GroundTruth) -> Result<(), IoError> {
    write_json(path, truth)
}

pub fn load_truth(path: &Path) -> Result<GroundTruth, IoError> {
    read_json(path)
}

// ------------------------------------------------------ similarity cache

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SimilarityFile {
    version: u32,
    graph_sha256: String,
    k: usize,
    n: usize,
    pairs: Vec<[usize; 2]>,
    values: Tensor,
}

pub fn save_similarity(path: &Path, graph_sha256: &str, sim: &SimilarityMatrix) -> Result<(), IoError> {
    let values: Vec<f64> = sim.entries().iter().map(|e| e.1).collect();
    let file = SimilarityFile {
        version: FORMAT_VERSION,
        graph_sha256: graph_sha256.to_owned(),
        k: sim.k(),
        n: sim.n(),
        pairs: sim.entries().iter().map(|e| [e.0 .0, e.0 .1]).collect(),
        values: Tensor::new(vec![values.len()], &values),
    };
    write_json(path, &file)
}

/// Cached `S_k`, or `None` if the file is missing or was computed for a
/// different graph or hop.
pub fn load_similarity(path: &Path, graph_sha256: &str, k: usize) -> Result<Option<SimilarityMatrix>, IoError> {
    if !path.exists() {
        return Ok(None);
    }
    let f: SimilarityFile = read_versioned(path)?;
    if f.graph_sha256 != graph_sha256 || f.k != k {
        return Ok(None);
    }
    let values = f.values.decode_at(path, "values")?;
    if values.len() != f.pairs.len() {
        return Err(IoError::format(path, "pair and value counts differ"));
    }
    let entries = f.pairs.iter().zip(values).map(|(p, v)| ((p[0], p[1]), v)).collect();
    Ok(Some(SimilarityMatrix::new(f.k, f.n, entries)))
}

// -------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(default = "default_version")]
    pub version: u32,
    pub command: String,
    pub config: serde_json::Value,
    /// Input path → sha256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::Autoencoder;
    use crate::features::encode_population;
    use crate::graph::test_graphs::random;
    use crate::struct_sim::HopCache;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn tensor_is_bit_exact() {
        let vals = [0.1, -0.0, f64::MIN_POSITIVE, 1e308, -3.5e-300, std::f64::consts::PI];
        let t = Tensor::new(vec![2, 3], &vals);
        let back = t.decode().unwrap();
        for (a, b) in vals.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let mut bad = t.clone();
        bad.dims = vec![7];
        assert!(bad.decode().is_err());
        let mut bad = t;
        bad.dtype = "f32".into();
        assert!(bad.decode().is_err());
    }

    #[test]
    fn graph_round_trip_and_hash() {
        let dir = tmp();
        let g = random(20, 0.2, 4, 3);
        let p = dir.path().join("g.json");
        save_graph(&p, &g).unwrap();
        assert_eq!(load_graph(&p).unwrap(), g);
        assert_eq!(graph_hash(&g), graph_hash(&load_graph(&p).unwrap()));
        assert_ne!(graph_hash(&g), graph_hash(&random(20, 0.2, 4, 4)));
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"subject_id\"") && text.contains("\"edges\""));
    }

    #[test]
    fn newer_version_fails_loudly() {
        let dir = tmp();
        let p = dir.path().join("g.json");
        save_graph(&p, &random(5, 0.5, 2, 0)).unwrap();
        let text = fs::read_to_string(&p).unwrap().replacen("\"version\": 1", "\"version\": 2", 1);
        fs::write(&p, text).unwrap();
        assert!(matches!(load_graph(&p), Err(IoError::Version { found: 2, .. })));
    }

    #[test]
    fn invalid_graph_is_rejected() {
        let dir = tmp();
        let p = dir.path().join("g.json");
        fs::write(
            &p,
            r#"{"subject_id":"x","n_rois":2,"nodes":[{"id":0,"roi":0},{"id":1,"roi":5}],"edges":[[0,1]]}"#,
        )
        .unwrap();
        assert!(matches!(load_graph(&p), Err(IoError::Format { .. })));
        fs::write(&p, "{").unwrap();
        assert!(matches!(load_graph(&p), Err(IoError::Json { .. })));
    }

    #[test]
    fn features_and_embeddings_round_trip() {
        let dir = tmp();
        let graphs: Vec<_> = (0..2).map(|s| random(15, 0.2, 4, s).with_subject_id(format!("s{s}"))).collect();
        let data = encode_population(&graphs, 2).unwrap();
        let p = dir.path().join("f.json");
        save_features(&p, &data).unwrap();
        assert_eq!(load_features(&p).unwrap(), data);

        let cfg = crate::autoencoder::ModelConfig { theta_width: 4, latent_width: 3, ..crate::autoencoder::ModelConfig::new(2, 4) };
        let ae = Autoencoder::new(cfg, 1).unwrap();
        let embs: Vec<_> = data.samples().iter().map(|s| ae.encode(s).unwrap()).collect();
        let p = dir.path().join("e.json");
        save_embeddings(&p, &embs).unwrap();
        assert_eq!(load_embeddings(&p).unwrap(), embs);
        let grouped = group_by_subject(embs);
        assert_eq!(grouped.len(), 2);
        assert_eq!(grouped["s1"].len(), 15);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_identical() {
        let dir = tmp();
        let cfg = crate::autoencoder::ModelConfig { theta_width: 5, latent_width: 7, ..crate::autoencoder::ModelConfig::new(3, 6) };
        let ae = Autoencoder::new(cfg, 42).unwrap();
        let ckpt = Checkpoint {
            model: ae,
            train: Some(TrainConfig::default()),
            seed: 42,
            epoch: 3,
            history: vec![EpochRecord { epoch: 1, train_loss: 0.1 + 0.2, val_loss: None, lr: 1e-4 }],
        };
        let p = dir.path().join("c.json");
        save_checkpoint(&p, &ckpt).unwrap();
        let back = load_checkpoint(&p).unwrap();
        assert_eq!(back, ckpt);
        for (a, b) in ckpt.model.layers().iter().zip(back.model.layers()) {
            for (x, y) in a.param_tensors().iter().zip(b.param_tensors()) {
                assert!(x.iter().zip(y.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
            }
        }
    }

    #[test]
    fn truth_and_similarity_cache() {
        let dir = tmp();
        let pop = crate::synth::generate_population(&crate::synth::PopulationSpec {
            n_nodes: 40,
            n_rois: 5,
            n_subjects: 2,
            ..Default::default()
        })
        .unwrap();
        let p = dir.path().join("gt.json");
        save_truth(&p, &pop.truth).unwrap();
        assert_eq!(load_truth(&p).unwrap(), pop.truth);

        let g = &pop.subjects[0];
        let sim = HopCache::build(g, 2).similarity_matrix(2);
        let h = graph_hash(g);
        let p = dir.path().join("sim.json");
        save_similarity(&p, &h, &sim).unwrap();
        assert_eq!(load_similarity(&p, &h, 2).unwrap(), Some(sim));
        assert_eq!(load_similarity(&p, &h, 1).unwrap(), None);
        assert_eq!(load_similarity(&p, "other", 2).unwrap(), None);
        assert_eq!(load_similarity(&dir.path().join("missing.json"), &h, 2).unwrap(), None);
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tmp();
        let p = dir.path().join("sub").join("x.json");
        write_json(&p, &serde_json::json!({"a": 1})).unwrap();
        let names: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("x.json")]);
    }
}
