//! `gyral`: command-line driver for the embedding pipeline.
//!
//! gen → features → train → embed → match → eval. Every subcommand writes
//! into a fresh output directory (staged as `<out>.partial` and renamed on
//! success) together with a `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use gyral_embed::autoencoder::{self, Autoencoder, ModelConfig, TrainConfig};
use gyral_embed::correspond::{self, HemisphereSplit, DEFAULT_EPSILON, DEFAULT_THRESHOLD};
use gyral_embed::features::{encode_subject_with, FeatureDataset, SubjectHops};
use gyral_embed::graph::GyralNet;
use gyral_embed::io::{self, Checkpoint, RunManifest};
use gyral_embed::kan::GridSpec;
use gyral_embed::metrics;
use gyral_embed::struct_sim::HopCache;
use gyral_embed::synth::{self, PopulationSpec};
use gyral_embed::derive_seed;

#[derive(Parser, Debug)]
#[command(name = "gyral", version, about = "Multi-hop KAN embeddings and cross-subject correspondence for gyral graphs")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug, Serialize)]
enum Command {
    /// Generate a synthetic population with ground-truth correspondences.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a training config with the default hyperparameters.
    InitConfig {
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode multi-hop features for every graph in a directory.
    Features {
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long, default_value_t = 3)]
        hops: usize,
        /// Directory for per-graph similarity caches.
        #[arg(long)]
        sim_cache: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the autoencoder.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        val_features: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute latent embeddings for a feature dataset.
    Embed {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Match one subject's nodes against every other subject.
    Match {
        #[arg(long)]
        anchor: String,
        #[arg(long)]
        emb: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        /// Graphs for ROI hit rates.
        #[arg(long)]
        graphs: Option<PathBuf>,
        /// Ground truth for correspondence accuracy.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruction metrics, ROI connectivity and correspondence scores.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        graphs: Option<PathBuf>,
        /// Anchor subject; defaults to the first subject in the dataset.
        #[arg(long)]
        anchor: Option<String>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn default_width() -> usize {
    128
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct ModelWidths {
    #[serde(default = "default_width")]
    theta_width: usize,
    #[serde(default = "default_width")]
    latent_width: usize,
    #[serde(default)]
    grid: GridSpec,
}

impl Default for ModelWidths {
    fn default() -> Self {
        Self {
            theta_width: default_width(),
            latent_width: default_width(),
            grid: GridSpec::default(),
        }
    }
}

/// Contents of `train.json`.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
struct TrainFile {
    #[serde(default)]
    model: ModelWidths,
    #[serde(default)]
    train: TrainConfig,
}

/// Output directory staged next to its final location.
struct Staging {
    target: PathBuf,
    dir: PathBuf,
    manifest: RunManifest,
}

impl Staging {
    fn new(target: &Path, command: &Command) -> Result<Self> {
        if target.exists() {
            let is_dir = target.is_dir();
            let ours = target.join("manifest.json").is_file();
            let empty = is_dir && fs::read_dir(target)?.next().is_none();
            ensure!(
                is_dir && (ours || empty),
                "output {} exists and is not a previous gyral output",
                target.display()
            );
        }
        let mut name = target
            .file_name()
            .context("output path has no final component")?
            .to_os_string();
        name.push(".partial");
        let dir = target.with_file_name(name);
        if dir.exists() {
            fs::remove_dir_all(&dir).with_context(|| format!("removing stale {}", dir.display()))?;
        }
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let name = serde_json::to_value(command)?
            .as_object()
            .and_then(|o| o.keys().next().cloned())
            .unwrap_or_default();
        Ok(Self {
            target: target.to_path_buf(),
            dir,
            manifest: RunManifest {
                version: io::FORMAT_VERSION,
                command: name.to_lowercase(),
                config: serde_json::to_value(command)?,
                inputs: BTreeMap::new(),
                seed: None,
                tool_version: env!("CARGO_PKG_VERSION").to_owned(),
                started_unix: io::unix_now(),
                finished_unix: 0,
            },
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        let files: Vec<PathBuf> = if path.is_dir() {
            let mut v: Vec<PathBuf> = fs::read_dir(path)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != "manifest.json"))
                .collect();
            v.sort();
            v
        } else {
            vec![path.to_path_buf()]
        };
        for f in files {
            self.manifest
                .inputs
                .insert(f.display().to_string(), io::sha256_file(&f)?);
        }
        Ok(())
    }

    fn commit(mut self) -> Result<()> {
        self.manifest.finished_unix = io::unix_now();
        io::write_json(&self.path("manifest.json"), &self.manifest)?;
        if self.target.exists() {
            fs::remove_dir_all(&self.target)?;
        }
        fs::rename(&self.dir, &self.target)
            .with_context(|| format!("moving output into {}", self.target.display()))?;
        Ok(())
    }

    fn abort(&self) {
        let _ = fs::remove_dir_all(&self.dir);
    }
}

/// `path` itself if it is a file, else `path/name`.
fn in_dir(path: &Path, name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(name)
    } else {
        path.to_path_buf()
    }
}

/// Graph directory, descending into `graphs/` when given a `gen` output.
fn graph_dir(path: &Path) -> PathBuf {
    let sub = path.join("graphs");
    if sub.is_dir() {
        sub
    } else {
        path.to_path_buf()
    }
}

fn load_graph_map(path: &Path) -> Result<BTreeMap<String, GyralNet>> {
    let mut map = BTreeMap::new();
    for g in io::load_graph_dir(&graph_dir(path))? {
        let id = g.subject_id().to_owned();
        ensure!(map.insert(id.clone(), g).is_none(), "duplicate subject id {id}");
    }
    Ok(map)
}

fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    io::write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn cmd_gen(st: &mut Staging, spec: &Path) -> Result<()> {
    st.input(spec)?;
    let spec: PopulationSpec = io::read_json(spec)?;
    st.manifest.seed = Some(spec.seed);
    let pop = synth::generate_population(&spec)?;
    io::save_graph(&st.path("template.json"), &pop.template)?;
    for g in &pop.subjects {
        io::save_graph(&st.path(&format!("graphs/{}.json", g.subject_id())), g)?;
    }
    io::save_truth(&st.path("ground_truth.json"), &pop.truth)?;
    io::write_json(&st.path("spec.json"), &spec)?;
    println!("generated {} subjects of {} nodes", pop.subjects.len(), pop.template.n());
    Ok(())
}

fn cmd_features(st: &mut Staging, graphs: &Path, hops: usize, sim_cache: Option<&Path>) -> Result<()> {
    st.input(&graph_dir(graphs))?;
    ensure!(hops >= 1, "--hops must be at least 1");
    let graphs = load_graph_map(graphs)?;
    let n_rois = graphs.values().next().map_or(0, GyralNet::n_rois);
    let mut samples = Vec::new();
    for (id, g) in &graphs {
        ensure!(g.n_rois() == n_rois, "subject {id} has {} ROIs, expected {n_rois}", g.n_rois());
        let cached = match sim_cache {
            None => SubjectHops::build(g, hops)?,
            Some(dir) => {
                let cache = HopCache::build(g, hops);
                let hash = io::graph_hash(g);
                let mut sims = Vec::with_capacity(hops);
                for k in 1..=hops {
                    let file = dir.join(format!("{id}_k{k}.json"));
                    let sim = match io::load_similarity(&file, &hash, k)? {
                        Some(s) => s,
                        None => {
                            let s = cache.similarity_matrix(k);
                            io::save_similarity(&file, &hash, &s)?;
                            s
                        }
                    };
                    sims.push(sim);
                }
                SubjectHops {
                    hops,
                    adjs: (1..=hops).map(|k| cache.adjacency(k)).collect(),
                    sims,
                }
            }
        };
        samples.extend(encode_subject_with(g, &cached)?);
    }
    let data = FeatureDataset::new(hops, n_rois, samples)?;
    io::save_features(&st.path("features.json"), &data)?;
    println!("encoded {} nodes from {} subjects, {hops} hops", data.len(), graphs.len());
    Ok(())
}

fn cmd_train(st: &mut Staging, features: &Path, config: &Path, val: Option<&Path>) -> Result<()> {
    let features = in_dir(features, "features.json");
    st.input(&features)?;
    st.input(config)?;
    let file: TrainFile = io::read_json(config)?;
    let data = io::load_features(&features)?;
    let val = match val {
        Some(v) => {
            let v = in_dir(v, "features.json");
            st.input(&v)?;
            Some(io::load_features(&v)?)
        }
        None => None,
    };
    st.manifest.seed = Some(file.train.seed);
    let cfg = ModelConfig {
        theta_width: file.model.theta_width,
        latent_width: file.model.latent_width,
        grid: file.model.grid,
        ..ModelConfig::new(data.hops(), data.n_rois())
    };
    let init_seed = derive_seed(file.train.seed, 0x696e_6974);
    let ae = Autoencoder::new(cfg, init_seed)?;
    let (ae, history) = autoencoder::train(ae, &data, &file.train, val.as_ref())?;
    let ckpt = Checkpoint {
        model: ae,
        train: Some(file.train),
        seed: init_seed,
        epoch: history.len(),
        history,
    };
    io::save_checkpoint(&st.path("checkpoint.json"), &ckpt)?;
    io::write_json(&st.path("history.json"), &ckpt.history)?;
    write_csv(
        &st.path("history.csv"),
        "epoch,train_loss,val_loss,lr",
        ckpt.history.iter().map(|r| {
            let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
            format!("{},{},{},{}", r.epoch, r.train_loss, val, r.lr)
        }),
    )?;
    if let (Some(first), Some(last)) = (ckpt.history.first(), ckpt.history.last()) {
        println!(
            "trained {} epochs: loss {:.6} -> {:.6}",
            ckpt.epoch, first.train_loss, last.train_loss
        );
    }
    Ok(())
}

fn embed_all(model: &Autoencoder, data: &FeatureDataset) -> Result<Vec<autoencoder::LatentEmbedding>> {
    Ok(data
        .samples()
        .iter()
        .map(|s| model.encode(s))
        .collect::<Result<Vec<_>, _>>()?)
}

fn cmd_embed(st: &mut Staging, ckpt: &Path, features: &Path) -> Result<()> {
    let ckpt = in_dir(ckpt, "checkpoint.json");
    let features = in_dir(features, "features.json");
    st.input(&ckpt)?;
    st.input(&features)?;
    let model = io::load_checkpoint(&ckpt)?.model;
    let data = io::load_features(&features)?;
    let embs = embed_all(&model, &data)?;
    io::save_embeddings(&st.path("embeddings.json"), &embs)?;
    println!("embedded {} nodes", embs.len());
    Ok(())
}

/// Correspondence scores shared by `match` and `eval`.
fn correspondence_summary(
    anchor: &str,
    embs: Vec<autoencoder::LatentEmbedding>,
    threshold: f64,
    epsilon: f64,
    graphs: Option<&BTreeMap<String, GyralNet>>,
    truth: Option<&synth::GroundTruth>,
) -> Result<(correspond::CorrespondenceSet, serde_json::Value)> {
    let mut by_subject = io::group_by_subject(embs);
    let anchor_embs = by_subject
        .remove(anchor)
        .with_context(|| format!("anchor subject {anchor} has no embeddings"))?;
    ensure!(!by_subject.is_empty(), "no target subjects besides the anchor");
    let corr = correspond::match_population(&anchor_embs, &by_subject, threshold, epsilon)?;
    let mut summary = json!({
        "anchor": anchor,
        "targets": by_subject.len(),
        "anchor_nodes": corr.anchor_nodes.len(),
        "threshold": threshold,
        "epsilon": epsilon,
        "matches": corr.matches.len(),
        "matched_anchors": corr.matched_anchors().len(),
        "uniqueness_rate": correspond::uniqueness_rate(&corr),
    });
    if let Some(graphs) = graphs {
        summary["roi_hit_rate"] = json!({
            "total": correspond::roi_hit_rate(&corr, graphs, HemisphereSplit::Total)?,
            "left": correspond::roi_hit_rate(&corr, graphs, HemisphereSplit::LeftOnly)?,
            "right": correspond::roi_hit_rate(&corr, graphs, HemisphereSplit::RightOnly)?,
        });
    }
    if let Some(truth) = truth {
        let table = truth
            .correspondence_truth(anchor)
            .with_context(|| format!("ground truth has no entry for {anchor}"))?;
        summary["ground_truth_accuracy"] = json!(correspond::ground_truth_accuracy(&corr, &table)?);
    }
    Ok((corr, summary))
}

fn write_matches(path: &Path, corr: &correspond::CorrespondenceSet) -> Result<()> {
    write_csv(
        path,
        "anchor_node,target_subject,target_node,score,n_competing",
        corr.matches.iter().map(|m| {
            format!(
                "{},{},{},{},{}",
                m.anchor_node,
                m.target_subject,
                m.target_node,
                m.score,
                m.competing.len()
            )
        }),
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_match(
    st: &mut Staging,
    anchor: &str,
    emb: &Path,
    threshold: f64,
    epsilon: f64,
    graphs: Option<&Path>,
    truth: Option<&Path>,
) -> Result<()> {
    let emb = in_dir(emb, "embeddings.json");
    st.input(&emb)?;
    let graphs = match graphs {
        Some(g) => {
            st.input(&graph_dir(g))?;
            Some(load_graph_map(g)?)
        }
        None => None,
    };
    let truth = match truth {
        Some(t) => {
            st.input(t)?;
            Some(io::load_truth(t)?)
        }
        None => None,
    };
    let embs = io::load_embeddings(&emb)?;
    let (corr, summary) =
        correspondence_summary(anchor, embs, threshold, epsilon, graphs.as_ref(), truth.as_ref())?;
    write_matches(&st.path("matches.csv"), &corr)?;
    io::write_json(&st.path("summary.json"), &summary)?;
    println!("{} matches for {} anchor nodes", corr.matches.len(), corr.anchor_nodes.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    st: &mut Staging,
    ckpt: &Path,
    features: &Path,
    truth: Option<&Path>,
    graphs: Option<&Path>,
    anchor: Option<&str>,
    threshold: f64,
    epsilon: f64,
    top_k: usize,
) -> Result<()> {
    let ckpt = in_dir(ckpt, "checkpoint.json");
    let features = in_dir(features, "features.json");
    st.input(&ckpt)?;
    st.input(&features)?;
    let model = io::load_checkpoint(&ckpt)?.model;
    let data = io::load_features(&features)?;

    let recon = metrics::recon_report(&model, &data)?;
    let roiconn = metrics::roi_connectivity(&model, top_k)?;
    write_csv(
        &st.path("recon.csv"),
        "subject_id,node,mse,nonzero_mse,pcc,ssim",
        recon.samples.iter().map(|s| {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            format!(
                "{},{},{},{},{},{}",
                s.subject_id,
                s.node,
                s.mse,
                opt(s.nonzero_mse),
                opt(s.pcc),
                s.ssim
            )
        }),
    )?;
    write_csv(
        &st.path("roiconn.csv"),
        "roi_a,roi_b,pcc",
        roiconn.pairs.iter().map(|p| format!("{},{},{}", p.roi_a, p.roi_b, p.pcc)),
    )?;
    let mut report = json!({
        "recon": recon.aggregate,
        "roi_connectivity": roiconn,
    });

    let subjects = data.subjects();
    if subjects.len() >= 2 {
        let anchor = anchor.unwrap_or(subjects[0]).to_owned();
        let graphs = match graphs {
            Some(g) => {
                st.input(&graph_dir(g))?;
                Some(load_graph_map(g)?)
            }
            None => None,
        };
        let truth = match truth {
            Some(t) => {
                st.input(t)?;
                Some(io::load_truth(t)?)
            }
            None => None,
        };
        let embs = embed_all(&model, &data)?;
        let (corr, summary) =
            correspondence_summary(&anchor, embs, threshold, epsilon, graphs.as_ref(), truth.as_ref())?;
        write_matches(&st.path("matches.csv"), &corr)?;
        report["correspondence"] = summary;
    } else if truth.is_some() || anchor.is_some() {
        bail!("correspondence needs at least two subjects in the dataset");
    }
    io::write_json(&st.path("report.json"), &report)?;
    println!(
        "mse {:.6}, non-zero mse {:.6}, ssim {:.4}",
        recon.aggregate.mse, recon.aggregate.nonzero_mse, recon.aggregate.ssim
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Command::InitConfig { out } = &cli.cmd {
        io::write_json(out, &TrainFile::default())?;
        println!("wrote {}", out.display());
        return Ok(());
    }
    let out = match &cli.cmd {
        Command::Gen { out, .. }
        | Command::Features { out, .. }
        | Command::Train { out, .. }
        | Command::Embed { out, .. }
        | Command::Match { out, .. }
        | Command::Eval { out, .. } => out.clone(),
        Command::InitConfig { .. } => unreachable!(),
    };
    let mut st = Staging::new(&out, &cli.cmd)?;
    let result = match &cli.cmd {
        Command::Gen { spec, .. } => cmd_gen(&mut st, spec),
        Command::Features {
            graphs,
            hops,
            sim_cache,
            ..
        } => cmd_features(&mut st, graphs, *hops, sim_cache.as_deref()),
        Command::Train {
            features,
            config,
            val_features,
            ..
        } => cmd_train(&mut st, features, config, val_features.as_deref()),
        Command::Embed { ckpt, features, .. } => cmd_embed(&mut st, ckpt, features),
        Command::Match {
            anchor,
            emb,
            threshold,
            epsilon,
            graphs,
            truth,
            ..
        } => cmd_match(
            &mut st,
            anchor,
            emb,
            *threshold,
            *epsilon,
            graphs.as_deref(),
            truth.as_deref(),
        ),
        Command::Eval {
            ckpt,
            features,
            truth,
            graphs,
            anchor,
            threshold,
            epsilon,
            top_k,
            ..
        } => cmd_eval(
            &mut st,
            ckpt,
            features,
            truth.as_deref(),
            graphs.as_deref(),
            anchor.as_deref(),
            *threshold,
            *epsilon,
            *top_k,
        ),
        Command::InitConfig { .. } => unreachable!(),
    };
    match result {
        Ok(()) => st.commit(),
        Err(e) => {
            st.abort();
            Err(e)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(ToString::to_string).collect();
            let err = json!({ "error": chain[0], "causes": &chain[1..] });
            eprintln!("{err}");
            ExitCode::FAILURE
        }
    }
}
