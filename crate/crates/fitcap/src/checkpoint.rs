//! Self-describing checkpoint files.
//!
//! Layout: the 8-byte magic `FCKPT001`, a little-endian `u64` header length,
//! a JSON header, then every blob as little-endian `f32` values in the order
//! the header lists their lengths.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fitcap_core::{LabeledDataset, SampleShape};
use serde::{Deserialize, Serialize};

use crate::classifier::{ArchitectureId, ClassifierConfig, TrainedClassifier};
use crate::generative::{arch, GeneratorConfig, GeneratorModel, TrainedGenerator, TrainingReport};
use crate::nn::{Network, Snapshot};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"FCKPT001";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetLayout {
    params: Vec<usize>,
    buffers: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Header {
    Generator {
        config: GeneratorConfig,
        num_classes: usize,
        shape: [usize; 3],
        report: TrainingReport,
        model: ModelHeader,
    },
    /// One member of a per-class ensemble.
    EnsembleMember { config: GeneratorConfig, class: usize, net: NetLayout },
    Classifier {
        architecture: ArchitectureId,
        num_classes: usize,
        config: Option<ClassifierConfig>,
        selected_epoch: usize,
        valid_accuracy_trace: Vec<f64>,
        net: NetLayout,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ModelHeader {
    Conditional { net: NetLayout },
    /// Members live in sibling files named by [`member_path`].
    Ensemble { members: usize },
    Replay { labels: Vec<usize> },
    UniformNoise,
    LabelScramble { labels: Vec<usize> },
}

/// `{dataset}_{family}_{seed}[_class{k}].ckpt`
pub fn generator_file_name(dataset: &str, family: &str, seed: u64, class: Option<usize>) -> String {
    match class {
        Some(k) => format!("{dataset}_{family}_{seed}_class{k}.ckpt"),
        None => format!("{dataset}_{family}_{seed}.ckpt"),
    }
}

/// `{dataset}_clf_{family}_{seed}_tau{tau}.ckpt`
pub fn classifier_file_name(dataset: &str, family: &str, seed: u64, tau: f64) -> String {
    format!("{dataset}_clf_{family}_{seed}_tau{tau:.3}.ckpt")
}

/// Path of ensemble member `k` next to the ensemble file.
pub fn member_path(path: &Path, k: usize) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("generator");
    path.with_file_name(format!("{stem}_class{k}.ckpt"))
}

fn layout(snap: &Snapshot) -> NetLayout {
    NetLayout { params: snap.params.iter().map(Vec::len).collect(), buffers: snap.buffers.iter().map(Vec::len).collect() }
}

fn snapshot_blobs(snap: &Snapshot) -> Vec<&[f32]> {
    snap.params.iter().chain(&snap.buffers).map(Vec::as_slice).collect()
}

fn write_container(path: &Path, header: &Header, blobs: &[&[f32]]) -> Result<()> {
    let json = serde_json::to_vec(header).map_err(|e| ckpt_err(path, e))?;
    let mut bytes = Vec::with_capacity(16 + json.len() + blobs.iter().map(|b| b.len() * 4).sum::<usize>());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for blob in blobs {
        for v in *blob {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path, &bytes)
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn ckpt_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint { path: path.to_path_buf(), msg: msg.to_string() }
}

fn read_container(path: &Path) -> Result<(Header, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(ckpt_err(path, "not a checkpoint file (bad magic)"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16usize.saturating_add(len)).ok_or_else(|| ckpt_err(path, "truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| ckpt_err(path, e))?;
    let rest = &bytes[16 + len..];
    if rest.len() % 4 != 0 {
        return Err(ckpt_err(path, "blob section is not a whole number of f32 values"));
    }
    let values = rest.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Ok((header, values))
}

/// Splits `values` into a snapshot shaped like `layout`, starting at
/// `*cursor`.
fn take_snapshot(path: &Path, values: &[f32], cursor: &mut usize, layout: &NetLayout) -> Result<Snapshot> {
    let mut take = |n: usize| -> Result<Vec<f32>> {
        let v = values.get(*cursor..*cursor + n).ok_or_else(|| ckpt_err(path, "blob section too short"))?.to_vec();
        *cursor += n;
        Ok(v)
    };
    let params = layout.params.iter().map(|&n| take(n)).collect::<Result<_>>()?;
    let buffers = layout.buffers.iter().map(|&n| take(n)).collect::<Result<_>>()?;
    Ok(Snapshot { params, buffers })
}

fn restore_into(path: &Path, mut net: Network, snap: &Snapshot) -> Result<Network> {
    if !net.matches(snap) {
        return Err(ckpt_err(path, "weights do not fit the recorded architecture"));
    }
    net.restore(snap);
    Ok(net)
}

fn fresh_generator(input: usize) -> Network {
    let mut rng = <fitcap_core::Rng as rand::SeedableRng>::seed_from_u64(0);
    arch::generator(input, &mut rng)
}

pub fn save_generator(g: &TrainedGenerator, path: &Path) -> Result<()> {
    let mut blobs: Vec<&[f32]> = Vec::new();
    let snap;
    let model = match &g.model {
        GeneratorModel::Conditional(net) => {
            snap = net.snapshot();
            blobs = snapshot_blobs(&snap);
            ModelHeader::Conditional { net: layout(&snap) }
        }
        GeneratorModel::Ensemble(nets) => {
            for (k, net) in nets.iter().enumerate() {
                let s = net.snapshot();
                let header = Header::EnsembleMember { config: g.config.clone(), class: k, net: layout(&s) };
                write_container(&member_path(path, k), &header, &snapshot_blobs(&s))?;
            }
            ModelHeader::Ensemble { members: nets.len() }
        }
        GeneratorModel::Replay(data) => {
            blobs.push(data.samples());
            ModelHeader::Replay { labels: data.labels().to_vec() }
        }
        GeneratorModel::UniformNoise => ModelHeader::UniformNoise,
        GeneratorModel::LabelScramble(data) => {
            blobs.push(data.samples());
            ModelHeader::LabelScramble { labels: data.labels().to_vec() }
        }
    };
    let s = g.shape;
    let header = Header::Generator {
        config: g.config.clone(),
        num_classes: g.num_classes,
        shape: [s.channels, s.height, s.width],
        report: g.report.clone(),
        model,
    };
    write_container(path, &header, &blobs)
}

pub fn load_generator(path: &Path) -> Result<TrainedGenerator> {
    let (header, values) = read_container(path)?;
    let Header::Generator { config, num_classes, shape, report, model } = header else {
        return Err(ckpt_err(path, "not a generator checkpoint"));
    };
    let shape = SampleShape::new(shape[0], shape[1], shape[2]);
    let dataset = |labels: Vec<usize>| -> Result<LabeledDataset> { Ok(LabeledDataset::new(values.clone(), labels, shape, num_classes)?) };
    let model = match model {
        ModelHeader::Conditional { net } => {
            let snap = take_snapshot(path, &values, &mut 0, &net)?;
            GeneratorModel::Conditional(restore_into(path, fresh_generator(config.latent_dim + num_classes), &snap)?)
        }
        ModelHeader::Ensemble { members } => {
            let mut nets = Vec::with_capacity(members);
            for k in 0..members {
                let mp = member_path(path, k);
                let (h, v) = read_container(&mp)?;
                let Header::EnsembleMember { class, net, .. } = h else {
                    return Err(ckpt_err(&mp, "not an ensemble member"));
                };
                if class != k {
                    return Err(ckpt_err(&mp, format!("holds class {class}, expected {k}")));
                }
                let snap = take_snapshot(&mp, &v, &mut 0, &net)?;
                nets.push(restore_into(&mp, fresh_generator(config.latent_dim), &snap)?);
            }
            GeneratorModel::Ensemble(nets)
        }
        ModelHeader::Replay { labels } => GeneratorModel::Replay(dataset(labels)?),
        ModelHeader::UniformNoise => GeneratorModel::UniformNoise,
        ModelHeader::LabelScramble { labels } => GeneratorModel::LabelScramble(dataset(labels)?),
    };
    TrainedGenerator::new(config, num_classes, shape, model, report)
}

pub fn save_classifier(clf: &TrainedClassifier, config: Option<&ClassifierConfig>, path: &Path) -> Result<()> {
    let snap = clf.network().snapshot();
    let header = Header::Classifier {
        architecture: clf.architecture,
        num_classes: clf.num_classes,
        config: config.cloned(),
        selected_epoch: clf.selected_epoch,
        valid_accuracy_trace: clf.valid_accuracy_trace.clone(),
        net: layout(&snap),
    };
    write_container(path, &header, &snapshot_blobs(&snap))
}

pub fn load_classifier(path: &Path) -> Result<TrainedClassifier> {
    let (header, values) = read_container(path)?;
    let Header::Classifier { architecture, num_classes, selected_epoch, valid_accuracy_trace, net, .. } = header else {
        return Err(ckpt_err(path, "not a classifier checkpoint"));
    };
    let snap = take_snapshot(path, &values, &mut 0, &net)?;
    let fresh = TrainedClassifier::untrained(architecture, num_classes, 0);
    let restored = restore_into(path, fresh.into_network(), &snap)?;
    Ok(TrainedClassifier::from_network(architecture, num_classes, restored, selected_epoch, valid_accuracy_trace))
}
