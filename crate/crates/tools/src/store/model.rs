//! Model directories: `manifest.json` plus one tensor file per weight and
//! bias array.

use std::path::Path;

use manifold_core::generation::ModelUnderTest;
use manifold_core::manifold::{Likelihood, TwoStageVae, VaeModel};
use manifold_core::numerics::{Activation, DenseLayer, Network};
use manifold_core::Tensor;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::error::{Result, StoreError};
use super::fs::{create_dir, read_bytes};
use super::json::{read_json, sha256_hex, to_canonical, write_json};
use super::tensor_file::{decode_tensor, encode_tensor, DType};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LayerEntry {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(rename = "in")]
    pub input: usize,
    pub out: usize,
    pub activation: String,
    pub weights: String,
    pub bias: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VaeManifest {
    pub latent_dim: usize,
    pub data_dim: usize,
    pub conditional: bool,
    pub num_classes: usize,
    pub likelihood: Likelihood,
    pub encoder: Vec<LayerEntry>,
    pub decoder: Vec<LayerEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelBody {
    Classifier {
        input_dim: usize,
        num_classes: usize,
        layers: Vec<LayerEntry>,
    },
    Vae(VaeManifest),
    TwoStageVae {
        stage1: VaeManifest,
        stage2: VaeManifest,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub format_version: u32,
    #[serde(flatten)]
    pub body: ModelBody,
    #[serde(default)]
    pub provenance: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Classifier(ModelUnderTest),
    Vae(VaeModel),
    TwoStage(TwoStageVae),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Classifier(_) => "classifier",
            Model::Vae(_) => "vae",
            Model::TwoStage(_) => "two_stage_vae",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: Model,
    /// Digest of the manifest body and every tensor file.
    pub id: String,
    pub provenance: Value,
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<(String, Vec<u8>)>,
}

impl Writer<'_> {
    fn network(&mut self, prefix: &str, net: &Network) -> Result<Vec<LayerEntry>> {
        net.layers()
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let weights = format!("{prefix}layer{i}.weights.mten");
                let bias = format!("{prefix}layer{i}.bias.mten");
                let w = Tensor::matrix(l.out_dim(), l.in_dim(), l.weights().to_vec())?;
                let b = Tensor::vector(l.bias().to_vec());
                self.files.push((weights.clone(), encode_tensor(&w, DType::F64, &self.dir.join(&weights))?));
                self.files.push((bias.clone(), encode_tensor(&b, DType::F64, &self.dir.join(&bias))?));
                Ok(LayerEntry {
                    kind: "dense".into(),
                    input: l.in_dim(),
                    out: l.out_dim(),
                    activation: l.activation().name().into(),
                    weights,
                    bias,
                })
            })
            .collect()
    }

    fn vae(&mut self, prefix: &str, m: &VaeModel) -> Result<VaeManifest> {
        Ok(VaeManifest {
            latent_dim: m.latent_dim(),
            data_dim: m.data_dim(),
            conditional: m.is_conditional(),
            num_classes: m.num_classes(),
            likelihood: m.likelihood(),
            encoder: self.network(&format!("{prefix}encoder."), m.encoder())?,
            decoder: self.network(&format!("{prefix}decoder."), m.decoder())?,
        })
    }
}

fn model_id(body: &ModelBody, files: &[(String, Vec<u8>)]) -> Result<String> {
    let head = to_canonical(body).map_err(|e| StoreError::format(MANIFEST, e.to_string()))?;
    let mut chunks: Vec<&[u8]> = vec![&head];
    chunks.extend(files.iter().map(|(_, b)| b.as_slice()));
    Ok(sha256_hex(&chunks)[..16].to_string())
}

/// Writes `model` into `dir` and returns its id.
pub fn save_model(dir: impl AsRef<Path>, model: &Model, provenance: &Value) -> Result<String> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let mut w = Writer { dir, files: Vec::new() };
    let body = match model {
        Model::Classifier(m) => ModelBody::Classifier {
            input_dim: m.input_dim(),
            num_classes: m.num_classes(),
            layers: w.network("", m.network())?,
        },
        Model::Vae(m) => ModelBody::Vae(w.vae("", m)?),
        Model::TwoStage(m) => ModelBody::TwoStageVae {
            stage1: w.vae("stage1.", m.stage1())?,
            stage2: w.vae("stage2.", m.stage2())?,
        },
    };
    for (name, bytes) in &w.files {
        super::fs::write_atomic(&dir.join(name), bytes)?;
    }
    let id = model_id(&body, &w.files)?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        body,
        provenance: provenance.clone(),
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(id)
}

struct Reader<'a> {
    dir: &'a Path,
    files: Vec<(String, Vec<u8>)>,
}

impl Reader<'_> {
    fn tensor(&mut self, layer: &str, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let path = self.dir.join(name);
        if !path.is_file() {
            return Err(StoreError::format(&path, format!("layer {layer}: missing tensor file {name}")));
        }
        let bytes = read_bytes(&path)?;
        let (t, _) = decode_tensor(&bytes, &path)?;
        if t.shape() != shape {
            return Err(StoreError::format(
                &path,
                format!("layer {layer}: tensor shape {:?}, manifest declares {shape:?}", t.shape()),
            ));
        }
        self.files.push((name.to_string(), bytes));
        Ok(t.into_data())
    }

    fn network(&mut self, what: &str, entries: &[LayerEntry]) -> Result<Network> {
        let manifest = self.dir.join(MANIFEST);
        let Some(first) = entries.first() else {
            return Err(StoreError::format(&manifest, format!("{what} has no layers")));
        };
        let mut layers = Vec::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            let layer = format!("{what}.{i}");
            if e.kind != "dense" {
                return Err(StoreError::format(&manifest, format!("layer {layer}: unknown type `{}`", e.kind)));
            }
            let act: Activation = e
                .activation
                .parse()
                .map_err(|_| StoreError::format(&manifest, format!("layer {layer}: unknown activation `{}`", e.activation)))?;
            let w = self.tensor(&layer, &e.weights, &[e.out, e.input])?;
            let b = self.tensor(&layer, &e.bias, &[e.out])?;
            layers.push(
                DenseLayer::new(e.input, e.out, w, b, act)
                    .map_err(|err| StoreError::format(&manifest, format!("layer {layer}: {err}")))?,
            );
        }
        Network::new(first.input, layers).map_err(|err| StoreError::format(&manifest, format!("{what}: {err}")))
    }

    fn vae(&mut self, what: &str, m: &VaeManifest) -> Result<VaeModel> {
        let enc = self.network(&format!("{what}encoder"), &m.encoder)?;
        let dec = self.network(&format!("{what}decoder"), &m.decoder)?;
        VaeModel::new(enc, dec, m.latent_dim, m.data_dim, m.conditional, m.num_classes, m.likelihood)
            .map_err(|e| StoreError::format(self.dir.join(MANIFEST), format!("{what}vae: {e}")))
    }
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<LoadedModel> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let manifest: Manifest = read_json(&path)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(StoreError::format(&path, format!("unsupported format version {}", manifest.format_version)));
    }
    let mut r = Reader { dir, files: Vec::new() };
    let model = match &manifest.body {
        ModelBody::Classifier { num_classes, input_dim, layers } => {
            let net = r.network("layers", layers)?;
            if net.input_dim() != *input_dim {
                return Err(StoreError::format(&path, "classifier input width disagrees with its layers"));
            }
            Model::Classifier(ModelUnderTest::new(net, *num_classes).map_err(|e| StoreError::format(&path, e.to_string()))?)
        }
        ModelBody::Vae(m) => Model::Vae(r.vae("", m)?),
        ModelBody::TwoStageVae { stage1, stage2 } => {
            let s1 = r.vae("stage1.", stage1)?;
            let s2 = r.vae("stage2.", stage2)?;
            Model::TwoStage(TwoStageVae::new(s1, s2).map_err(|e| StoreError::format(&path, format!("stages do not chain: {e}")))?)
        }
    };
    Ok(LoadedModel {
        model,
        id: model_id(&manifest.body, &r.files)?,
        provenance: manifest.provenance,
    })
}

fn wrong_kind(dir: &Path, want: &str, got: &Model) -> StoreError {
    StoreError::format(dir.join(MANIFEST), format!("expected a {want} model, found {}", got.kind()))
}

pub fn load_classifier(dir: impl AsRef<Path>) -> Result<(ModelUnderTest, String)> {
    let l = load_model(&dir)?;
    match l.model {
        Model::Classifier(m) => Ok((m, l.id)),
        other => Err(wrong_kind(dir.as_ref(), "classifier", &other)),
    }
}

/// A single VAE, or the first stage of a two-stage model.
pub fn load_encoder(dir: impl AsRef<Path>) -> Result<(VaeModel, String)> {
    let l = load_model(&dir)?;
    match l.model {
        Model::Vae(m) => Ok((m, l.id)),
        Model::TwoStage(m) => Ok((m.stage1().clone(), l.id)),
        other => Err(wrong_kind(dir.as_ref(), "vae", &other)),
    }
}

pub fn load_two_stage(dir: impl AsRef<Path>) -> Result<(TwoStageVae, String)> {
    let l = load_model(&dir)?;
    match l.model {
        Model::TwoStage(m) => Ok((m, l.id)),
        other => Err(wrong_kind(dir.as_ref(), "two_stage_vae", &other)),
    }
}
