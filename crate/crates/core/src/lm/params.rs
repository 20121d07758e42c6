// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::{Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_mlp: usize,
    pub context_len: usize,
    pub vocab_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_layers: 4,
            n_heads: 4,
            d_model: 64,
            d_mlp: 256,
            context_len: 64,
            vocab_size: 0,
        }
    }
}

impl ModelConfig {
    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_mlp", self.d_mlp),
            ("context_len", self.context_len),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::invalid(format!("model {name} must be at least 1")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::invalid(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}

/// Offsets of one block's tensors inside the flat parameter vector.
///
/// Per-head tensors are head-major: `w_q` is `n_heads x d_model x d_head`,
/// `w_o` is `n_heads x d_head x d_model`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerLayout {
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub w_q: Range<usize>,
    pub b_q: Range<usize>,
    pub w_k: Range<usize>,
    pub b_k: Range<usize>,
    pub w_v: Range<usize>,
    pub b_v: Range<usize>,
    pub w_o: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
    pub w_fc: Range<usize>,
    pub b_fc: Range<usize>,
    pub w_proj: Range<usize>,
    pub b_proj: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub wte: Range<usize>,
    pub wpe: Range<usize>,
    pub layers: Vec<LayerLayout>,
    pub lnf_g: Range<usize>,
    pub lnf_b: Range<usize>,
    pub w_unembed: Range<usize>,
    pub total: usize,
}

/// How a tensor is initialised and regularised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    Weight,
    Bias,
    Gain,
}

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut off = 0usize;
        let mut take = |n: usize| {
            let r = off..off + n;
            off += n;
            r
        };
        let (d, h, dh, dm) = (cfg.d_model, cfg.n_heads, cfg.d_head(), cfg.d_mlp);
        let wte = take(cfg.vocab_size * d);
        let wpe = take(cfg.context_len * d);
        let layers = (0..cfg.n_layers)
            .map(|_| LayerLayout {
                ln1_g: take(d),
                ln1_b: take(d),
                w_q: take(h * d * dh),
                b_q: take(h * dh),
                w_k: take(h * d * dh),
                b_k: take(h * dh),
                w_v: take(h * d * dh),
                b_v: take(h * dh),
                w_o: take(h * dh * d),
                ln2_g: take(d),
                ln2_b: take(d),
                w_fc: take(d * dm),
                b_fc: take(dm),
                w_proj: take(dm * d),
                b_proj: take(d),
            })
            .collect();
        let lnf_g = take(d);
        let lnf_b = take(d);
        let w_unembed = take(d * cfg.vocab_size);
        ParamLayout {
            wte,
            wpe,
            layers,
            lnf_g,
            lnf_b,
            w_unembed,
            total: off,
        }
    }

    /// Every tensor with a readable name, in storage order.
    pub fn tensors(&self) -> Vec<(String, Range<usize>, TensorRole)> {
        use TensorRole::*;
        let mut out = vec![
            ("wte".to_string(), self.wte.clone(), Weight),
            ("wpe".to_string(), self.wpe.clone(), Weight),
        ];
        for (l, ly) in self.layers.iter().enumerate() {
            let named = [
                ("ln1_g", &ly.ln1_g, Gain),
                ("ln1_b", &ly.ln1_b, Bias),
                ("w_q", &ly.w_q, Weight),
                ("b_q", &ly.b_q, Bias),
                ("w_k", &ly.w_k, Weight),
                ("b_k", &ly.b_k, Bias),
                ("w_v", &ly.w_v, Weight),
                ("b_v", &ly.b_v, Bias),
                ("w_o", &ly.w_o, Weight),
                ("ln2_g", &ly.ln2_g, Gain),
                ("ln2_b", &ly.ln2_b, Bias),
                ("w_fc", &ly.w_fc, Weight),
                ("b_fc", &ly.b_fc, Bias),
                ("w_proj", &ly.w_proj, Weight),
                ("b_proj", &ly.b_proj, Bias),
            ];
            out.extend(named.into_iter().map(|(n, r, role)| (format!("layer{l}.{n}"), r.clone(), role)));
        }
        out.push(("lnf_g".into(), self.lnf_g.clone(), Gain));
        out.push(("lnf_b".into(), self.lnf_b.clone(), Bias));
        out.push(("w_unembed".into(), self.w_unembed.clone(), Weight));
        out
    }
}

/// All model weights as one flat `f64` vector plus its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub config: ModelConfig,
    pub layout: ParamLayout,
    pub data: Vec<f64>,
}

impl Parameters {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        Ok(Parameters {
            data: vec![0.0; layout.total],
            config,
            layout,
        })
    }

    /// GPT-2 style initialisation: N(0, 0.02) weights, output projections
    /// scaled by `1/sqrt(2 n_layers)`, unit gains and zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = rng::stream(seed, "init");
        let std = 0.02;
        let resid_std = std / ((2 * config.n_layers) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("valid std");
        let resid = Normal::new(0.0, resid_std).expect("valid std");
        for (name, range, role) in p.layout.tensors() {
            let slice = &mut p.data[range];
            match role {
                TensorRole::Gain => slice.fill(1.0),
                TensorRole::Bias => slice.fill(0.0),
                TensorRole::Weight => {
                    let dist = if name.ends_with("w_o") || name.ends_with("w_proj") { &resid } else { &normal };
                    for x in slice.iter_mut() {
                        *x = dist.sample(&mut rng);
                    }
                }
            }
        }
        Ok(p)
    }

    pub fn from_data(config: ModelConfig, data: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if data.len() != layout.total {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters for config, found {}",
                layout.total,
                data.len()
            )));
        }
        Ok(Parameters { config, layout, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    #[inline]
    pub fn slice(&self, r: &Range<usize>) -> &[f64] {
        &self.data[r.clone()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Init,
    Stage1,
    Stage2,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Init => "init",
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Parameters,
    pub stage: Stage,
    pub step: usize,
    /// Mean next-token loss on the stage's fixed probe set at this step.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub stage: Stage,
    pub step: usize,
    pub loss: f64,
}

const MAGIC: &[u8; 8] = b"CCKPT\0\0\x01";
const FORMAT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            stage: self.stage,
            step: self.step,
            loss: self.loss,
        }
    }

    /// Binary container: magic, `u32` version, six `u64` config fields, `u64`
    /// parameter count, then the parameters as little-endian `f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        let c = &self.params.config;
        for v in [c.n_layers, c.n_heads, c.d_model, c.d_mlp, c.context_len, c.vocab_size] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&(self.params.data.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.params.data.len() * 8);
        for x in &self.params.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_params<R: Read>(mut r: R) -> Result<Parameters> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut next = || -> Result<usize> {
            let mut b8 = [0u8; 8];
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8) as usize)
        };
        let config = ModelConfig {
            n_layers: next()?,
            n_heads: next()?,
            d_model: next()?,
            d_mlp: next()?,
            context_len: next()?,
            vocab_size: next()?,
        };
        let n = next()?;
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Parameters::from_data(config, data)
    }

    /// Writes `path` and the JSON sidecar `path.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))?;
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&self.meta())? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let f = std::fs::File::open(path)?;
        let params = Self::read_params(std::io::BufReader::new(f))?;
        let meta: CheckpointMeta = match std::fs::read_to_string(sidecar_path(path)) {
            Ok(s) => serde_json::from_str(&s)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => CheckpointMeta {
                stage: Stage::Init,
                step: 0,
                loss: f64::NAN,
            },
            Err(e) => return Err(e.into()),
        };
        Ok(Checkpoint {
            params,
            stage: meta.stage,
            step: meta.step,
            loss: meta.loss,
        })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 8,
            d_mlp: 16,
            context_len: 6,
            vocab_size: 11,
        }
    }

    #[test]
    fn layout_is_contiguous_and_complete() {
        let layout = ParamLayout::new(&cfg());
        let mut end = 0;
        for (_, r, _) in layout.tensors() {
            assert_eq!(r.start, end);
            end = r.end;
        }
        assert_eq!(end, layout.total);
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(ModelConfig { n_layers: 0, ..cfg() }.validate().is_err());
        assert!(ModelConfig { n_heads: 3, ..cfg() }.validate().is_err());
    }

    #[test]
    fn init_is_seeded() {
        let a = Parameters::init(cfg(), 1).unwrap();
        assert_eq!(a, Parameters::init(cfg(), 1).unwrap());
        assert_ne!(a, Parameters::init(cfg(), 2).unwrap());
        assert!(a.all_finite());
        assert!(a.slice(&a.layout.lnf_g).iter().all(|&g| g == 1.0));
    }

    #[test]
    fn binary_roundtrip_is_bit_exact() {
        let ck = Checkpoint {
            params: Parameters::init(cfg(), 3).unwrap(),
            stage: Stage::Stage1,
            step: 40,
            loss: 1.25,
        };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_params(buf.as_slice()).unwrap();
        assert_eq!(back.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), ck.params.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        buf[0] = b'X';
        assert!(Checkpoint::read_params(buf.as_slice()).is_err());
    }

    #[test]
    fn save_and_load_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let ck = Checkpoint {
            params: Parameters::init(cfg(), 3).unwrap(),
            stage: Stage::Stage2,
            step: 7,
            loss: 0.5,
        };
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }
}
