//! Transformer models as sequences of linear-projection GEMMs.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{ema_closed_form, SchemeEma};
use crate::error::{Error, Result};
use crate::gemm::{validate, EmaBreakdown, GemmShape, Scheme, TileConfig};
use crate::policy::{choose_scheme, fit_psum_window, PolicyDecision};

/// Where a preset value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldSource {
    /// Published evaluation setting for the model.
    Published,
    /// Public model definition.
    PublicModel,
    /// Conventional `4 × hidden` FFN width, no published value used.
    Assumed,
    /// Set by a configuration file.
    Config,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelProvenance {
    pub hidden_dim: FieldSource,
    pub ffn_dim: FieldSource,
    pub num_layers: FieldSource,
    pub default_seq_len: FieldSource,
}

impl ModelProvenance {
    pub const CONFIG: Self = Self {
        hidden_dim: FieldSource::Config,
        ffn_dim: FieldSource::Config,
        num_layers: FieldSource::Config,
        default_seq_len: FieldSource::Config,
    };
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub hidden_dim: u64,
    pub ffn_dim: u64,
    pub num_layers: u64,
    pub default_seq_len: u64,
    pub provenance: ModelProvenance,
}

impl ModelConfig {
    pub fn check(&self) -> Result<()> {
        for (field, v) in [
            ("hidden_dim", self.hidden_dim),
            ("ffn_dim", self.ffn_dim),
            ("num_layers", self.num_layers),
            ("default_seq_len", self.default_seq_len),
        ] {
            if v == 0 {
                return Err(Error::ZeroDimension(field));
            }
        }
        Ok(())
    }
}

pub const PRESET_NAMES: [&str; 5] = [
    "vit-g14",
    "wav2vec2-xls-r",
    "gpt3",
    "bert-base",
    "wav2vec2-large",
];

/// Built-in model presets.
pub fn preset(name: &str) -> Result<ModelConfig> {
    use FieldSource::*;
    let (hidden, ffn, layers, seq, provenance) = match name {
        "vit-g14" => (4096, 16_384, 48, 518, (Published, Assumed, PublicModel, Published)),
        "wav2vec2-xls-r" => (2560, 10_240, 48, 1536, (Published, Assumed, PublicModel, Published)),
        "gpt3" => (12_288, 49_152, 96, 2048, (Published, PublicModel, PublicModel, Published)),
        "bert-base" => (768, 3072, 12, 512, (PublicModel, PublicModel, PublicModel, PublicModel)),
        // Hidden width is the one consistent with the reused-matrix sizes
        // reported for this model; 384 tokens is the average utterance.
        "wav2vec2-large" => (1024, 4096, 24, 384, (Published, PublicModel, PublicModel, Published)),
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    Ok(ModelConfig {
        name: name.to_string(),
        hidden_dim: hidden,
        ffn_dim: ffn,
        num_layers: layers,
        default_seq_len: seq,
        provenance: ModelProvenance {
            hidden_dim: provenance.0,
            ffn_dim: provenance.1,
            num_layers: provenance.2,
            default_seq_len: provenance.3,
        },
    })
}

/// Presets plus any models added or overridden by configuration.
#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    models: BTreeMap<String, ModelConfig>,
}

impl ModelRegistry {
    pub fn with_presets() -> Self {
        let models = PRESET_NAMES
            .iter()
            .map(|n| (n.to_string(), preset(n).expect("built-in preset")))
            .collect();
        Self { models }
    }

    pub fn insert(&mut self, model: ModelConfig) -> Result<()> {
        model.check()?;
        self.models.insert(model.name.clone(), model);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&ModelConfig> {
        self.models
            .get(name)
            .ok_or_else(|| Error::UnknownModel(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &ModelConfig> {
        self.models.values()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GemmLabel {
    Query,
    Key,
    Value,
    AttnOut,
    FfnUp,
    FfnDown,
    /// `Q·Kᵀ` with heads concatenated. Off unless requested.
    AttnScore,
    /// `softmax(QKᵀ)·V` with heads concatenated. Off unless requested.
    AttnContext,
    /// Pooler projection on the first token. Off unless requested.
    Pooler,
}

impl GemmLabel {
    pub fn name(&self) -> &'static str {
        match self {
            GemmLabel::Query => "query",
            GemmLabel::Key => "key",
            GemmLabel::Value => "value",
            GemmLabel::AttnOut => "attn_out",
            GemmLabel::FfnUp => "ffn_up",
            GemmLabel::FfnDown => "ffn_down",
            GemmLabel::AttnScore => "attn_score",
            GemmLabel::AttnContext => "attn_context",
            GemmLabel::Pooler => "pooler",
        }
    }
}

impl fmt::Display for GemmLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LabeledGemm {
    pub label: GemmLabel,
    pub shape: GemmShape,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerGemms {
    pub layer_id: u64,
    pub gemms: Vec<LabeledGemm>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandOptions {
    /// Add the attention-score and context GEMMs to every layer.
    pub include_attention: bool,
    /// Append a final pooler row (one token, `hidden × hidden`).
    pub include_pooler: bool,
}

/// The six linear projections of every layer at `seq_len` tokens.
pub fn expand(config: &ModelConfig, seq_len: u64) -> Vec<LayerGemms> {
    expand_with(config, seq_len, ExpandOptions::default())
}

pub fn expand_with(config: &ModelConfig, seq_len: u64, options: ExpandOptions) -> Vec<LayerGemms> {
    let (s, h, f) = (seq_len, config.hidden_dim, config.ffn_dim);
    let g = |label, m, n, k| LabeledGemm {
        label,
        shape: GemmShape::new(m, n, k),
    };
    let mut layers: Vec<LayerGemms> = (0..config.num_layers)
        .map(|layer_id| {
            let mut gemms = vec![
                g(GemmLabel::Query, s, h, h),
                g(GemmLabel::Key, s, h, h),
                g(GemmLabel::Value, s, h, h),
            ];
            if options.include_attention {
                gemms.push(g(GemmLabel::AttnScore, s, h, s));
                gemms.push(g(GemmLabel::AttnContext, s, s, h));
            }
            gemms.extend([
                g(GemmLabel::AttnOut, s, h, h),
                g(GemmLabel::FfnUp, s, h, f),
                g(GemmLabel::FfnDown, s, f, h),
            ]);
            LayerGemms { layer_id, gemms }
        })
        .collect();
    if options.include_pooler {
        layers.push(LayerGemms {
            layer_id: config.num_layers,
            gemms: vec![g(GemmLabel::Pooler, 1, h, h)],
        });
    }
    layers
}

/// How each GEMM of a workload is validated and evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    pub strict: bool,
    /// When set, the hybrid psum window is sized to fit this many elements
    /// (unless the tiles already carry one).
    pub psum_capacity: Option<u64>,
    pub expand: ExpandOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GemmEma {
    pub label: Option<GemmLabel>,
    pub shape: GemmShape,
    /// Tiles after fitting to the shape, windows resolved.
    pub tiles: TileConfig,
    pub decision: Option<PolicyDecision>,
    pub result: SchemeEma,
}

impl GemmEma {
    pub fn decision_value(&self) -> i64 {
        self.decision
            .map(|d| d.decision_value)
            .unwrap_or_else(|| choose_scheme(&self.shape).decision_value)
    }
}

/// Closed-form EMA of one GEMM under a fixed scheme or `Tas`. Tiles larger
/// than the GEMM are shrunk to its extents first.
pub fn evaluate_gemm(
    shape: &GemmShape,
    tiles: &TileConfig,
    scheme: Scheme,
    options: &EvalOptions,
) -> Result<GemmEma> {
    let decision = (scheme == Scheme::Tas).then(|| choose_scheme(shape));
    let resolved = decision.map_or(scheme, |d| d.chosen);
    let mut fitted = tiles.fitted_to(shape);
    if let Some(capacity) = options.psum_capacity {
        validate(*shape, fitted, options.strict)?;
        fitted = fit_psum_window(shape, &fitted, resolved, capacity, options.strict).ok_or(
            Error::InsufficientPsumCapacity {
                required: fitted.m * fitted.k,
                available: capacity,
            },
        )?;
    }
    let problem = validate(*shape, fitted, options.strict)?;
    Ok(GemmEma {
        label: None,
        shape: *shape,
        tiles: problem.tiles(),
        decision,
        result: ema_closed_form(&problem, resolved)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerEma {
    pub layer_id: u64,
    pub gemms: Vec<GemmEma>,
    pub total: EmaBreakdown,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkloadEma {
    pub model: String,
    pub seq_len: u64,
    pub scheme: Scheme,
    pub layers: Vec<LayerEma>,
    pub total: EmaBreakdown,
    pub macs: u64,
}

/// Sums closed-form EMA over every GEMM of the model, layer by layer.
pub fn workload_ema(
    config: &ModelConfig,
    seq_len: u64,
    tiles: &TileConfig,
    scheme: Scheme,
    options: &EvalOptions,
) -> Result<WorkloadEma> {
    if seq_len == 0 {
        return Err(Error::ZeroDimension("seq_len"));
    }
    let layers = expand_with(config, seq_len, options.expand)
        .into_par_iter()
        .map(|layer| {
            let gemms = layer
                .gemms
                .iter()
                .map(|g| {
                    evaluate_gemm(&g.shape, tiles, scheme, options).map(|e| GemmEma {
                        label: Some(g.label),
                        ..e
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(LayerEma {
                layer_id: layer.layer_id,
                total: gemms.iter().map(|g| g.result.breakdown).sum(),
                macs: gemms.iter().map(|g| g.shape.macs()).sum(),
                gemms,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WorkloadEma {
        model: config.name.clone(),
        seq_len,
        scheme,
        total: layers.iter().map(|l| l.total).sum(),
        macs: layers.iter().map(|l| l.macs).sum(),
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::reduction_ratio;

    #[test]
    fn table_presets() {
        let vit = preset("vit-g14").unwrap();
        assert_eq!((vit.hidden_dim, vit.default_seq_len), (4096, 518));
        let gpt = preset("gpt3").unwrap();
        assert_eq!((gpt.hidden_dim, gpt.default_seq_len), (12_288, 2048));
        let xls = preset("wav2vec2-xls-r").unwrap();
        assert_eq!((xls.hidden_dim, xls.default_seq_len), (2560, 1536));
        let w2v = preset("wav2vec2-large").unwrap();
        assert_eq!(
            (w2v.hidden_dim, w2v.ffn_dim, w2v.num_layers, w2v.default_seq_len),
            (1024, 4096, 24, 384)
        );
        assert_eq!(preset("llama"), Err(Error::UnknownModel("llama".into())));
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            assert!(p.ffn_dim >= p.hidden_dim);
        }
    }

    #[test]
    fn bert_layers() {
        let layers = expand(&preset("bert-base").unwrap(), 512);
        assert_eq!(layers.len(), 12);
        assert!(layers.iter().all(|l| l.gemms.len() == 6));
        assert_eq!(layers[0].gemms[0].label, GemmLabel::Query);
        assert_eq!(layers[0].gemms[0].shape, GemmShape::new(512, 768, 768));
        assert_eq!(layers[3].gemms[4].shape, GemmShape::new(512, 768, 3072));
        assert_eq!(layers[3].gemms[5].shape, GemmShape::new(512, 3072, 768));
    }

    #[test]
    fn single_token_rows() {
        let layers = expand(&preset("gpt3").unwrap(), 1);
        assert!(layers.iter().flat_map(|l| &l.gemms).all(|g| g.shape.m == 1));
    }

    #[test]
    fn optional_rows() {
        let cfg = preset("bert-base").unwrap();
        let layers = expand_with(
            &cfg,
            64,
            ExpandOptions {
                include_attention: true,
                include_pooler: true,
            },
        );
        assert_eq!(layers.len(), 13);
        assert_eq!(layers[0].gemms.len(), 8);
        assert_eq!(layers[12].layer_id, 12);
        assert_eq!(layers[12].gemms[0].shape, GemmShape::new(1, 768, 768));
    }

    #[test]
    fn wav2vec2_short_query_reuse() {
        let layers = expand(&preset("wav2vec2-large").unwrap(), 115);
        let q = layers[0].gemms[0].shape;
        assert_eq!(q, GemmShape::new(115, 1024, 1024));
        assert_eq!(choose_scheme(&q).reused_matrix_elems, 117_760);
    }

    #[test]
    fn bert_tas_against_naive_and_fixed_is() {
        let cfg = preset("bert-base").unwrap();
        let tiles = TileConfig::square(16);
        let opts = EvalOptions::default();
        let tas = workload_ema(&cfg, 512, &tiles, Scheme::Tas, &opts).unwrap();
        let naive = workload_ema(&cfg, 512, &tiles, Scheme::Naive, &opts).unwrap();
        let is = workload_ema(&cfg, 512, &tiles, Scheme::InputStationary, &opts).unwrap();
        for (t, n) in tas.layers.iter().zip(&naive.layers) {
            assert!(reduction_ratio(&n.total, &t.total).unwrap() >= 0.97);
        }
        assert!(tas.total.total() <= is.total.total());
        assert!(tas
            .layers
            .iter()
            .flat_map(|l| &l.gemms)
            .all(|g| g.result.scheme == Scheme::InputStationaryOs));
    }

    #[test]
    fn single_token_tas_is_input_stationary() {
        let cfg = preset("vit-g14").unwrap();
        let w = workload_ema(&cfg, 1, &TileConfig::square(16), Scheme::Tas, &EvalOptions::default())
            .unwrap();
        assert!(w
            .layers
            .iter()
            .flat_map(|l| &l.gemms)
            .all(|g| g.result.scheme == Scheme::InputStationaryOs));
    }

    #[test]
    fn psum_capacity_narrows_the_window() {
        let opts = EvalOptions {
            psum_capacity: Some(16 * 256),
            ..EvalOptions::default()
        };
        let g = evaluate_gemm(&GemmShape::new(115, 1024, 1024), &TileConfig::square(16), Scheme::Tas, &opts)
            .unwrap();
        assert_eq!(g.tiles.k_prime, Some(256));
        assert_eq!(g.result.breakdown.input_elems, 4 * 117_760);
    }
}
