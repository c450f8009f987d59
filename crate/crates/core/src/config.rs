//! Flat `section.key = value` run configuration for the command-line tool.
//!
//! Every key has a default; a file only lists what it changes. Lines starting
//! with `#` are comments. Unknown keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::corpus::{ClassWeights, WeightMode};
use crate::model::{Ablation, ModelConfig};
use crate::train::{SelectionMetric, TrainConfig};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    #[default]
    Static,
    /// Precomputed per-token vectors read from a sidecar.
    Contextual,
}

/// How the BETTER/WORSE minority is handled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ImbalanceMode {
    /// Class-weighted loss, plain data.
    #[default]
    Weighted,
    /// Label-flipped copies of BETTER/WORSE, uniform loss weights.
    Flip,
    /// Duplicated BETTER/WORSE up to the NONE count, uniform loss weights.
    Upsample,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    /// Unsplit CPC corpus, split 80/20 and then dev-carved with the run seed.
    pub cpc: Option<PathBuf>,
    /// Pre-split corpora. When `cpc_train` is set, `cpc` is ignored; a
    /// missing dev file is carved from train.
    pub cpc_train: Option<PathBuf>,
    pub cpc_dev: Option<PathBuf>,
    pub cpc_test: Option<PathBuf>,
    pub absa_train: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Sidecar prefix (`<prefix>.json` + `<prefix>.bin`).
    pub sidecar: Option<PathBuf>,
    /// CoNLL-U files; sentences without a parse use a chain graph.
    pub parses: Vec<PathBuf>,
    pub encoder: EncoderMode,
    pub imbalance: ImbalanceMode,
    /// Loss weighting under `imbalance = weighted`.
    pub weight_mode: WeightMode,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            cpc: Some("data/cpc.jsonl".into()),
            cpc_train: None,
            cpc_dev: None,
            cpc_test: None,
            absa_train: Some("data/absa.jsonl".into()),
            embeddings: Some("data/embeddings.txt".into()),
            sidecar: None,
            parses: vec!["data/parses.conllu".into()],
            encoder: EncoderMode::Static,
            imbalance: ImbalanceMode::Weighted,
            weight_mode: WeightMode::Configured,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub data: DataConfig,
    /// `d0` and `n_labels` are filled in from the data at build time.
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn parse_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str, sep: char) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(sep)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_ablation(value: &str) -> Result<Ablation> {
    Ablation::ALL
        .into_iter()
        .find(|a| a.as_str() == value || a.as_str().trim_start_matches('-') == value)
        .ok_or_else(|| Error::Config(format!("unknown ablation {value:?} (full|-bilstm|-sgcn|-grl|-analyzer)")))
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn weight_mode_str(m: WeightMode) -> &'static str {
    match m {
        WeightMode::Configured => "configured",
        WeightMode::Uniform => "uniform",
        WeightMode::InverseFrequency => "inverse_freq",
    }
}

impl RunConfig {
    /// `default` (or an empty string) gives the built-in defaults; anything
    /// else is read as a file.
    pub fn load(source: &str) -> Result<Self> {
        let mut cfg = Self::default();
        if source.is_empty() || source == "default" {
            return Ok(cfg);
        }
        let path = Path::new(source);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                field: "<line>".into(),
                message: "expected key = value".into(),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                field: key.trim().to_string(),
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Applies a `KEY=VALUE` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {pair:?} is not KEY=VALUE")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (d, m, t) = (&mut self.data, &mut self.model, &mut self.train);
        match key {
            "data.cpc" => d.cpc = parse_path(value),
            "data.cpc_train" => d.cpc_train = parse_path(value),
            "data.cpc_dev" => d.cpc_dev = parse_path(value),
            "data.cpc_test" => d.cpc_test = parse_path(value),
            "data.absa_train" => d.absa_train = parse_path(value),
            "data.embeddings" => d.embeddings = parse_path(value),
            "data.sidecar" => d.sidecar = parse_path(value),
            "data.parses" => d.parses = value.split(',').filter_map(|s| parse_path(s.trim())).collect(),
            "data.encoder" => {
                d.encoder = match value {
                    "static" => EncoderMode::Static,
                    "contextual" => EncoderMode::Contextual,
                    _ => return Err(Error::Config(format!("{key}: expected static|contextual, got {value:?}"))),
                }
            }
            "data.imbalance" => {
                d.imbalance = match value {
                    "weighted" => ImbalanceMode::Weighted,
                    "flip" => ImbalanceMode::Flip,
                    "upsample" => ImbalanceMode::Upsample,
                    "none" => ImbalanceMode::None,
                    _ => {
                        return Err(Error::Config(format!(
                            "{key}: expected weighted|flip|upsample|none, got {value:?}"
                        )))
                    }
                }
            }
            "data.weight_mode" => {
                d.weight_mode = match value {
                    "configured" => WeightMode::Configured,
                    "uniform" => WeightMode::Uniform,
                    "inverse_freq" => WeightMode::InverseFrequency,
                    _ => {
                        return Err(Error::Config(format!(
                            "{key}: expected configured|uniform|inverse_freq, got {value:?}"
                        )))
                    }
                }
            }

            "model.dim" => *m = m.clone().with_feature_dim(parse_num(key, value)?),
            "model.d_g" => m.d_g = parse_num(key, value)?,
            "model.d_l" => m.d_l = parse_num(key, value)?,
            "model.d_s" => m.d_s = parse_num(key, value)?,
            "model.sgcn_hidden" => m.sgcn_hidden = parse_list(key, value, ',')?,
            "model.sgcn_layers" => {
                let layers: usize = parse_num(key, value)?;
                if layers == 0 {
                    return Err(Error::Config(format!("{key}: at least one layer")));
                }
                let width = m.sgcn_hidden.first().copied().unwrap_or(256);
                m.sgcn_hidden = vec![width; layers - 1];
            }
            "model.analyzer_hidden" => m.analyzer_hidden = parse_num(key, value)?,
            "model.window" => m.window = parse_num(key, value)?,
            "model.entity_proj" => m.entity_proj = parse_num(key, value)?,
            "model.head_hidden" => m.head_hidden = parse_num(key, value)?,
            "model.aggregation" => m.aggregation = value.parse()?,
            "model.gated" => m.gated = parse_bool(key, value)?,
            "model.directed" => m.directed = parse_bool(key, value)?,
            "model.use_bilstm" => m.use_bilstm = parse_bool(key, value)?,
            "model.use_sgcn" => m.use_sgcn = parse_bool(key, value)?,
            "model.use_grl" => m.use_grl = parse_bool(key, value)?,
            "model.use_analyzer" => m.use_analyzer = parse_bool(key, value)?,
            "model.grl_alpha" => m.grl_alpha = parse_num(key, value)?,
            "model.ablation" => parse_ablation(value)?.apply(m),

            "train.lr" => t.lr = parse_num(key, value)?,
            "train.lambda" => t.loss.lambda = parse_num(key, value)?,
            "train.lambda_s" => t.loss.lambda_s = parse_num(key, value)?,
            "train.lambda_d" => t.loss.lambda_d = parse_num(key, value)?,
            "train.class_weights" => {
                let w: Vec<f64> = parse_list(key, value, ':')?;
                let [b, wo, n] = w[..] else {
                    return Err(Error::Config(format!("{key}: expected B:W:N, got {value:?}")));
                };
                t.class_weights = ClassWeights::new(b, wo, n)?;
            }
            "train.batch_size" => t.schedule.batch_size = parse_num(key, value)?,
            "train.batch_ratio" => {
                let r: Vec<usize> = parse_list(key, value, ':')?;
                let [c, a] = r[..] else {
                    return Err(Error::Config(format!("{key}: expected CPC:ABSA, got {value:?}")));
                };
                t.schedule.ratio_cpc = c;
                t.schedule.ratio_absa = a;
            }
            "train.epochs" => t.epochs = parse_num(key, value)?,
            "train.seed" => t.seed = parse_num(key, value)?,
            "train.beta1" => t.beta1 = parse_num(key, value)?,
            "train.beta2" => t.beta2 = parse_num(key, value)?,
            "train.lr_step_epochs" => t.lr_step_epochs = parse_num(key, value)?,
            "train.lr_gamma" => t.lr_gamma = parse_num(key, value)?,
            "train.selection" => t.selection = value.parse::<SelectionMetric>()?,
            "train.stop_at" => t.stop_at = if value.is_empty() { None } else { Some(parse_num(key, value)?) },
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Canonical `key = value` lines; reading them back gives `self`.
    pub fn to_text(&self) -> String {
        let (d, m, t) = (&self.data, &self.model, &self.train);
        let (b, w, n) = t.class_weights.as_triple();
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let encoder = match d.encoder {
            EncoderMode::Static => "static",
            EncoderMode::Contextual => "contextual",
        };
        let imbalance = match d.imbalance {
            ImbalanceMode::Weighted => "weighted",
            ImbalanceMode::Flip => "flip",
            ImbalanceMode::Upsample => "upsample",
            ImbalanceMode::None => "none",
        };
        let selection = match t.selection {
            SelectionMetric::DevMicroF1 => "dev_micro_f1",
            SelectionMetric::DevMacroF1 => "dev_macro_f1",
            SelectionMetric::LastEpoch => "last_epoch",
        };
        let aggregation = match m.aggregation {
            crate::context::Aggregation::Sum => "sum",
            crate::context::Aggregation::Mean => "mean",
        };
        let parses: Vec<String> = d.parses.iter().map(|p| p.display().to_string()).collect();
        let pairs: Vec<(&str, String)> = vec![
            ("data.cpc", path_str(&d.cpc)),
            ("data.cpc_train", path_str(&d.cpc_train)),
            ("data.cpc_dev", path_str(&d.cpc_dev)),
            ("data.cpc_test", path_str(&d.cpc_test)),
            ("data.absa_train", path_str(&d.absa_train)),
            ("data.embeddings", path_str(&d.embeddings)),
            ("data.sidecar", path_str(&d.sidecar)),
            ("data.parses", parses.join(",")),
            ("data.encoder", encoder.into()),
            ("data.imbalance", imbalance.into()),
            ("data.weight_mode", weight_mode_str(d.weight_mode).into()),
            ("model.d_g", m.d_g.to_string()),
            ("model.d_l", m.d_l.to_string()),
            ("model.d_s", m.d_s.to_string()),
            ("model.sgcn_hidden", join(&m.sgcn_hidden)),
            ("model.analyzer_hidden", m.analyzer_hidden.to_string()),
            ("model.window", m.window.to_string()),
            ("model.entity_proj", m.entity_proj.to_string()),
            ("model.head_hidden", m.head_hidden.to_string()),
            ("model.aggregation", aggregation.into()),
            ("model.gated", m.gated.to_string()),
            ("model.directed", m.directed.to_string()),
            ("model.use_bilstm", m.use_bilstm.to_string()),
            ("model.use_sgcn", m.use_sgcn.to_string()),
            ("model.use_grl", m.use_grl.to_string()),
            ("model.use_analyzer", m.use_analyzer.to_string()),
            ("model.grl_alpha", m.grl_alpha.to_string()),
            ("train.lr", t.lr.to_string()),
            ("train.lambda", t.loss.lambda.to_string()),
            ("train.lambda_s", t.loss.lambda_s.to_string()),
            ("train.lambda_d", t.loss.lambda_d.to_string()),
            ("train.class_weights", format!("{b}:{w}:{n}")),
            ("train.batch_size", t.schedule.batch_size.to_string()),
            ("train.batch_ratio", format!("{}:{}", t.schedule.ratio_cpc, t.schedule.ratio_absa)),
            ("train.epochs", t.epochs.to_string()),
            ("train.seed", t.seed.to_string()),
            ("train.beta1", t.beta1.to_string()),
            ("train.beta2", t.beta2.to_string()),
            ("train.lr_step_epochs", t.lr_step_epochs.to_string()),
            ("train.lr_gamma", t.lr_gamma.to_string()),
            ("train.selection", selection.into()),
            ("train.stop_at", t.stop_at.map(|v| v.to_string()).unwrap_or_default()),
        ];
        let mut s = String::new();
        for (k, v) in pairs {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }

    /// Loss weights implied by the imbalance mode.
    pub fn effective_class_weights(&self, counts: &crate::corpus::ClassCounts) -> Result<ClassWeights> {
        let mode = match self.data.imbalance {
            ImbalanceMode::Weighted => self.data.weight_mode,
            _ => WeightMode::Uniform,
        };
        crate::corpus::class_weights(mode, Some(&self.train.class_weights), counts)
    }
}

/// Canonical key for a sweep parameter, accepting short aliases.
pub fn sweep_key(param: &str) -> &str {
    match param {
        "lr" => "train.lr",
        "dim" => "model.dim",
        "lambda" => "train.lambda",
        "lambda_s" => "train.lambda_s",
        "lambda_d" => "train.lambda_d",
        "layers" => "model.sgcn_layers",
        "alpha" => "model.grl_alpha",
        "ratio" => "train.batch_ratio",
        "batch_size" => "train.batch_size",
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_settings() {
        let c = RunConfig::load("default").unwrap();
        assert_eq!(c.train.lr, 5e-4);
        assert_eq!(c.train.schedule.batch_size, 16);
        assert_eq!(c.train.class_weights.as_triple(), (2.0, 4.0, 1.0));
        assert_eq!(c.train.loss.lambda, 1e-4);
        assert_eq!((c.model.d_g, c.model.d_l, c.model.d_s), (240, 240, 240));
        assert_eq!(c.model.sgcn_widths()[1..], [256, 240]);
        assert_eq!(c.data.imbalance, ImbalanceMode::Weighted);
    }

    #[test]
    fn echo_reads_back_to_the_same_config() {
        let mut c = RunConfig::default();
        for pair in [
            "train.lr=0.001",
            "model.dim=64",
            "model.sgcn_layers=3",
            "model.ablation=-bilstm",
            "data.parses=a.conllu,b.conllu",
            "data.cpc_dev=",
            "train.class_weights=1:2.5:1",
            "train.batch_ratio=2:3",
            "train.selection=last",
            "train.stop_at=0.99",
            "data.imbalance=flip",
        ] {
            c.set_pair(pair).unwrap();
        }
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text(), Path::new("echo")).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.model.sgcn_hidden, vec![256, 256]);
        assert!(!c.model.use_bilstm);
        assert_eq!(c.model.analyzer_hidden, 32);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut c = RunConfig::default();
        assert!(matches!(c.set("train.learning_rate", "1"), Err(Error::Config(_))));
        assert!(c.set("train.lr", "fast").is_err());
        assert!(c.set("train.class_weights", "1:2").is_err());
        assert!(c.set("model.gated", "maybe").is_err());
        assert!(c.set_pair("train.lr").is_err());
        let err = c
            .apply_text("# comment\n\ntrain.epochs = 3\nbogus = 1\n", Path::new("f.cfg"))
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        assert_eq!(c.train.epochs, 3);
    }

    #[test]
    fn imbalance_modes_pick_loss_weights() {
        let counts = [(crate::corpus::CpcLabel::Better, 1), (crate::corpus::CpcLabel::Worse, 1), (crate::corpus::CpcLabel::None, 2)]
            .into_iter()
            .collect();
        let mut c = RunConfig::default();
        assert_eq!(c.effective_class_weights(&counts).unwrap().as_triple(), (2.0, 4.0, 1.0));
        c.set("data.imbalance", "flip").unwrap();
        assert_eq!(c.effective_class_weights(&counts).unwrap().as_triple(), (1.0, 1.0, 1.0));
    }
}
