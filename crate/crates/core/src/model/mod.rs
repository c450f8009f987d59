//! The full comparative classifier: context channels, sentiment branch,
//! prediction heads and the multi-task objective.

mod loss;

use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::context::{Aggregation, GlobalExtractor, SgcnStack};
use crate::corpus::{CpcLabel, DomainLabel, SentiLabel};
use crate::encode::{EdgeIndex, TokenSpan};
use crate::nn::{cast, softmax, Activation, Float, Linear, ParamKind, ParamStore, Tape, Var};
use crate::senti::{DomainClassifier, SentimentAnalyzer};
use crate::{Error, Result};

pub use loss::{add_l2_grad, l2_reg, total_loss, LossBundle, LossWeights};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input embedding width.
    pub d0: usize,
    pub d_g: usize,
    pub d_l: usize,
    pub d_s: usize,
    /// SGCN widths between `d0` and `d_l`; one entry per extra layer.
    pub sgcn_hidden: Vec<usize>,
    /// Per-direction width of the analyzer's BiLSTM.
    pub analyzer_hidden: usize,
    pub window: usize,
    /// Width of the shared entity projector `F`.
    pub entity_proj: usize,
    /// Hidden width of `F_s` and `F_d`.
    pub head_hidden: usize,
    pub aggregation: Aggregation,
    pub gated: bool,
    pub directed: bool,
    pub use_bilstm: bool,
    pub use_sgcn: bool,
    /// Domain classifier and its loss.
    pub use_grl: bool,
    /// The whole sentiment branch. Turning it off also drops the GRL.
    pub use_analyzer: bool,
    pub grl_alpha: f64,
    /// Size of the dependency label vocabulary, UNK included.
    pub n_labels: usize,
}

impl Default for ModelConfig {
    /// Static-embedding defaults: 100 → 256 → 240.
    fn default() -> Self {
        Self {
            d0: 100,
            d_g: 240,
            d_l: 240,
            d_s: 240,
            sgcn_hidden: vec![256],
            analyzer_hidden: 120,
            window: 3,
            entity_proj: 128,
            head_hidden: 64,
            aggregation: Aggregation::Sum,
            gated: true,
            directed: true,
            use_bilstm: true,
            use_sgcn: true,
            use_grl: true,
            use_analyzer: true,
            grl_alpha: 1.0,
            n_labels: 2,
        }
    }
}

impl ModelConfig {
    /// 768-wide contextual vectors: 768 → 256 → 240.
    pub fn contextual() -> Self {
        Self {
            d0: 768,
            ..Self::default()
        }
    }

    /// Sets every feature width (and the analyzer hidden size) to `d`.
    pub fn with_feature_dim(mut self, d: usize) -> Self {
        self.d_g = d;
        self.d_l = d;
        self.d_s = d;
        self.analyzer_hidden = d.div_ceil(2);
        self
    }

    pub fn grl_active(&self) -> bool {
        self.use_analyzer && self.use_grl
    }

    /// Width of `h_e = [h_g; h_l; h_s]` after ablations.
    pub fn entity_width(&self) -> usize {
        let mut w = 0;
        if self.use_bilstm {
            w += self.d_g;
        }
        if self.use_sgcn {
            w += self.d_l;
        }
        if self.use_analyzer {
            w += self.d_s;
        }
        w
    }

    pub fn sgcn_widths(&self) -> Vec<usize> {
        let mut w = vec![self.d0];
        w.extend(&self.sgcn_hidden);
        w.push(self.d_l);
        w
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.entity_width() == 0 {
            return bad("every feature channel is disabled");
        }
        let widths = [
            self.d0,
            self.d_g,
            self.d_l,
            self.d_s,
            self.analyzer_hidden,
            self.entity_proj,
            self.head_hidden,
        ];
        if widths.contains(&0) || self.sgcn_hidden.contains(&0) {
            return bad("layer widths must be positive");
        }
        if !(self.grl_alpha >= 0.0 && self.grl_alpha.is_finite()) {
            return bad("grl alpha must be a finite non-negative number");
        }
        if self.use_sgcn && self.n_labels < 2 {
            return bad("the label vocabulary must hold UNK and at least one label");
        }
        Ok(())
    }
}

/// The ablation rows: each removes one component from the full model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ablation {
    Full,
    NoBilstm,
    NoSgcn,
    NoGrl,
    NoAnalyzer,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Full,
        Ablation::NoBilstm,
        Ablation::NoSgcn,
        Ablation::NoGrl,
        Ablation::NoAnalyzer,
    ];

    pub fn apply(self, cfg: &mut ModelConfig) {
        match self {
            Ablation::Full => {}
            Ablation::NoBilstm => cfg.use_bilstm = false,
            Ablation::NoSgcn => cfg.use_sgcn = false,
            Ablation::NoGrl => cfg.use_grl = false,
            Ablation::NoAnalyzer => {
                cfg.use_analyzer = false;
                cfg.use_grl = false;
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoBilstm => "-bilstm",
            Ablation::NoSgcn => "-sgcn",
            Ablation::NoGrl => "-grl",
            Ablation::NoAnalyzer => "-analyzer",
        }
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().trim_start_matches(['-', '!']).to_ascii_lowercase();
        let key = key.trim_start_matches("no-").trim_start_matches("no_");
        match key {
            "full" | "none" | "" => Ok(Ablation::Full),
            "bilstm" => Ok(Ablation::NoBilstm),
            "sgcn" => Ok(Ablation::NoSgcn),
            "grl" => Ok(Ablation::NoGrl),
            "analyzer" | "a+grl" | "analyzer+grl" => Ok(Ablation::NoAnalyzer),
            _ => Err(Error::Config(format!(
                "unknown ablation {s:?} (full|-bilstm|-sgcn|-grl|-analyzer)"
            ))),
        }
    }
}

/// A sentence ready for the model: `S0`, its graph, and the spans to query.
/// For CPC the spans are in query order `(e1, e2)`.
#[derive(Clone, Debug)]
pub struct SentenceInput {
    pub id: String,
    pub vectors: Array2<f32>,
    pub edges: EdgeIndex,
    pub spans: Vec<TokenSpan>,
}

#[derive(Clone, Debug)]
pub struct CpcExample {
    pub input: SentenceInput,
    pub label: CpcLabel,
}

#[derive(Clone, Debug)]
pub struct AbsaExample {
    pub input: SentenceInput,
    pub sentiment: SentiLabel,
    pub domain: DomainLabel,
}

/// Two-layer head: rectified hidden layer then affine logits.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

impl Mlp {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, d_in: usize, hidden: usize, d_out: usize) -> Self {
        Self {
            hidden: Linear::new(store, &format!("{name}.hidden"), d_in, hidden, Activation::Relu),
            output: Linear::new(store, &format!("{name}.output"), hidden, d_out, Activation::Identity),
        }
    }

    pub fn forward<T: Float>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        let h = self.hidden.forward(tape, x);
        self.output.forward(tape, h)
    }
}

/// Tape handles for one CPC forward pass.
#[derive(Clone, Debug)]
pub struct CpcVars {
    pub logits: Var,
    /// Analyzer outputs in query order (empty without the analyzer).
    pub h_s: Vec<Var>,
    pub domain_logits: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct AbsaVars {
    pub logits: Var,
    pub h_s: Var,
    pub domain_logits: Option<Var>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CpcPrediction {
    /// Over BETTER, WORSE, NONE.
    pub probs: [f64; 3],
    pub domain: Vec<[f64; 2]>,
    /// `F_s` read on each entity's analyzer output, over POS, NEU, NEG.
    pub sentiments: Vec<[f64; 3]>,
    pub h_s: Vec<Vec<f64>>,
}

impl CpcPrediction {
    pub fn label(&self) -> CpcLabel {
        CpcLabel::from_index(argmax3(&self.probs)).expect("three classes")
    }

    pub fn entity_sentiments(&self) -> Vec<SentiLabel> {
        self.sentiments
            .iter()
            .map(|p| SentiLabel::from_index(argmax3(p)).expect("three classes"))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbsaPrediction {
    /// Over POS, NEU, NEG.
    pub probs: [f64; 3],
    pub domain: Option<[f64; 2]>,
    pub h_s: Vec<f64>,
}

impl AbsaPrediction {
    pub fn label(&self) -> SentiLabel {
        SentiLabel::from_index(argmax3(&self.probs)).expect("three classes")
    }
}

fn argmax3(p: &[f64; 3]) -> usize {
    crate::nn::argmax(ndarray::ArrayView1::from(&p[..]))
}

fn probs3<T: Float>(tape: &Tape<'_, T>, logits: Var) -> [f64; 3] {
    let p = softmax(tape.value(logits).row(0));
    [p[0], p[1], p[2]]
}

fn probs2<T: Float>(tape: &Tape<'_, T>, logits: Var) -> [f64; 2] {
    let p = softmax(tape.value(logits).row(0));
    [p[0], p[1]]
}

pub struct SaeconModel<T: Float> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub global: Option<GlobalExtractor>,
    pub sgcn: Option<SgcnStack>,
    pub analyzer: Option<SentimentAnalyzer>,
    /// `F_s`.
    pub senti_head: Option<Mlp>,
    /// `F_d`.
    pub domain: Option<DomainClassifier>,
    /// `F`, shared by both entities.
    pub entity_proj: Linear,
    /// `F_c`, affine.
    pub cpc_head: Linear,
}

impl<T: Float> SaeconModel<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(seed);
        let c = &config;
        let global = c
            .use_bilstm
            .then(|| GlobalExtractor::new(&mut store, "global", c.d0, c.d_g));
        let sgcn = c.use_sgcn.then(|| {
            SgcnStack::new(
                &mut store,
                "sgcn",
                &c.sgcn_widths(),
                c.n_labels,
                c.aggregation,
                c.gated,
                c.directed,
            )
        });
        let analyzer = c.use_analyzer.then(|| {
            SentimentAnalyzer::new(&mut store, "analyzer", c.d0, c.analyzer_hidden, c.d_s, c.window)
        });
        let senti_head = c
            .use_analyzer
            .then(|| Mlp::new(&mut store, "senti_head", c.d_s, c.head_hidden, 3));
        let domain = c
            .grl_active()
            .then(|| DomainClassifier::new(&mut store, "domain", c.d_s, c.head_hidden));
        let entity_proj = Linear::new(&mut store, "entity_proj", c.entity_width(), c.entity_proj, Activation::Relu);
        let cpc_head = Linear::new(&mut store, "cpc_head", 2 * c.entity_proj, 3, Activation::Identity);
        Ok(Self {
            config,
            store,
            global,
            sgcn,
            analyzer,
            senti_head,
            domain,
            entity_proj,
            cpc_head,
        })
    }

    /// Same architecture and parameter values in another precision.
    pub fn cast<U: Float>(&self) -> SaeconModel<U> {
        let mut out = SaeconModel::<U>::new(self.config.clone(), self.store.seed()).expect("validated config");
        for (id, p) in self.store.iter() {
            out.store.get_mut(id).value = crate::nn::cast_array(&p.value);
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    fn s0(&self, tape: &mut Tape<'_, T>, input: &SentenceInput) -> Result<Var> {
        if input.vectors.ncols() != self.config.d0 {
            return Err(Error::shape(
                format!("{}-wide input vectors", self.config.d0),
                input.vectors.ncols().to_string(),
            ));
        }
        if input.vectors.nrows() != input.edges.n {
            return Err(Error::shape(
                format!("{} rows for the graph of {:?}", input.edges.n, input.id),
                input.vectors.nrows().to_string(),
            ));
        }
        Ok(tape.constant(input.vectors.mapv(|v| cast::<T>(f64::from(v)))))
    }

    pub fn cpc_vars(&self, tape: &mut Tape<'_, T>, input: &SentenceInput) -> Result<CpcVars> {
        if input.spans.len() != 2 {
            return Err(Error::Data(format!(
                "{:?}: a comparison needs two entities, got {}",
                input.id,
                input.spans.len()
            )));
        }
        let s0 = self.s0(tape, input)?;
        let mut channels: Vec<Vec<Var>> = Vec::new();
        if let Some(g) = &self.global {
            channels.push(g.global_context(tape, s0, &input.spans)?);
        }
        if let Some(s) = &self.sgcn {
            channels.push(s.local_context(tape, s0, &input.edges, &input.spans)?);
        }
        let mut h_s = Vec::new();
        if let Some(a) = &self.analyzer {
            h_s = a.analyze(tape, s0, Some(&input.edges), &input.spans)?;
            channels.push(h_s.clone());
        }
        let projected: Vec<Var> = (0..2)
            .map(|i| {
                let parts: Vec<Var> = channels.iter().map(|c| c[i]).collect();
                let h_e = tape.concat_cols(&parts);
                self.entity_proj.forward(tape, h_e)
            })
            .collect();
        let pair = tape.concat_cols(&projected);
        let logits = self.cpc_head.forward(tape, pair);
        let domain_logits = match &self.domain {
            Some(dc) => h_s
                .iter()
                .map(|&h| dc.logits(tape, h, self.config.grl_alpha))
                .collect(),
            None => Vec::new(),
        };
        Ok(CpcVars {
            logits,
            h_s,
            domain_logits,
        })
    }

    pub fn absa_vars(&self, tape: &mut Tape<'_, T>, input: &SentenceInput) -> Result<AbsaVars> {
        let (Some(analyzer), Some(head)) = (&self.analyzer, &self.senti_head) else {
            return Err(Error::Config("sentiment queries need the analyzer branch".into()));
        };
        if input.spans.len() != 1 {
            return Err(Error::Data(format!(
                "{:?}: an aspect query needs one span, got {}",
                input.id,
                input.spans.len()
            )));
        }
        let s0 = self.s0(tape, input)?;
        let h_s = analyzer.analyze(tape, s0, Some(&input.edges), &input.spans)?[0];
        let logits = head.forward(tape, h_s);
        let domain_logits = self
            .domain
            .as_ref()
            .map(|dc| dc.logits(tape, h_s, self.config.grl_alpha));
        Ok(AbsaVars {
            logits,
            h_s,
            domain_logits,
        })
    }

    pub fn cpc_forward(&self, input: &SentenceInput) -> Result<CpcPrediction> {
        let mut tape = Tape::new(&self.store);
        let v = self.cpc_vars(&mut tape, input)?;
        let sentiments = match &self.senti_head {
            Some(head) => v
                .h_s
                .iter()
                .map(|&h| {
                    let z = head.forward(&mut tape, h);
                    probs3(&tape, z)
                })
                .collect(),
            None => Vec::new(),
        };
        Ok(CpcPrediction {
            probs: probs3(&tape, v.logits),
            domain: v.domain_logits.iter().map(|&z| probs2(&tape, z)).collect(),
            sentiments,
            h_s: v.h_s.iter().map(|&h| row_f64(&tape, h)).collect(),
        })
    }

    pub fn absa_forward(&self, input: &SentenceInput) -> Result<AbsaPrediction> {
        let mut tape = Tape::new(&self.store);
        let v = self.absa_vars(&mut tape, input)?;
        Ok(AbsaPrediction {
            probs: probs3(&tape, v.logits),
            domain: v.domain_logits.map(|z| probs2(&tape, z)),
            h_s: row_f64(&tape, v.h_s),
        })
    }

    /// Per-instance CPC objective (without the batch-level L2 term):
    /// `w_y · CE(ŷ_c) + λ_d · mean_i CE(ŷ_d,i, CPC)`. Returns the total and the
    /// unscaled `(L_c, L_d)` values.
    pub fn cpc_loss(
        &self,
        tape: &mut Tape<'_, T>,
        ex: &CpcExample,
        class_weight: f64,
        weights: &LossWeights,
    ) -> Result<(Var, f64, Option<f64>)> {
        let v = self.cpc_vars(tape, &ex.input)?;
        let l_c = tape.softmax_cross_entropy(v.logits, ex.label.index(), class_weight);
        let l_c_value = crate::nn::to_f64(tape.scalar(l_c));
        if v.domain_logits.is_empty() {
            return Ok((l_c, l_c_value, None));
        }
        let gold = DomainLabel::CpcDomain.index();
        let parts: Vec<Var> = v
            .domain_logits
            .iter()
            .map(|&z| tape.softmax_cross_entropy(z, gold, 1.0))
            .collect();
        let sum = tape.add_n(&parts);
        let l_d = tape.scale(sum, 1.0 / parts.len() as f64);
        let l_d_value = crate::nn::to_f64(tape.scalar(l_d));
        let scaled = tape.scale(l_d, weights.lambda_d);
        Ok((tape.add(l_c, scaled), l_c_value, Some(l_d_value)))
    }

    /// Per-instance ABSA objective: `λ_s · CE(ŷ_s) + λ_d · CE(ŷ_d)`.
    pub fn absa_loss(
        &self,
        tape: &mut Tape<'_, T>,
        ex: &AbsaExample,
        weights: &LossWeights,
    ) -> Result<(Var, f64, Option<f64>)> {
        let v = self.absa_vars(tape, &ex.input)?;
        let l_s = tape.softmax_cross_entropy(v.logits, ex.sentiment.index(), 1.0);
        let l_s_value = crate::nn::to_f64(tape.scalar(l_s));
        let mut total = tape.scale(l_s, weights.lambda_s);
        let mut l_d_value = None;
        if let Some(z) = v.domain_logits {
            let l_d = tape.softmax_cross_entropy(z, ex.domain.index(), 1.0);
            l_d_value = Some(crate::nn::to_f64(tape.scalar(l_d)));
            let scaled = tape.scale(l_d, weights.lambda_d);
            total = tape.add(total, scaled);
        }
        Ok((total, l_s_value, l_d_value))
    }

    /// Names of parameters counted by the L2 term.
    pub fn regularized(&self) -> Vec<&str> {
        self.store
            .iter()
            .filter(|(_, p)| p.trainable && p.kind == ParamKind::Weight)
            .map(|(_, p)| p.name.as_str())
            .collect()
    }
}

fn row_f64<T: Float>(tape: &Tape<'_, T>, v: Var) -> Vec<f64> {
    tape.value(v).iter().map(|&x| crate::nn::to_f64(x)).collect()
}
