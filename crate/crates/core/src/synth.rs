//! Template-generated corpora with fixed random word vectors and rule-based
//! parses, for smoke tests, demos and property checks.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AbsaInstance, CpcInstance, CpcLabel, DomainLabel, EntitySpan, SentiLabel};
use crate::encode::{align_tokens, EmbeddingTable, ParsedSentence, RawEdge};
use crate::corpus::{write_absa_jsonl, write_cpc_jsonl};
use crate::encode::{write_conllu, write_static_embeddings};
use crate::{Error, Result};

const ENTITIES: &[&str] = &[
    "python", "java", "rust", "ruby", "perl", "scala", "kotlin", "swift", "haskell", "erlang", "elixir",
    "clojure", "fortran", "cobol", "pascal", "lua", "julia", "dart", "ocaml", "racket", "visual basic",
    "objective c", "nikon", "canon", "sony", "pentax", "leica", "olympus", "fuji film", "intel", "amd",
    "nvidia", "safari", "firefox", "chrome", "opera", "ubuntu", "debian", "fedora", "arch linux",
];

const BETTER_WORDS: &[&str] = &["better", "faster", "stronger", "nicer", "superior"];
const WORSE_WORDS: &[&str] = &["worse", "slower", "weaker", "uglier", "inferior"];
const NEUTRAL_ADJ: &[&str] = &["popular", "old", "common", "free", "famous"];
const FILLER: &[&str] = &[
    "which", "many", "people", "in", "the", "forum", "mention", "often", "for", "their", "daily", "work",
    "and", "side", "projects", "at", "home", "over", "last", "few", "years",
];

const ASPECTS: &[&str] = &[
    "food", "service", "staff", "pasta", "wine", "price", "ambience", "pizza", "dessert", "menu", "music",
    "sushi", "coffee", "decor", "waiter", "salad",
];
const POS_WORDS: &[&str] = &["great", "good", "excellent", "lovely", "superb"];
const NEG_WORDS: &[&str] = &["awful", "bad", "terrible", "poor", "horrible"];
const NEU_WORDS: &[&str] = &["okay", "average", "standard", "plain", "ordinary"];

/// How synthetic sentences are parsed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ParseStyle {
    /// Template-aware trees: entities attach to the predicate.
    #[default]
    Tree,
    /// Every token attaches to its left neighbour.
    Chain,
}

#[derive(Clone, Debug)]
pub struct SynthOptions {
    pub n: usize,
    pub dim: usize,
    pub seed: u64,
    /// Filler words inserted after the first entity, drawn uniformly from
    /// this inclusive range.
    pub filler: (usize, usize),
    pub parse: ParseStyle,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            n: 2000,
            dim: 50,
            seed: 7,
            filler: (0, 0),
            parse: ParseStyle::Tree,
        }
    }
}

/// Generated sentences together with everything needed to encode them.
pub struct SynthCorpus {
    pub cpc: Vec<CpcInstance>,
    pub absa: Vec<AbsaInstance>,
    pub parses: Vec<ParsedSentence>,
    pub embeddings: EmbeddingTable,
}

impl SynthCorpus {
    /// Writes `cpc.jsonl`, `absa.jsonl`, `embeddings.txt` and
    /// `parses.conllu` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_cpc_jsonl(&dir.join("cpc.jsonl"), &self.cpc)?;
        write_absa_jsonl(&dir.join("absa.jsonl"), &self.absa)?;
        write_static_embeddings(&self.embeddings, &dir.join("embeddings.txt"))?;
        write_conllu(&self.parses, &dir.join("parses.conllu"))
    }
}

struct Builder {
    words: Vec<String>,
    heads: Vec<Option<(usize, &'static str)>>,
    entities: Vec<(usize, usize)>,
}

impl Builder {
    fn new() -> Self {
        Self {
            words: Vec::new(),
            heads: Vec::new(),
            entities: Vec::new(),
        }
    }

    fn word(&mut self, w: &str) -> usize {
        self.words.push(w.to_string());
        self.heads.push(None);
        self.words.len() - 1
    }

    fn words(&mut self, ws: &[&str]) -> Vec<usize> {
        ws.iter().map(|w| self.word(w)).collect()
    }

    /// Multi-word names are head-final.
    fn entity(&mut self, name: &str) -> usize {
        let parts: Vec<&str> = name.split(' ').collect();
        let ids = self.words(&parts);
        let head = *ids.last().expect("nonempty name");
        for &i in &ids[..ids.len() - 1] {
            self.attach(i, head, "compound");
        }
        self.entities.push((ids[0], head));
        head
    }

    fn attach(&mut self, dep: usize, head: usize, rel: &'static str) {
        self.heads[dep] = Some((head, rel));
    }

    fn filler(&mut self, rng: &mut ChaCha8Rng, range: (usize, usize), anchor: usize) {
        let k = rng.gen_range(range.0..=range.1);
        let mut prev = anchor;
        for j in 0..k {
            let w = self.word(FILLER.choose(rng).expect("nonempty"));
            self.attach(w, prev, if j == 0 { "acl" } else { "dep" });
            prev = w;
        }
    }

    fn finish(self, id: &str, style: ParseStyle) -> (String, Vec<EntitySpan>, ParsedSentence) {
        let sentence = self.words.join(" ");
        let toks = align_tokens(&sentence, &self.words);
        let spans = self
            .entities
            .iter()
            .map(|&(a, b)| {
                let (start, end) = (toks.char_spans[a].0, toks.char_spans[b].1);
                let text: String = sentence.chars().skip(start).take(end - start).collect();
                EntitySpan::new(text, start, end)
            })
            .collect();
        let edges = match style {
            ParseStyle::Tree => self
                .heads
                .iter()
                .enumerate()
                .filter_map(|(d, h)| {
                    h.map(|(head, rel)| RawEdge {
                        head,
                        dependent: d,
                        deprel: rel.into(),
                    })
                })
                .collect(),
            ParseStyle::Chain => (1..self.words.len())
                .map(|d| RawEdge {
                    head: d - 1,
                    dependent: d,
                    deprel: "dep".into(),
                })
                .collect(),
        };
        let parse = ParsedSentence {
            sent_id: Some(id.to_string()),
            text: Some(sentence.clone()),
            tokens: toks,
            edges,
        };
        (sentence, spans, parse)
    }
}

fn two_entities(rng: &mut ChaCha8Rng) -> (&'static str, &'static str) {
    let mut pick = ENTITIES.choose_multiple(rng, 2);
    (pick.next().expect("two"), pick.next().expect("two"))
}

/// One comparative sentence. Returns the builder and the label relative to
/// the earlier entity.
fn comparative(rng: &mut ChaCha8Rng, opts: &SynthOptions) -> (Builder, CpcLabel) {
    let (x, y) = two_entities(rng);
    let mut b = Builder::new();
    let kind = rng.gen_range(0..6);
    let positive = rng.gen_bool(0.5);
    let pred_word = *if positive { BETTER_WORDS } else { WORSE_WORDS }
        .choose(rng)
        .expect("nonempty");
    // Whether the earlier entity is the grammatical subject of the predicate.
    let subject_first;
    match kind {
        // X [filler] is PRED than Y
        0 | 1 => {
            let ex = b.entity(x);
            b.filler(rng, opts.filler, ex);
            let is = b.word("is");
            let p = b.word(pred_word);
            let than = b.word("than");
            let ey = b.entity(y);
            b.attach(ex, p, "nsubj");
            b.attach(is, p, "cop");
            b.attach(than, ey, "case");
            b.attach(ey, p, "obl");
            subject_first = true;
        }
        // compared to X [filler] , Y is PRED
        2 | 3 => {
            let c = b.word("compared");
            let to = b.word("to");
            let ex = b.entity(x);
            b.filler(rng, opts.filler, ex);
            let comma = b.word(",");
            let ey = b.entity(y);
            let is = b.word("is");
            let p = b.word(pred_word);
            b.attach(c, p, "advcl");
            b.attach(to, ex, "case");
            b.attach(ex, c, "obl");
            b.attach(comma, p, "punct");
            b.attach(ey, p, "nsubj");
            b.attach(is, p, "cop");
            subject_first = false;
        }
        // NONE with a comparative word: X [filler] or Y , which is PRED ?
        4 => {
            let ex = b.entity(x);
            b.filler(rng, opts.filler, ex);
            let or = b.word("or");
            let ey = b.entity(y);
            let comma = b.word(",");
            let which = b.word("which");
            let is = b.word("is");
            let p = b.word(pred_word);
            let q = b.word("?");
            b.attach(or, ey, "cc");
            b.attach(ey, ex, "conj");
            b.attach(comma, p, "punct");
            b.attach(which, p, "nsubj");
            b.attach(is, p, "cop");
            b.attach(p, ex, "acl");
            b.attach(q, p, "punct");
            return (b, CpcLabel::None);
        }
        // NONE: X [filler] and Y are both ADJ
        _ => {
            let ex = b.entity(x);
            b.filler(rng, opts.filler, ex);
            let and = b.word("and");
            let ey = b.entity(y);
            let are = b.word("are");
            let both = b.word("both");
            let adj = b.word(NEUTRAL_ADJ.choose(rng).expect("nonempty"));
            b.attach(and, ey, "cc");
            b.attach(ey, ex, "conj");
            b.attach(ex, adj, "nsubj");
            b.attach(are, adj, "cop");
            b.attach(both, adj, "advmod");
            return (b, CpcLabel::None);
        }
    }
    let label = if positive == subject_first {
        CpcLabel::Better
    } else {
        CpcLabel::Worse
    };
    (b, label)
}

fn sentiment_words(s: SentiLabel) -> &'static [&'static str] {
    match s {
        SentiLabel::Pos => POS_WORDS,
        SentiLabel::Neu => NEU_WORDS,
        SentiLabel::Neg => NEG_WORDS,
    }
}

fn random_sentiment(rng: &mut ChaCha8Rng) -> SentiLabel {
    [SentiLabel::Pos, SentiLabel::Neu, SentiLabel::Neg][rng.gen_range(0..3)]
}

/// `the ASPECT is ADJ` with an optional second clause about another aspect.
fn review(rng: &mut ChaCha8Rng) -> (Builder, SentiLabel) {
    let mut b = Builder::new();
    let mut pick = ASPECTS.choose_multiple(rng, 2);
    let (a1, a2) = (pick.next().expect("two"), pick.next().expect("two"));
    let s = random_sentiment(rng);
    let the = b.word("the");
    let ea = b.entity(a1);
    let is = b.word("is");
    let adj = b.word(sentiment_words(s).choose(rng).expect("nonempty"));
    b.attach(the, ea, "det");
    b.attach(ea, adj, "nsubj");
    b.attach(is, adj, "cop");
    if rng.gen_bool(0.5) {
        let other = random_sentiment(rng);
        let but = b.word("but");
        let the2 = b.word("the");
        let eb = b.word(a2);
        let is2 = b.word("is");
        let adj2 = b.word(sentiment_words(other).choose(rng).expect("nonempty"));
        b.attach(but, adj2, "cc");
        b.attach(the2, eb, "det");
        b.attach(eb, adj2, "nsubj");
        b.attach(is2, adj2, "cop");
        b.attach(adj2, adj, "conj");
    }
    (b, s)
}

/// `the X is ADJ1 but the Y is ADJ2 [marker]`. Returns the builder with the
/// two sentiments.
fn contrast(rng: &mut ChaCha8Rng, marker: Option<&str>) -> (Builder, SentiLabel, SentiLabel) {
    let mut b = Builder::new();
    let mut pick = ASPECTS.choose_multiple(rng, 2);
    let (x, y) = (pick.next().expect("two"), pick.next().expect("two"));
    let (s1, s2) = (random_sentiment(rng), random_sentiment(rng));
    let the1 = b.word("the");
    let ex = b.entity(x);
    let is1 = b.word("is");
    let adj1 = b.word(sentiment_words(s1).choose(rng).expect("nonempty"));
    let but = b.word("but");
    let the2 = b.word("the");
    let ey = b.entity(y);
    let is2 = b.word("is");
    let adj2 = b.word(sentiment_words(s2).choose(rng).expect("nonempty"));
    b.attach(the1, ex, "det");
    b.attach(ex, adj1, "nsubj");
    b.attach(is1, adj1, "cop");
    b.attach(but, adj2, "cc");
    b.attach(the2, ey, "det");
    b.attach(ey, adj2, "nsubj");
    b.attach(is2, adj2, "cop");
    b.attach(adj2, adj1, "conj");
    if let Some(m) = marker {
        let w = b.word(m);
        b.attach(w, adj1, "discourse");
    }
    (b, s1, s2)
}

/// Prefers the entity with the higher polarity.
fn contrast_label(s1: SentiLabel, s2: SentiLabel) -> CpcLabel {
    match s1.polarity().cmp(&s2.polarity()) {
        std::cmp::Ordering::Greater => CpcLabel::Better,
        std::cmp::Ordering::Less => CpcLabel::Worse,
        std::cmp::Ordering::Equal => CpcLabel::None,
    }
}

fn cpc_instance(id: String, b: Builder, label: CpcLabel, style: ParseStyle) -> (CpcInstance, ParsedSentence) {
    let (sentence, mut spans, parse) = b.finish(&id, style);
    let entity_b = spans.pop().expect("two entities");
    let entity_a = spans.pop().expect("two entities");
    (
        CpcInstance {
            id,
            sentence,
            entity_a,
            entity_b,
            label,
            swapped: false,
        },
        parse,
    )
}

fn absa_instance(id: String, b: Builder, s: SentiLabel, domain: DomainLabel, style: ParseStyle) -> (AbsaInstance, ParsedSentence) {
    let (sentence, spans, parse) = b.finish(&id, style);
    (
        AbsaInstance {
            id,
            sentence,
            aspect: spans[0].clone(),
            sentiment: s,
            domain,
        },
        parse,
    )
}

/// Fixed random vectors for every token in `parses`, uniform in ±0.5.
pub fn random_embeddings(parses: &[ParsedSentence], dim: usize, seed: u64) -> Result<EmbeddingTable> {
    let vocab: BTreeSet<&str> = parses.iter().flat_map(|p| p.tokens.tokens.iter().map(String::as_str)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let pairs: Vec<(String, Vec<f32>)> = vocab
        .into_iter()
        .map(|w| (w.to_string(), (0..dim).map(|_| rng.gen_range(-0.5f32..0.5)).collect()))
        .collect();
    EmbeddingTable::from_pairs(dim, pairs)
}

/// Comparative sentences over programming languages and brands plus a
/// same-sized restaurant review ABSA set.
pub fn template_corpus(opts: &SynthOptions) -> Result<SynthCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut cpc = Vec::with_capacity(opts.n);
    let mut absa = Vec::with_capacity(opts.n);
    let mut parses = Vec::with_capacity(2 * opts.n);
    for i in 0..opts.n {
        let (b, label) = comparative(&mut rng, opts);
        let (inst, parse) = cpc_instance(format!("cpc{i}"), b, label, opts.parse);
        cpc.push(inst);
        parses.push(parse);
    }
    for i in 0..opts.n {
        let (b, s) = review(&mut rng);
        let (inst, parse) = absa_instance(format!("absa{i}"), b, s, DomainLabel::AbsaDomain, opts.parse);
        absa.push(inst);
        parses.push(parse);
    }
    let embeddings = random_embeddings(&parses, opts.dim, opts.seed)?;
    Ok(SynthCorpus {
        cpc,
        absa,
        parses,
        embeddings,
    })
}

/// The template corpus with 15 to 30 filler words between the first entity
/// and the predicate, parsed as left-to-right chains.
pub fn distance_corpus(opts: &SynthOptions) -> Result<SynthCorpus> {
    let opts = SynthOptions {
        filler: (15, 30),
        parse: ParseStyle::Chain,
        ..opts.clone()
    };
    template_corpus(&opts)
}

/// Two domains built from the same two-clause review template. CPC sentences
/// end with `marker`; ABSA sentences do not and ask for the first aspect.
pub fn two_domain_corpus(opts: &SynthOptions, marker: &str) -> Result<SynthCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut cpc = Vec::with_capacity(opts.n);
    let mut absa = Vec::with_capacity(opts.n);
    let mut parses = Vec::with_capacity(2 * opts.n);
    for i in 0..opts.n {
        let (b, s1, s2) = contrast(&mut rng, Some(marker));
        let (inst, parse) = cpc_instance(format!("cpc{i}"), b, contrast_label(s1, s2), opts.parse);
        cpc.push(inst);
        parses.push(parse);
    }
    for i in 0..opts.n {
        let (b, s, _) = contrast(&mut rng, None);
        let (inst, parse) = absa_instance(format!("absa{i}"), b, s, DomainLabel::AbsaDomain, opts.parse);
        absa.push(inst);
        parses.push(parse);
    }
    let embeddings = random_embeddings(&parses, opts.dim, opts.seed)?;
    Ok(SynthCorpus {
        cpc,
        absa,
        parses,
        embeddings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::class_counts;
    use crate::encode::{tokenize, DependencyGraph};

    fn small() -> SynthOptions {
        SynthOptions {
            n: 300,
            ..SynthOptions::default()
        }
    }

    #[test]
    fn instances_validate_and_tokenize_like_their_parses() {
        for corpus in [
            template_corpus(&small()).unwrap(),
            distance_corpus(&small()).unwrap(),
            two_domain_corpus(&small(), "zorp").unwrap(),
        ] {
            for inst in &corpus.cpc {
                inst.validate().unwrap();
            }
            for p in &corpus.parses {
                let text = p.text.as_deref().unwrap();
                assert_eq!(tokenize(text).tokens, p.tokens.tokens);
                DependencyGraph::from_raw(p.tokens.len(), &p.edges).unwrap();
            }
            for a in &corpus.absa {
                a.aspect.validate(&a.sentence).unwrap();
            }
        }
    }

    #[test]
    fn every_label_is_generated() {
        let c = template_corpus(&small()).unwrap();
        let counts = class_counts(&c.cpc);
        for l in [CpcLabel::Better, CpcLabel::Worse, CpcLabel::None] {
            assert!(counts.get(&l).copied().unwrap_or(0) > 50, "{counts:?}");
        }
    }

    #[test]
    fn labels_follow_the_template_rules() {
        let c = template_corpus(&small()).unwrap();
        for inst in &c.cpc {
            let s = &inst.sentence;
            let pos = BETTER_WORDS.iter().any(|w| s.split(' ').any(|t| t == *w));
            let want = if s.contains(" or ") || s.contains(" both ") {
                CpcLabel::None
            } else if s.starts_with("compared") != pos {
                CpcLabel::Better
            } else {
                CpcLabel::Worse
            };
            assert_eq!(inst.label, want, "{s}");
        }
    }

    #[test]
    fn distance_variant_puts_fillers_after_the_first_entity() {
        let c = distance_corpus(&small()).unwrap();
        for (inst, p) in c.cpc.iter().zip(&c.parses) {
            assert!(p.tokens.len() >= 12, "{}", inst.sentence);
            assert!(p.edges.iter().all(|e| e.head + 1 == e.dependent));
        }
    }

    #[test]
    fn only_cpc_side_carries_the_marker() {
        let c = two_domain_corpus(&small(), "zorp").unwrap();
        assert!(c.cpc.iter().all(|i| i.sentence.ends_with(" zorp")));
        assert!(c.absa.iter().all(|i| !i.sentence.contains("zorp")));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = template_corpus(&small()).unwrap();
        let b = template_corpus(&small()).unwrap();
        assert_eq!(a.cpc, b.cpc);
        assert_eq!(a.absa, b.absa);
        assert_eq!(a.embeddings.get("python"), b.embeddings.get("python"));
    }

    #[test]
    fn written_files_load_back() {
        use crate::corpus::{load_absa, load_cpc, CpcFormat};
        use crate::encode::{load_conllu, load_static_embeddings};
        let c = template_corpus(&SynthOptions { n: 40, ..small() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        c.write_to(dir.path()).unwrap();
        assert_eq!(load_cpc(&dir.path().join("cpc.jsonl"), CpcFormat::Jsonl).unwrap(), c.cpc);
        assert_eq!(load_absa(&dir.path().join("absa.jsonl")).unwrap(), c.absa);
        assert_eq!(load_conllu(&dir.path().join("parses.conllu")).unwrap(), c.parses);
        let table = load_static_embeddings(&dir.path().join("embeddings.txt")).unwrap();
        assert_eq!(table.len(), c.embeddings.len());
        for (t, v) in c.embeddings.iter() {
            assert_eq!(table.get(t).unwrap(), v);
        }
    }
}
