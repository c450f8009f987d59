use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};

use super::{AbsaInstance, CpcInstance, CpcLabel, DomainLabel, EntitySpan, SentiLabel};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpcFormat {
    Jsonl,
    /// CompSent-19 layout: `sentence, object_a, object_b, label` with an
    /// optional `id` column.
    Csv,
}

impl CpcFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => CpcFormat::Csv,
            _ => CpcFormat::Jsonl,
        }
    }
}

struct Row<'a> {
    path: &'a Path,
    line: usize,
    value: Value,
}

impl Row<'_> {
    fn err(&self, field: &str, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn str_field(&self, field: &str) -> Result<String> {
        match self.value.get(field) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(self.err(field, format!("expected a string, found {other}"))),
            None => Err(self.err(field, "missing")),
        }
    }

    fn span_field(&self, field: &str) -> Result<EntitySpan> {
        let obj = self
            .value
            .get(field)
            .ok_or_else(|| self.err(field, "missing"))?;
        let text = match obj.get("text") {
            Some(Value::String(s)) => s.clone(),
            _ => return Err(self.err(&format!("{field}.text"), "expected a string")),
        };
        let offset = |key: &str| -> Result<usize> {
            obj.get(key)
                .and_then(Value::as_u64)
                .map(|v| v as usize)
                .ok_or_else(|| self.err(&format!("{field}.{key}"), "expected a non-negative integer"))
        };
        Ok(EntitySpan::new(text, offset("start")?, offset("end")?))
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn jsonl_rows(path: &Path) -> Result<Vec<Row<'_>>> {
    let mut rows = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            field: "<row>".into(),
            message: e.to_string(),
        })?;
        rows.push(Row {
            path,
            line: i + 1,
            value,
        });
    }
    Ok(rows)
}

/// Loads a CPC corpus and validates every instance, preserving file order.
pub fn load_cpc(path: &Path, format: CpcFormat) -> Result<Vec<CpcInstance>> {
    let data = match format {
        CpcFormat::Jsonl => load_cpc_jsonl(path, true)?,
        CpcFormat::Csv => load_cpc_csv(path)?,
    };
    for inst in &data {
        inst.validate()?;
    }
    Ok(data)
}

/// JSONL CPC rows whose `label` may be absent (read as NONE), for
/// prediction inputs.
pub fn load_cpc_unlabeled(path: &Path) -> Result<Vec<CpcInstance>> {
    let data = load_cpc_jsonl(path, false)?;
    for inst in &data {
        inst.validate()?;
    }
    Ok(data)
}

fn load_cpc_jsonl(path: &Path, require_label: bool) -> Result<Vec<CpcInstance>> {
    jsonl_rows(path)?
        .into_iter()
        .map(|row| {
            let label = if !require_label && row.value.get("label").is_none() {
                CpcLabel::None
            } else {
                let label_str = row.str_field("label")?;
                CpcLabel::parse(&label_str)
                    .ok_or_else(|| row.err("label", format!("unknown label {label_str:?}")))?
            };
            let swapped = row.value.get("swapped").and_then(Value::as_bool).unwrap_or(false);
            Ok(CpcInstance {
                id: row.str_field("id")?,
                sentence: row.str_field("sentence")?,
                entity_a: row.span_field("entity_a")?,
                entity_b: row.span_field("entity_b")?,
                label,
                swapped,
            })
        })
        .collect()
}

/// Character offset of the first case-insensitive occurrence of `needle` at
/// or after character `from` that does not intersect `avoid`.
fn find_chars(sentence: &str, needle: &str, from: usize, avoid: Option<(usize, usize)>) -> Option<usize> {
    let hay: Vec<char> = sentence.chars().flat_map(char::to_lowercase).collect();
    let pat: Vec<char> = needle.chars().flat_map(char::to_lowercase).collect();
    // lowercase expansion changes lengths only for exotic characters; fall
    // back to exact matching there
    let (hay, pat) = if hay.len() == sentence.chars().count() && pat.len() == needle.chars().count() {
        (hay, pat)
    } else {
        (sentence.chars().collect(), needle.chars().collect())
    };
    if pat.is_empty() || pat.len() > hay.len() {
        return None;
    }
    (from..=hay.len() - pat.len()).find(|&s| {
        hay[s..s + pat.len()] == pat[..]
            && avoid.is_none_or(|(a, b)| s + pat.len() <= a || s >= b)
    })
}

fn load_cpc_csv(path: &Path) -> Result<Vec<CpcInstance>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(open(path)?);
    let headers = reader.headers()?.clone();
    let col = |names: &[&str]| headers.iter().position(|h| names.contains(&h.trim()));
    let missing = |field: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        field: field.to_string(),
        message: "column missing from header".into(),
    };
    let c_sentence = col(&["sentence"]).ok_or_else(|| missing("sentence"))?;
    let c_a = col(&["object_a"]).ok_or_else(|| missing("object_a"))?;
    let c_b = col(&["object_b"]).ok_or_else(|| missing("object_b"))?;
    let c_label = col(&["label", "most_frequent_label"]).ok_or_else(|| missing("label"))?;
    let c_id = col(&["id"]);

    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        let err = |field: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            field: field.to_string(),
            message,
        };
        let sentence = record[c_sentence].to_string();
        let obj_a = record[c_a].trim();
        let obj_b = record[c_b].trim();
        let mut label = CpcLabel::parse(&record[c_label])
            .ok_or_else(|| err("label", format!("unknown label {:?}", &record[c_label])))?;
        let id = c_id
            .map(|c| record[c].to_string())
            .unwrap_or_else(|| format!("row-{}", i + 1));

        let len_a = obj_a.chars().count();
        let len_b = obj_b.chars().count();
        let sa = find_chars(&sentence, obj_a, 0, None)
            .ok_or_else(|| err("object_a", format!("{obj_a:?} not found in sentence")))?;
        let sb = find_chars(&sentence, obj_b, 0, Some((sa, sa + len_a)))
            .ok_or_else(|| err("object_b", format!("{obj_b:?} not found in sentence")))?;
        let slice = |s: usize, l: usize| sentence.chars().skip(s).take(l).collect::<String>();
        let mut a = EntitySpan::new(slice(sa, len_a), sa, sa + len_a);
        let mut b = EntitySpan::new(slice(sb, len_b), sb, sb + len_b);
        if b.start < a.start {
            // labels are relative to the first-listed object; store the
            // earlier span first and express the label in that order
            std::mem::swap(&mut a, &mut b);
            label = label.flipped();
        }
        out.push(CpcInstance {
            id,
            sentence,
            entity_a: a,
            entity_b: b,
            label,
            swapped: false,
        });
    }
    Ok(out)
}

/// Loads an ABSA corpus; every instance is tagged with the ABSA domain.
pub fn load_absa(path: &Path) -> Result<Vec<AbsaInstance>> {
    let mut out = Vec::new();
    for row in jsonl_rows(path)? {
        let sentiment_str = row.str_field("sentiment")?;
        let sentiment = SentiLabel::parse(&sentiment_str)
            .ok_or_else(|| row.err("sentiment", format!("unknown sentiment {sentiment_str:?}")))?;
        let inst = AbsaInstance {
            id: row.str_field("id")?,
            sentence: row.str_field("sentence")?,
            aspect: row.span_field("aspect")?,
            sentiment,
            domain: DomainLabel::AbsaDomain,
        };
        inst.aspect
            .validate(&inst.sentence)
            .map_err(|message| Error::Validation {
                id: inst.id.clone(),
                message: format!("aspect: {message}"),
            })?;
        out.push(inst);
    }
    Ok(out)
}

fn span_json(s: &EntitySpan) -> Value {
    json!({"text": s.text, "start": s.start, "end": s.end})
}

fn write_lines(path: &Path, values: impl Iterator<Item = Value>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for v in values {
        writeln!(w, "{v}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_cpc_jsonl(path: &Path, data: &[CpcInstance]) -> Result<()> {
    write_lines(
        path,
        data.iter().map(|i| {
            let mut v = json!({
                "id": i.id,
                "sentence": i.sentence,
                "entity_a": span_json(&i.entity_a),
                "entity_b": span_json(&i.entity_b),
                "label": i.label.as_str(),
            });
            if i.swapped {
                v["swapped"] = Value::Bool(true);
            }
            v
        }),
    )
}

pub fn write_absa_jsonl(path: &Path, data: &[AbsaInstance]) -> Result<()> {
    write_lines(
        path,
        data.iter().map(|i| {
            json!({
                "id": i.id,
                "sentence": i.sentence,
                "aspect": span_json(&i.aspect),
                "sentiment": i.sentiment.as_str(),
            })
        }),
    )
}
