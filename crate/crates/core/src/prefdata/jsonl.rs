//! JSON Lines reading and writing.
//!
//! One object per line:
//!
//! ```text
//! {"id":"17","prompt":"...","response_a":"...","response_b":"...","label":"A","category":"chat"}
//! ```
//!
//! `id`, `label` and `category` are optional. Records without a label go to
//! the unlabeled pool. Pseudo-labeled dumps additionally carry
//! `"label_source":"pseudo"` and `"confidence"`. A file may start with a
//! single `{"_header": {...}}` line carrying provenance; it is returned
//! separately and never treated as a record.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use super::{Label, LabelSource, LabeledExample, PreferenceDataset, PreferenceTriplet};
use crate::error::{Error, Result};

pub const HEADER_KEY: &str = "_header";

/// One record of a JSONL file, in file order.
#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Labeled(LabeledExample),
    Unlabeled(PreferenceTriplet),
}

impl Entry {
    pub fn id(&self) -> &str {
        match self {
            Entry::Labeled(e) => e.id(),
            Entry::Unlabeled(t) => &t.id,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct JsonlFile {
    pub header: Option<Value>,
    pub entries: Vec<Entry>,
}

impl JsonlFile {
    /// Partitions entries into pools, preserving relative order within each.
    pub fn into_dataset(self) -> Result<PreferenceDataset> {
        let mut labeled = Vec::new();
        let mut unlabeled = Vec::new();
        for entry in self.entries {
            match entry {
                Entry::Labeled(e) => labeled.push(e),
                Entry::Unlabeled(t) => unlabeled.push(t),
            }
        }
        PreferenceDataset::new(labeled, unlabeled)
    }
}

#[derive(Deserialize)]
struct InRecord {
    #[serde(default, deserialize_with = "string_or_number")]
    id: Option<String>,
    prompt: String,
    response_a: String,
    response_b: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    label_source: Option<LabelSource>,
    #[serde(default)]
    confidence: Option<f64>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    prompt: &'a str,
    response_a: &'a str,
    response_b: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<Label>,
    #[serde(skip_serializing_if = "Option::is_none")]
    category: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label_source: Option<LabelSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
}

impl<'a> OutRecord<'a> {
    fn triplet(t: &'a PreferenceTriplet) -> Self {
        OutRecord {
            id: &t.id,
            prompt: &t.prompt,
            response_a: &t.response_a,
            response_b: &t.response_b,
            label: None,
            category: t.category.as_deref(),
            label_source: None,
            confidence: None,
        }
    }

    fn labeled(e: &'a LabeledExample) -> Self {
        let pseudo = e.source() == LabelSource::Pseudo;
        OutRecord {
            label: Some(e.label),
            label_source: pseudo.then_some(LabelSource::Pseudo),
            confidence: e.confidence(),
            ..OutRecord::triplet(&e.triplet)
        }
    }
}

fn string_or_number<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    match Option::<Value>::deserialize(d)? {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(Value::Number(n)) => Ok(Some(n.to_string())),
        Some(other) => Err(serde::de::Error::custom(format!(
            "id must be a string or number, got {other}"
        ))),
    }
}

fn decode(rec: InRecord, line_index: usize) -> Result<Entry> {
    let id = rec.id.unwrap_or_else(|| line_index.to_string());
    let triplet = PreferenceTriplet {
        id,
        prompt: rec.prompt,
        response_a: rec.response_a,
        response_b: rec.response_b,
        category: rec.category,
    };
    let label = match rec.label {
        None => {
            if rec.label_source.is_some() || rec.confidence.is_some() {
                return Err(Error::InvalidRecord {
                    id: triplet.id,
                    message: "label_source/confidence given without a label".into(),
                });
            }
            return Ok(Entry::Unlabeled(triplet));
        }
        Some(raw) => match Label::parse(&raw) {
            Some(l) => l,
            None => {
                return Err(Error::InvalidLabel {
                    id: triplet.id,
                    label: raw,
                })
            }
        },
    };
    match (
        rec.label_source.unwrap_or(LabelSource::GroundTruth),
        rec.confidence,
    ) {
        (LabelSource::GroundTruth, None) => {
            Ok(Entry::Labeled(LabeledExample::ground_truth(triplet, label)))
        }
        (LabelSource::Pseudo, Some(c)) => {
            Ok(Entry::Labeled(LabeledExample::pseudo(triplet, label, c)?))
        }
        (LabelSource::GroundTruth, Some(_)) => Err(Error::InvalidRecord {
            id: triplet.id,
            message: "confidence is only allowed on pseudo labels".into(),
        }),
        (LabelSource::Pseudo, None) => Err(Error::InvalidRecord {
            id: triplet.id,
            message: "pseudo label without confidence".into(),
        }),
    }
}

/// Reads every record, in order. Blank lines are skipped but still count
/// toward line numbering; a missing id becomes the zero-based line index.
pub fn read_entries<R: BufRead>(reader: R) -> Result<JsonlFile> {
    let mut out = JsonlFile::default();
    let mut ids = HashSet::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(header) = value.get(HEADER_KEY) {
            if out.header.is_some() || !out.entries.is_empty() {
                return Err(Error::MalformedLine {
                    line: line_no,
                    message: "header must be the first record".into(),
                });
            }
            out.header = Some(header.clone());
            continue;
        }
        let rec: InRecord = serde_json::from_value(value).map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        let entry = decode(rec, index)?;
        if !ids.insert(entry.id().to_string()) {
            return Err(Error::DuplicateId(entry.id().to_string()));
        }
        out.entries.push(entry);
    }
    Ok(out)
}

pub fn load_entries(path: impl AsRef<Path>) -> Result<JsonlFile> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_entries(BufReader::new(file))
}

/// Loads a dataset: labeled records form `D_l`, the rest `D_u`.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<PreferenceDataset> {
    load_entries(path)?.into_dataset()
}

fn write_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))
}

pub fn write_header<W: Write>(w: &mut W, header: &Value) -> Result<()> {
    let mut obj = serde_json::Map::new();
    obj.insert(HEADER_KEY.to_string(), header.clone());
    write_line(w, &obj)
}

pub fn write_entries<W: Write>(w: &mut W, entries: &[Entry]) -> Result<()> {
    for entry in entries {
        match entry {
            Entry::Labeled(e) => write_line(w, &OutRecord::labeled(e))?,
            Entry::Unlabeled(t) => write_line(w, &OutRecord::triplet(t))?,
        }
    }
    Ok(())
}

pub fn write_labeled<W: Write>(w: &mut W, examples: &[LabeledExample]) -> Result<()> {
    examples
        .iter()
        .try_for_each(|e| write_line(w, &OutRecord::labeled(e)))
}

pub fn write_triplets<W: Write>(w: &mut W, triplets: &[PreferenceTriplet]) -> Result<()> {
    triplets
        .iter()
        .try_for_each(|t| write_line(w, &OutRecord::triplet(t)))
}

/// Writes `D_l` followed by `D_u`, with an optional header line.
pub fn save_dataset(
    path: impl AsRef<Path>,
    data: &PreferenceDataset,
    header: Option<&Value>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    if let Some(h) = header {
        write_header(&mut w, h)?;
    }
    write_labeled(&mut w, data.labeled())?;
    write_triplets(&mut w, data.unlabeled())?;
    w.flush().map_err(|e| Error::io(path, e))
}
