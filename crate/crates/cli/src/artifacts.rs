//! Output files. Every file carries the experiment's config hash in a form
//! native to its format:
//!
//! | format  | where                                   |
//! |---------|-----------------------------------------|
//! | `.jsonl`| first line `{"_header":{"config_hash":…}}` |
//! | `.json` | top-level `config_hash` (snapshots: `provenance.config_hash`) |
//! | `.csv`  | first line `# config_hash=…`            |
//! | `.md`   | first line `<!-- config_hash: … -->`    |

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use ssrm_core::prefdata::{write_header, HEADER_KEY};
use ssrm_core::Snapshot;

pub struct Artifacts {
    dir: PathBuf,
    hash: String,
    command: &'static str,
    written: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path, hash: &str, command: &'static str) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
            command,
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn create_file(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.path(name);
        let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    /// JSONL header with `extra` merged in.
    pub fn header(&self, extra: Value) -> Value {
        let mut h = json!({ "config_hash": self.hash, "command": self.command });
        if let (Some(h), Value::Object(extra)) = (h.as_object_mut(), extra) {
            h.extend(extra);
        }
        h
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut obj = match serde_json::to_value(value)? {
            Value::Object(o) => o,
            other => {
                let mut o = serde_json::Map::new();
                o.insert("value".into(), other);
                o
            }
        };
        obj.insert("config_hash".into(), Value::String(self.hash.clone()));
        let mut w = self.create_file(name)?;
        serde_json::to_writer_pretty(&mut w, &obj)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_jsonl(
        &mut self,
        name: &str,
        extra: Value,
        body: impl FnOnce(&mut BufWriter<File>) -> ssrm_core::Result<()>,
    ) -> Result<()> {
        let header = self.header(extra);
        let mut w = self.create_file(name)?;
        write_header(&mut w, &header)?;
        body(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let hash = self.hash.clone();
        let mut w = self.create_file(name)?;
        writeln!(w, "# config_hash={hash}")?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(columns)?;
        for row in rows {
            csv.write_record(row)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn write_markdown(&mut self, name: &str, body: &str) -> Result<()> {
        let hash = self.hash.clone();
        let mut w = self.create_file(name)?;
        writeln!(w, "<!-- config_hash: {hash} -->")?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn write_snapshot(&mut self, name: &str, model: &Snapshot) -> Result<()> {
        let mut model = model.clone();
        model.provenance.config_hash = Some(self.hash.clone());
        let path = self.path(name);
        ssrm_core::backend::save_snapshot(&model, &path)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Checks that exactly `expected` was written and that each file
    /// carries the hash.
    pub fn finish(self, expected: &[String]) -> Result<Vec<String>> {
        let mut got = self.written.clone();
        got.sort();
        let mut want = expected.to_vec();
        want.sort();
        if got != want {
            bail!("wrote {got:?}, expected {want:?}");
        }
        let failures: Vec<String> = verify(&self.dir, &self.hash, expected)
            .into_iter()
            .filter_map(|(name, status)| status.err().map(|e| format!("{name}: {e}")))
            .collect();
        if !failures.is_empty() {
            bail!("artifact validation failed: {}", failures.join("; "));
        }
        Ok(self.written)
    }
}

/// Per-file verification against `hash`.
pub fn verify(dir: &Path, hash: &str, files: &[String]) -> Vec<(String, Result<(), String>)> {
    files
        .iter()
        .map(|name| {
            let status = match embedded_hash(&dir.join(name)) {
                Ok(Some(found)) if found == hash => Ok(()),
                Ok(Some(found)) => Err(format!("hash {found} does not match {hash}")),
                Ok(None) => Err("no config hash found".into()),
                Err(e) => Err(format!("{e:#}")),
            };
            (name.clone(), status)
        })
        .collect()
}

pub fn embedded_hash(path: &Path) -> Result<Option<String>> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext == "json" {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let v: Value = serde_json::from_str(&text)?;
        let found = v
            .get("config_hash")
            .or_else(|| v.get("provenance").and_then(|p| p.get("config_hash")));
        return Ok(found.and_then(Value::as_str).map(str::to_string));
    }
    let file = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first)?;
    let first = first.trim_end();
    Ok(match ext {
        "jsonl" => serde_json::from_str::<Value>(first).ok().and_then(|v| {
            v.get(HEADER_KEY)?
                .get("config_hash")?
                .as_str()
                .map(str::to_string)
        }),
        "csv" => first.strip_prefix("# config_hash=").map(str::to_string),
        "md" => first
            .strip_prefix("<!-- config_hash: ")
            .and_then(|s| s.strip_suffix(" -->"))
            .map(str::to_string),
        _ => None,
    })
}

/// Opens a CSV written by [`Artifacts::write_csv`], skipping the hash line.
#[cfg(test)]
fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_format_round_trips_its_hash() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::create(dir.path(), "abc123", "test").unwrap();
        a.write_json("r.json", &json!({"x": 1})).unwrap();
        a.write_jsonl("d.jsonl", json!({"n": 0}), |_| Ok(()))
            .unwrap();
        a.write_csv("t.csv", &["a", "b"], &[vec!["1".into(), "2".into()]])
            .unwrap();
        a.write_markdown("s.md", "| a |\n").unwrap();
        let names: Vec<String> = ["r.json", "d.jsonl", "t.csv", "s.md"]
            .map(String::from)
            .to_vec();
        assert_eq!(a.finish(&names).unwrap().len(), 4);
        assert!(verify(dir.path(), "abc123", &names)
            .iter()
            .all(|(_, s)| s.is_ok()));
        assert!(verify(dir.path(), "zzz", &names)
            .iter()
            .all(|(_, s)| s.is_err()));

        let mut rows = csv_reader(&dir.path().join("t.csv")).unwrap();
        assert_eq!(rows.headers().unwrap(), vec!["a", "b"]);
        assert_eq!(rows.records().count(), 1);
    }

    #[test]
    fn missing_or_unexpected_files_fail() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::create(dir.path(), "h", "test").unwrap();
        a.write_markdown("s.md", "").unwrap();
        assert!(a.finish(&["s.md".into(), "other.csv".into()]).is_err());
    }
}
