//! Manifest CSV: `id,path,label,split` rows with an optional leading
//! `# classes: a,b,c` comment carrying class names.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::data::ExampleId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Split {
    Train,
    Eval,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Eval, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Eval => "eval",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "eval" => Ok(Split::Eval),
            "test" => Ok(Split::Test),
            other => Err(Error::data(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub id: ExampleId,
    pub path: String,
    pub label: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub class_names: Vec<String>,
    pub rows: Vec<ManifestRow>,
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Per-split per-class counts, indexed [split][class].
    pub fn histograms(&self) -> [Vec<usize>; 3] {
        let c = self.num_classes();
        let mut h = [vec![0usize; c], vec![0usize; c], vec![0usize; c]];
        for row in &self.rows {
            let s = Split::ALL.iter().position(|&x| x == row.split).unwrap();
            h[s][row.label] += 1;
        }
        h
    }

    pub fn split_rows(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    /// Parse and validate a manifest file. Validation failures are collected
    /// and reported together: duplicate ids, out-of-range labels, missing
    /// files (checked relative to the manifest's directory), bad splits.
    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot open manifest {}: {e}", path.display())))?;
        let base_dir = path.parent().unwrap_or(Path::new("."));

        let mut class_names: Option<Vec<String>> = None;
        for line in raw.lines() {
            let t = line.trim();
            if let Some(rest) = t.strip_prefix('#') {
                if let Some(names) = rest.trim().strip_prefix("classes:") {
                    class_names = Some(
                        names
                            .split(',')
                            .map(|s| s.trim().to_string())
                            .filter(|s| !s.is_empty())
                            .collect(),
                    );
                }
            } else if !t.is_empty() {
                break;
            }
        }

        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(raw.as_bytes());
        {
            let headers = reader.headers()?;
            let want = ["id", "path", "label", "split"];
            if headers.iter().collect::<Vec<_>>() != want {
                return Err(Error::data(format!(
                    "manifest {}: expected header id,path,label,split, got {:?}",
                    path.display(),
                    headers.iter().collect::<Vec<_>>().join(",")
                )));
            }
        }

        let mut rows = Vec::new();
        let mut problems: Vec<String> = Vec::new();
        let mut seen_ids = BTreeSet::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != 4 {
                problems.push(format!("line {line}: expected 4 fields, got {}", record.len()));
                continue;
            }
            let id = ExampleId::from(&record[0]);
            if !seen_ids.insert(id.clone()) {
                problems.push(format!("duplicate id {id}"));
            }
            let label = match record[2].parse::<usize>() {
                Ok(l) => l,
                Err(_) => {
                    problems.push(format!("line {line}: unparsable label {:?}", &record[2]));
                    continue;
                }
            };
            let split = match Split::from_str(&record[3]) {
                Ok(s) => s,
                Err(_) => {
                    problems.push(format!("line {line}: unknown split {:?}", &record[3]));
                    continue;
                }
            };
            let rel = record[1].to_string();
            if !base_dir.join(&rel).exists() {
                problems.push(format!("missing file {rel} (id {id})"));
            }
            rows.push(ManifestRow {
                id,
                path: rel,
                label,
                split,
            });
        }

        let class_names = class_names.unwrap_or_else(|| {
            let c = rows.iter().map(|r| r.label + 1).max().unwrap_or(0);
            (0..c).map(|i| format!("class{i}")).collect()
        });
        for row in &rows {
            if row.label >= class_names.len() {
                problems.push(format!(
                    "id {}: label {} out of range for {} classes",
                    row.id,
                    row.label,
                    class_names.len()
                ));
            }
        }
        if !problems.is_empty() {
            return Err(Error::data(format!(
                "manifest {} is invalid:\n  {}",
                path.display(),
                problems.join("\n  ")
            )));
        }
        Ok(DatasetManifest { class_names, rows })
    }

    /// Write the manifest back out in the exact format [`load`] reads.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "# classes: {}", self.class_names.join(","))?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["id", "path", "label", "split"])?;
        for row in &self.rows {
            w.write_record([
                row.id.as_str(),
                &row.path,
                &row.label.to_string(),
                &row.split.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
