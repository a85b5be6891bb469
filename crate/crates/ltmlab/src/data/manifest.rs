//! Corpus manifests and CSV ingestion.
//!
//! A manifest is a TOML file naming the corpus sources (synthetic
//! generators and/or CSV paths), the window length, the data fraction, and
//! the seed. Building a corpus from a manifest runs the full pipeline:
//! ingest, normalize, split, scale, pad.
//!
//! CSV comes in two shapes. A long-format file has `id` and `value`
//! columns (plus an optional numeric `timestamp` used only for ordering)
//! and holds many series. A directory holds one series per `.csv` file
//! (`value` column, optional `timestamp`), with one level of subdirectories
//! mapping to sub-sources.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    balance_report, normalize, pad_series, scale_dataset, split_corpus, synth_corpus,
    BalanceReport, Corpus, DataError, Series,
};
use crate::util::derive_seed;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub l_seq: usize,
    #[serde(default = "default_f_d")]
    pub f_d: f64,
    #[serde(default = "default_normalize")]
    pub normalize: bool,
    #[serde(rename = "source", default)]
    pub sources: Vec<SourceSpec>,
}

fn default_f_d() -> f64 {
    1.0
}
fn default_normalize() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    /// Ten balanced synthetic sub-sources totalling `total_points`.
    Synth { name: String, total_points: u64 },
    /// A long-format CSV file or a directory of one-series-per-file CSVs,
    /// relative to the manifest location.
    Csv { name: String, path: String },
}

impl Manifest {
    pub fn from_str(text: &str) -> Result<Self, DataError> {
        let manifest: Manifest =
            toml::from_str(text).map_err(|e| DataError::Manifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn from_path(path: &Path) -> Result<Self, DataError> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(DataError::Manifest(format!(
                "unsupported schema_version {}, expected {MANIFEST_SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if self.l_seq < 2 {
            return Err(DataError::Manifest(format!(
                "l_seq must be at least 2, got {}",
                self.l_seq
            )));
        }
        if !(self.f_d > 0.0 && self.f_d <= 1.0) {
            return Err(DataError::BadFraction(self.f_d));
        }
        if self.sources.is_empty() {
            return Err(DataError::Manifest("manifest lists no sources".into()));
        }
        Ok(())
    }
}

/// Runs the whole corpus pipeline for a manifest. `base_dir` anchors
/// relative CSV paths (normally the manifest's parent directory). Returns
/// the corpus, the pre-split balance report, and pipeline warnings.
pub fn build_corpus(
    manifest: &Manifest,
    base_dir: &Path,
) -> Result<(Corpus, BalanceReport, Vec<String>), DataError> {
    let mut raw: Vec<Series> = Vec::new();
    for spec in &manifest.sources {
        match spec {
            SourceSpec::Synth { name, total_points } => {
                let seed = derive_seed(manifest.seed, &format!("source:{name}"));
                for mut s in synth_corpus(*total_points, seed) {
                    s.source = format!("{name}/{}", s.source);
                    raw.push(s);
                }
            }
            SourceSpec::Csv { name, path } => {
                raw.extend(ingest_csv_path(name, &base_dir.join(path))?);
            }
        }
    }
    if manifest.normalize {
        for s in &mut raw {
            normalize(&mut s.values)?;
        }
    }
    let report = balance_report(&raw);
    let (train_raw, test_raw, warnings) = split_corpus(raw, manifest.seed);
    let train_scaled = scale_dataset(train_raw, manifest.f_d, manifest.l_seq, manifest.seed)?;
    let corpus = Corpus {
        l_seq: manifest.l_seq,
        train: pad_series(train_scaled, manifest.l_seq),
        test: pad_series(test_raw, manifest.l_seq),
    };
    Ok((corpus, report, warnings))
}

/// Ingests CSV data at `path`: a long-format file, or a directory of
/// one-series-per-file CSVs. `name` becomes the source name (suffixed with
/// the subdirectory for nested layouts).
pub fn ingest_csv_path(name: &str, path: &Path) -> Result<Vec<Series>, DataError> {
    if path.is_dir() {
        ingest_dir(name, path)
    } else {
        ingest_long_file(name, path)
    }
}

fn ingest_dir(name: &str, dir: &Path) -> Result<Vec<Series>, DataError> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            let sub = path.file_name().expect("dir entry").to_string_lossy();
            out.extend(ingest_dir(&format!("{name}/{sub}"), &path)?);
        } else if path.extension().is_some_and(|e| e == "csv") {
            let id = path
                .file_stem()
                .expect("csv file has a stem")
                .to_string_lossy()
                .into_owned();
            out.push(read_single_series(name, &id, &path)?);
        }
    }
    Ok(out)
}

/// Values of a one-series CSV (a `value` column, ordered by an optional
/// `timestamp` column), for consumers that want a plain sequence rather
/// than a corpus, e.g. forecasting contexts.
pub fn read_series_csv(path: &Path) -> Result<Vec<f64>, DataError> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(read_single_series(&id, &id, path)?.values)
}

fn read_single_series(source: &str, id: &str, path: &Path) -> Result<Series, DataError> {
    let shown = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let value_col = find_column(&headers, "value").ok_or(DataError::MissingColumn {
        path: shown.clone(),
        column: "value",
    })?;
    let ts_col = find_column(&headers, "timestamp");
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let value = parse_field(&record, value_col, "value", &shown, i)?;
        let ts = match ts_col {
            Some(col) => parse_field(&record, col, "timestamp", &shown, i)?,
            None => i as f64,
        };
        rows.push((ts, value));
    }
    if rows.is_empty() {
        return Err(DataError::BadRecord {
            path: shown,
            record: 0,
            what: "file holds no data rows".into(),
        });
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Series {
        source: source.into(),
        id: id.into(),
        values: rows.into_iter().map(|(_, v)| v).collect(),
    })
}

fn ingest_long_file(name: &str, path: &Path) -> Result<Vec<Series>, DataError> {
    let shown = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let id_col = find_column(&headers, "id").ok_or(DataError::MissingColumn {
        path: shown.clone(),
        column: "id",
    })?;
    let value_col = find_column(&headers, "value").ok_or(DataError::MissingColumn {
        path: shown.clone(),
        column: "value",
    })?;
    let ts_col = find_column(&headers, "timestamp");
    let mut ids: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<(f64, f64)>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let id = record.get(id_col).unwrap_or_default().to_string();
        let value = parse_field(&record, value_col, "value", &shown, i)?;
        let ts = match ts_col {
            Some(col) => parse_field(&record, col, "timestamp", &shown, i)?,
            None => i as f64,
        };
        match ids.iter().position(|known| *known == id) {
            Some(g) => groups[g].push((ts, value)),
            None => {
                ids.push(id);
                groups.push(vec![(ts, value)]);
            }
        }
    }
    if ids.is_empty() {
        return Err(DataError::BadRecord {
            path: shown,
            record: 0,
            what: "file holds no data rows".into(),
        });
    }
    Ok(ids
        .into_iter()
        .zip(groups)
        .map(|(id, mut rows)| {
            rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series {
                source: name.into(),
                id,
                values: rows.into_iter().map(|(_, v)| v).collect(),
            }
        })
        .collect())
}

fn find_column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn parse_field(
    record: &csv::StringRecord,
    col: usize,
    what: &str,
    path: &str,
    row: usize,
) -> Result<f64, DataError> {
    let text = record.get(col).unwrap_or_default();
    text.trim().parse().map_err(|_| DataError::BadRecord {
        path: path.into(),
        record: row + 1,
        what: format!("{what} {text:?} is not a number"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::save_cache;

    #[test]
    fn manifest_parses_with_defaults() {
        let m = Manifest::from_str(
            r#"
            schema_version = 1
            seed = 42
            l_seq = 64

            [[source]]
            kind = "synth"
            name = "demo"
            total_points = 10000
            "#,
        )
        .unwrap();
        assert_eq!(m.f_d, 1.0);
        assert!(m.normalize);
        assert_eq!(m.sources.len(), 1);
    }

    #[test]
    fn manifest_rejects_bad_inputs() {
        let cases = [
            ("schema_version = 2\nseed = 1\nl_seq = 64\n[[source]]\nkind = \"synth\"\nname = \"x\"\ntotal_points = 1", "schema_version"),
            ("schema_version = 1\nseed = 1\nl_seq = 1\n[[source]]\nkind = \"synth\"\nname = \"x\"\ntotal_points = 1", "l_seq"),
            ("schema_version = 1\nseed = 1\nl_seq = 64", "no sources"),
            ("schema_version = 1\nseed = 1\nl_seq = 64\nf_d = 0.0\n[[source]]\nkind = \"synth\"\nname = \"x\"\ntotal_points = 1", "fraction"),
            ("schema_version = 1\nseed = 1\nl_seq = 64\nbogus = true\n[[source]]\nkind = \"synth\"\nname = \"x\"\ntotal_points = 1", "bogus"),
        ];
        for (text, needle) in cases {
            let err = Manifest::from_str(text).unwrap_err().to_string();
            assert!(err.contains(needle), "{needle}: got {err}");
        }
    }

    #[test]
    fn long_format_groups_by_id_and_orders_by_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("long.csv");
        std::fs::write(
            &path,
            "id,timestamp,value\n\
             a,3,30\n\
             b,1,100\n\
             a,1,10\n\
             a,2,20\n\
             b,2,200\n",
        )
        .unwrap();
        let series = ingest_csv_path("src", &path).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].id, "a");
        assert_eq!(series[0].values, vec![10.0, 20.0, 30.0]);
        assert_eq!(series[1].id, "b");
        assert_eq!(series[1].values, vec![100.0, 200.0]);
        assert!(series.iter().all(|s| s.source == "src"));
    }

    #[test]
    fn directory_layout_reads_one_series_per_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("suba")).unwrap();
        std::fs::write(dir.path().join("suba/one.csv"), "value\n1\n2\n3\n").unwrap();
        std::fs::write(
            dir.path().join("two.csv"),
            "timestamp,value\n2,20\n1,10\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("ignored.txt"), "not a csv").unwrap();
        let series = ingest_csv_path("root", dir.path()).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].source, "root/suba");
        assert_eq!(series[0].id, "one");
        assert_eq!(series[0].values, vec![1.0, 2.0, 3.0]);
        assert_eq!(series[1].source, "root");
        assert_eq!(series[1].id, "two");
        assert_eq!(series[1].values, vec![10.0, 20.0], "timestamp orders rows");
    }

    #[test]
    fn csv_errors_carry_location() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("missing.csv");
        std::fs::write(&missing, "id,amount\na,1\n").unwrap();
        let err = ingest_csv_path("s", &missing).unwrap_err().to_string();
        assert!(err.contains("value"), "got {err}");

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "id,value\na,1\na,oops\n").unwrap();
        let err = ingest_csv_path("s", &bad).unwrap_err().to_string();
        assert!(err.contains("record 2") && err.contains("oops"), "got {err}");

        let empty = dir.path().join("empty.csv");
        std::fs::write(&empty, "id,value\n").unwrap();
        let err = ingest_csv_path("s", &empty).unwrap_err().to_string();
        assert!(err.contains("no data rows"), "got {err}");
    }

    #[test]
    fn build_corpus_is_deterministic_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = Manifest::from_str(
            r#"
            schema_version = 1
            seed = 5
            l_seq = 32
            f_d = 0.8

            [[source]]
            kind = "synth"
            name = "demo"
            total_points = 30000
            "#,
        )
        .unwrap();
        let (c1, r1, _) = build_corpus(&manifest, dir.path()).unwrap();
        let (c2, _, _) = build_corpus(&manifest, dir.path()).unwrap();
        assert_eq!(c1, c2);
        assert!(!c1.train.is_empty() && !c1.test.is_empty());
        assert_eq!(r1.entries.len(), 10);
        assert!(c1.train.iter().all(|s| s.values.len() >= 33));

        let a = dir.path().join("a.bin");
        let b = dir.path().join("b.bin");
        save_cache(&a, &c1).unwrap();
        save_cache(&b, &c2).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn build_corpus_normalizes_and_pads_csv_sources() {
        let dir = tempfile::tempdir().unwrap();
        let csv_dir = dir.path().join("csv");
        std::fs::create_dir(&csv_dir).unwrap();
        // 21 series so the 5% split warning stays away; short ones get padded
        for i in 0..21 {
            let mut rows = String::from("value\n");
            for t in 0..(10 + i * 5) {
                rows.push_str(&format!("{}\n", (t as f64 * 0.1).sin() * 4.0 + 2.0));
            }
            std::fs::write(csv_dir.join(format!("s{i:02}.csv")), rows).unwrap();
        }
        let manifest = Manifest::from_str(
            r#"
            schema_version = 1
            seed = 3
            l_seq = 16

            [[source]]
            kind = "csv"
            name = "sensors"
            path = "csv"
            "#,
        )
        .unwrap();
        let (corpus, report, warnings) = build_corpus(&manifest, dir.path()).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        assert_eq!(report.entries[0].0, "sensors");
        assert_eq!(corpus.train.len() + corpus.test.len(), 21);
        for s in corpus.train.iter().chain(&corpus.test) {
            assert!(s.values.len() >= 17);
            // normalized: real values have zero mean within tolerance
            let real = &s.values[s.pad_len..];
            let mean = real.iter().sum::<f64>() / real.len() as f64;
            assert!(mean.abs() < 1e-9, "series {} mean {mean}", s.id);
        }
    }
}
