//! CSV cohorts, JSON schema / model / config documents.
//!
//! Cohort files are UTF-8, comma separated, with a header row. An empty cell
//! is a missing value; `.` is rejected rather than read as missing. Columns
//! not named by the schema are ignored with a warning. An optional `id`
//! column carries patient ids, otherwise rows are numbered from 1.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use peer_core::cox::CoxModel;
use peer_core::dataset::{OutcomeValue, PatientRecord, SurvivalDataset};
use peer_core::rules::{TabularScore, BUILTIN_RULE_FILES};
use peer_core::schema::FeatureSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ID_COLUMN: &str = "id";
pub const MODEL_FORMAT: &str = "peer-cox-model/1";

pub fn load_csv(path: &Path, schema: &FeatureSchema) -> Result<SurvivalDataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_cohort(file, schema, path)
}

/// Parses a cohort from any reader; `path` is only used in error messages.
pub fn read_cohort<R: Read>(reader: R, schema: &FeatureSchema, path: &Path) -> Result<SurvivalDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let position = |name: &str| header.iter().position(|h| h == name);
    let required = |name: &str| {
        position(name).ok_or_else(|| Error::Core(peer_core::Error::Schema(format!("{}: missing required column `{name}`", path.display()))))
    };
    let feature_cols = schema
        .features
        .iter()
        .map(|f| required(&f.name))
        .collect::<Result<Vec<_>>>()?;
    let outcome_cols = schema
        .outcomes
        .iter()
        .map(|o| Ok((required(&o.time_column)?, required(&o.event_column)?)))
        .collect::<Result<Vec<_>>>()?;
    let id_col = position(ID_COLUMN);
    let known: Vec<usize> = feature_cols
        .iter()
        .copied()
        .chain(outcome_cols.iter().flat_map(|&(t, e)| [t, e]))
        .chain(id_col)
        .collect();
    let extra: Vec<&str> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| !known.contains(i))
        .map(|(_, h)| h)
        .collect();
    if !extra.is_empty() {
        log::warn!("{}: ignoring unknown columns {}", path.display(), extra.join(", "));
    }

    let mut records = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map_or(k as u64 + 2, |p| p.line());
        let cell = |c: usize| row.get(c).unwrap_or("");
        let parse_err = |c: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            row: line,
            column: header[c].to_string(),
            message,
        };
        let number = |c: usize| -> Result<Option<f64>> {
            let s = cell(c);
            if s.is_empty() {
                return Ok(None);
            }
            if s == "." {
                return Err(parse_err(c, "`.` is not a missing-value marker; leave the cell empty".into()));
            }
            match s.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(parse_err(c, format!("cannot parse `{s}` as a number"))),
            }
        };
        let values = feature_cols.iter().map(|&c| number(c)).collect::<Result<Vec<_>>>()?;
        let mut outcomes = Vec::with_capacity(outcome_cols.len());
        for &(tc, ec) in &outcome_cols {
            let time = number(tc)?.ok_or_else(|| parse_err(tc, "outcome time is empty".into()))?;
            if time <= 0.0 {
                return Err(Error::Core(peer_core::Error::Validation(format!(
                    "{}: row {line}: `{}` must be positive, got {time}",
                    path.display(),
                    header[tc].to_string()
                ))));
            }
            let event = match cell(ec).trim() {
                "1" => true,
                "0" => false,
                other => return Err(parse_err(ec, format!("event indicator must be 0 or 1, got `{other}`"))),
            };
            outcomes.push(OutcomeValue { time, event });
        }
        let id = match id_col {
            Some(c) => cell(c).to_string(),
            None => (k + 1).to_string(),
        };
        records.push(PatientRecord { id, values, outcomes });
    }
    Ok(SurvivalDataset::new(schema.clone(), records)?)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => {
            let message = match line {
                Some(l) => format!("row {l}: {kind:?}"),
                None => format!("{kind:?}"),
            };
            Error::format(path, message)
        }
    }
}

/// Canonical serialization: shortest round-trip decimal for every value, so
/// `read_cohort(write_cohort(ds))` reproduces `ds` bit for bit.
pub fn write_cohort<W: Write>(ds: &SurvivalDataset, writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![ID_COLUMN.to_string()];
    header.extend(ds.schema.feature_names());
    for o in &ds.schema.outcomes {
        header.push(o.time_column.clone());
        header.push(o.event_column.clone());
    }
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for r in &ds.records {
        row.clear();
        row.push(r.id.clone());
        row.extend(r.values.iter().map(|v| v.map_or(String::new(), |x| x.to_string())));
        for o in &r.outcomes {
            row.push(o.time.to_string());
            row.push(if o.event { "1" } else { "0" }.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn write_csv(path: &Path, ds: &SurvivalDataset) -> Result<()> {
    let mut buf = Vec::new();
    write_cohort(ds, &mut buf).map_err(|e| Error::io(path, e))?;
    write_bytes(path, &buf)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, to_json(value).as_bytes())
}

pub fn load_schema(path: &Path) -> Result<FeatureSchema> {
    let schema: FeatureSchema = read_json(path)?;
    schema.validate()?;
    Ok(schema)
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    #[serde(flatten)]
    model: CoxModel,
}

pub fn save_model(path: &Path, model: &CoxModel) -> Result<()> {
    write_json(
        path,
        &ModelDocument {
            format: MODEL_FORMAT.to_string(),
            model: model.clone(),
        },
    )
}

pub fn load_model(path: &Path) -> Result<CoxModel> {
    let doc: ModelDocument = read_json(path)?;
    if doc.format != MODEL_FORMAT {
        return Err(Error::format(
            path,
            format!("unsupported model format `{}` (expected `{MODEL_FORMAT}`)", doc.format),
        ));
    }
    let m = &doc.model;
    let d = m.feature_names.len();
    if m.beta.len() != d || m.norm_stats.len() != d {
        return Err(Error::format(path, "feature_names, beta and norm_stats differ in length"));
    }
    Ok(doc.model)
}

pub fn load_tabular_score(path: &Path) -> Result<TabularScore> {
    let mut score: TabularScore = read_json(path)?;
    if score.name.is_empty() {
        score.name = path.file_stem().map_or("tabular".into(), |s| s.to_string_lossy().into_owned());
    }
    score.validate()?;
    Ok(score)
}

/// One of the rule files shipped with the library.
pub fn builtin_rules(name: &str) -> Option<TabularScore> {
    BUILTIN_RULE_FILES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| serde_json::from_str(text).expect("built-in rule files parse"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<SurvivalDataset> {
        read_cohort(text.as_bytes(), &FeatureSchema::numbered(2), Path::new("t.csv"))
    }

    const HEADER: &str = "id,x1,x2,death_time_days,death_event,vasopressor_time_days,vasopressor_event,ventilator_time_days,ventilator_event\n";

    #[test]
    fn empty_cells_are_missing() {
        let ds = parse(&format!("{HEADER}a,1.5,,2,1,2,0,2,0\n")).unwrap();
        assert_eq!(ds.records[0].values, vec![Some(1.5), None]);
    }

    #[test]
    fn dot_is_rejected_with_position() {
        let err = parse(&format!("{HEADER}a,1,2,2,1,2,0,2,0\nb,.,2,2,1,2,0,2,0\n")).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "x1");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn missing_column_is_named() {
        let err = parse("id,x1\n").unwrap_err();
        assert!(err.to_string().contains("`x2`"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn nonpositive_time_is_invalid() {
        assert!(parse(&format!("{HEADER}a,1,2,0,1,2,0,2,0\n")).is_err());
    }

    #[test]
    fn header_only_gives_empty_cohort() {
        assert!(parse(HEADER).unwrap().is_empty());
    }

    #[test]
    fn builtins_parse() {
        for (name, _) in BUILTIN_RULE_FILES {
            builtin_rules(name).unwrap().validate().unwrap();
        }
    }
}
