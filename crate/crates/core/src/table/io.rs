//! JSONL dataset layout: `labels_{cta,cpa,tta}.txt` plus `{train,valid,test}.jsonl`,
//! one table per line with column-major cells.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnnotatedTable, Column, Dataset, LabelSpace, PairLabel, Split, Table, Task, TaskLabels};
use crate::error::{Error, Result};

/// One dataset line as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecord {
    pub table_id: String,
    pub columns: Vec<Vec<Option<String>>>,
    #[serde(default)]
    pub cta: Option<Vec<Option<String>>>,
    #[serde(default)]
    pub cpa: Option<Vec<(usize, usize, String)>>,
    #[serde(default)]
    pub tta: Option<String>,
}

impl RawRecord {
    pub fn to_table(&self) -> Result<Table> {
        Table::new(
            self.table_id.clone(),
            self.columns.iter().cloned().map(Column::new).collect(),
        )
    }

    fn uses(&self, task: Task) -> bool {
        match task {
            Task::Cta => self.cta.is_some(),
            Task::Cpa => self.cpa.is_some(),
            Task::Tta => self.tta.is_some(),
        }
    }

    /// Resolves label strings to ordinals and validates the table.
    pub fn annotate(&self, labels: &TaskLabels) -> Result<AnnotatedTable> {
        let table = self.to_table()?;
        let id = &self.table_id;
        let lookup = |task: Task, label: &str| -> Result<usize> {
            let space = labels.require(task)?;
            space.ordinal(label).ok_or_else(|| {
                Error::validation(format!("table {id}: {task} label {label:?} is not in {}", task.label_file()))
            })
        };
        let cta = match &self.cta {
            Some(v) => Some(
                v.iter()
                    .map(|l| l.as_deref().map(|l| lookup(Task::Cta, l)).transpose())
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        let cpa = match &self.cpa {
            Some(v) => Some(
                v.iter()
                    .map(|(i, j, l)| {
                        Ok(PairLabel {
                            subject: *i,
                            object: *j,
                            label: lookup(Task::Cpa, l)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        let tta = self.tta.as_deref().map(|l| lookup(Task::Tta, l)).transpose()?;
        let annotated = AnnotatedTable { table, cta, cpa, tta };
        annotated.validate(labels)?;
        Ok(annotated)
    }

    pub fn from_annotated(t: &AnnotatedTable, labels: &TaskLabels) -> Self {
        let name = |task: Task, o: usize| {
            labels
                .get(task)
                .and_then(|s| s.label(o))
                .unwrap_or_default()
                .to_string()
        };
        RawRecord {
            table_id: t.table.id().to_string(),
            columns: t.table.columns().iter().map(|c| c.cells().to_vec()).collect(),
            cta: t
                .cta
                .as_ref()
                .map(|v| v.iter().map(|o| o.map(|o| name(Task::Cta, o))).collect()),
            cpa: t
                .cpa
                .as_ref()
                .map(|v| v.iter().map(|p| (p.subject, p.object, name(Task::Cpa, p.label))).collect()),
            tta: t.tta.map(|o| name(Task::Tta, o)),
        }
    }
}

pub fn parse_label_file(task: Task, text: &str) -> Result<LabelSpace> {
    let labels = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    LabelSpace::new(task, labels)
}

/// Parses one JSONL line. `line` is 1-based and only used for messages.
pub fn parse_record_line(text: &str, source_name: &str, line: usize, labels: &TaskLabels) -> Result<AnnotatedTable> {
    let raw: RawRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message: e.to_string(),
    })?;
    raw.annotate(labels).map_err(|e| match e {
        // Shape problems inside a record are reported as parse errors on that line.
        Error::Validation(message) if raw.to_table().is_err() => Error::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        },
        other => other,
    })
}

fn read_jsonl(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

/// Reads unannotated input tables (labels, if any, are kept raw).
pub fn read_tables(path: &Path) -> Result<Vec<RawRecord>> {
    let name = path.display().to_string();
    read_jsonl(path)?
        .into_iter()
        .map(|(line, text)| {
            let raw: RawRecord = serde_json::from_str(&text).map_err(|e| Error::Parse {
                source_name: name.clone(),
                line,
                message: e.to_string(),
            })?;
            raw.to_table().map_err(|e| Error::Parse {
                source_name: name.clone(),
                line,
                message: e.to_string(),
            })?;
            Ok(raw)
        })
        .collect()
}

fn load_impl(dir: &Path, required: &[Task]) -> Result<Dataset> {
    let mut labels = TaskLabels::default();
    for task in Task::ALL {
        let path = dir.join(task.label_file());
        if path.exists() {
            labels.set(parse_label_file(task, &fs::read_to_string(&path)?)?);
        } else if required.contains(&task) {
            return Err(Error::MissingFile(path));
        }
    }

    let mut splits: Vec<Vec<AnnotatedTable>> = Vec::with_capacity(3);
    for split in Split::ALL {
        let path = dir.join(split.file_name());
        if !path.exists() {
            if split == Split::Train {
                return Err(Error::MissingFile(path));
            }
            splits.push(Vec::new());
            continue;
        }
        let name = path.display().to_string();
        let mut tables = Vec::new();
        for (line, text) in read_jsonl(&path)? {
            let raw: RawRecord = serde_json::from_str(&text).map_err(|e| Error::Parse {
                source_name: name.clone(),
                line,
                message: e.to_string(),
            })?;
            for task in Task::ALL {
                if raw.uses(task) && labels.get(task).is_none() {
                    return Err(Error::MissingFile(dir.join(task.label_file())));
                }
            }
            tables.push(parse_record_line(&text, &name, line, &labels)?);
        }
        splits.push(tables);
    }
    let test = splits.pop().unwrap();
    let valid = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    if train.is_empty() {
        return Err(Error::validation(format!("{}: train split is empty", dir.display())));
    }
    for task in required {
        if !train.iter().any(|t| t.has_labels(*task)) {
            return Err(Error::validation(format!("train split has no {task} labels")));
        }
    }
    Ok(Dataset { train, valid, test, labels })
}

/// Loads a dataset for one task; that task's label file must exist.
pub fn load_dataset(dir: &Path, task: Task) -> Result<Dataset> {
    load_impl(dir, &[task])
}

/// Loads a dataset with every label file that is present.
pub fn load_dataset_all(dir: &Path) -> Result<Dataset> {
    load_impl(dir, &[])
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    for task in Task::ALL {
        if let Some(space) = dataset.labels.get(task) {
            let mut text = space.labels().join("\n");
            text.push('\n');
            fs::write(dir.join(task.label_file()), text)?;
        }
    }
    for split in Split::ALL {
        let mut out = Vec::new();
        for t in dataset.split(split) {
            serde_json::to_writer(&mut out, &RawRecord::from_annotated(t, &dataset.labels))
                .map_err(|e| Error::format(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        fs::write(dir.join(split.file_name()), out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn sample_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "labels_cta.txt", "city\nyear\nname\n");
        write(
            dir.path(),
            "train.jsonl",
            concat!(
                r#"{"table_id":"t1","columns":[["Paris","Lyon"],["1999",null]],"cta":["city","year"],"cpa":null,"tta":null}"#,
                "\n",
                r#"{"table_id":"t2","columns":[["Ann",""]],"cta":["name"]}"#,
                "\n"
            ),
        );
        dir
    }

    #[test]
    fn loads_two_tables_with_three_labels() {
        let dir = sample_dir();
        let ds = load_dataset(dir.path(), Task::Cta).unwrap();
        assert_eq!(ds.train.len(), 2);
        assert_eq!(ds.labels.require(Task::Cta).unwrap().len(), 3);
        assert!(ds.valid.is_empty() && ds.test.is_empty());
        assert_eq!(ds.train[0].cta, Some(vec![Some(0), Some(1)]));
        assert_eq!(ds.train[1].table.columns()[0].cells()[1], None);
    }

    #[test]
    fn ragged_record_names_line() {
        let dir = sample_dir();
        write(
            dir.path(),
            "valid.jsonl",
            "\n{\"table_id\":\"bad\",\"columns\":[[\"a\",\"b\"],[\"c\"]]}\n",
        );
        let err = load_dataset(dir.path(), Task::Cta).unwrap_err();
        match err {
            Error::Parse { line, source_name, .. } => {
                assert_eq!(line, 2);
                assert!(source_name.ends_with("valid.jsonl"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_is_parse_error() {
        let dir = sample_dir();
        write(dir.path(), "test.jsonl", "{not json}\n");
        assert!(matches!(load_dataset(dir.path(), Task::Cta), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn unknown_label_names_table() {
        let dir = sample_dir();
        write(
            dir.path(),
            "test.jsonl",
            r#"{"table_id":"oops","columns":[["x"]],"cta":["foo"]}"#,
        );
        let err = load_dataset(dir.path(), Task::Cta).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let msg = err.to_string();
        assert!(msg.contains("oops") && msg.contains("foo"), "{msg}");
    }

    #[test]
    fn missing_label_file_is_reported() {
        let dir = sample_dir();
        match load_dataset(dir.path(), Task::Tta).unwrap_err() {
            Error::MissingFile(p) => assert!(p.ends_with("labels_tta.txt")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_train_split_is_rejected() {
        let dir = sample_dir();
        write(dir.path(), "train.jsonl", "");
        assert!(load_dataset(dir.path(), Task::Cta).is_err());
    }

    #[test]
    fn write_then_load_preserves_content() {
        let dir = sample_dir();
        let ds = load_dataset_all(dir.path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        write_dataset(out.path(), &ds).unwrap();
        let again = load_dataset_all(out.path()).unwrap();
        assert_eq!(ds, again);
    }
}
