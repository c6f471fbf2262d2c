//! Table data model: headerless tables of string cells, label spaces for the
//! three annotation tasks, and annotated datasets.

mod io;
mod sample;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::sha256;
use crate::error::{Error, Result};

pub use io::{load_dataset, load_dataset_all, parse_label_file, parse_record_line, read_tables, write_dataset, RawRecord};
pub use sample::{sample_column_values, EMPTY_SENTINEL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Cta,
    Cpa,
    Tta,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Cta, Task::Cpa, Task::Tta];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Cta => "cta",
            Task::Cpa => "cpa",
            Task::Tta => "tta",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Task::Cta => 0,
            Task::Cpa => 1,
            Task::Tta => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Task> {
        Task::ALL.get(code as usize).copied()
    }

    pub fn label_file(self) -> String {
        format!("labels_{}.txt", self.as_str())
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cta" => Ok(Task::Cta),
            "cpa" => Ok(Task::Cpa),
            "tta" => Ok(Task::Tta),
            other => Err(Error::invalid(format!("unknown task {other:?} (expected cta, cpa or tta)"))),
        }
    }
}

/// One column of cells. Empty strings are stored as nulls.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    cells: Vec<Option<String>>,
}

impl Column {
    pub fn new(cells: Vec<Option<String>>) -> Self {
        let cells = cells
            .into_iter()
            .map(|c| c.filter(|s| !s.is_empty()))
            .collect();
        Self { cells }
    }

    pub fn from_strs<S: AsRef<str>>(cells: &[S]) -> Self {
        Self::new(cells.iter().map(|s| Some(s.as_ref().to_string())).collect())
    }

    pub fn cells(&self) -> &[Option<String>] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn non_null(&self) -> impl Iterator<Item = &str> {
        self.cells.iter().filter_map(|c| c.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    table_id: String,
    columns: Vec<Column>,
}

impl Table {
    pub fn new(table_id: impl Into<String>, columns: Vec<Column>) -> Result<Self> {
        let table_id = table_id.into();
        if columns.is_empty() {
            return Err(Error::validation(format!("table {table_id}: no columns")));
        }
        let rows = columns[0].len();
        if rows == 0 {
            return Err(Error::validation(format!("table {table_id}: no rows")));
        }
        if let Some((i, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != rows) {
            return Err(Error::validation(format!(
                "table {table_id}: column {i} has {} rows, expected {rows}",
                c.len()
            )));
        }
        Ok(Self { table_id, columns })
    }

    pub fn id(&self) -> &str {
        &self.table_id
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        self.columns[0].len()
    }
}

/// Ordered, duplicate-free label set for one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    task: Task,
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSpace {
    pub fn new(task: Task, labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::validation(format!("{task} label space is empty")));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::validation(format!("{task} label {l:?} listed twice")));
            }
        }
        Ok(Self { task, labels, index })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn ordinal(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, ordinal: usize) -> Option<&str> {
        self.labels.get(ordinal).map(String::as_str)
    }

    /// SHA-256 over the task and the ordered labels.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut text = String::from(self.task.as_str());
        for l in &self.labels {
            text.push('\n');
            text.push_str(l);
        }
        sha256(text.as_bytes())
    }
}

/// Label spaces for whichever tasks a dataset carries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskLabels {
    pub cta: Option<LabelSpace>,
    pub cpa: Option<LabelSpace>,
    pub tta: Option<LabelSpace>,
}

impl TaskLabels {
    pub fn get(&self, task: Task) -> Option<&LabelSpace> {
        match task {
            Task::Cta => self.cta.as_ref(),
            Task::Cpa => self.cpa.as_ref(),
            Task::Tta => self.tta.as_ref(),
        }
    }

    pub fn set(&mut self, space: LabelSpace) {
        match space.task() {
            Task::Cta => self.cta = Some(space),
            Task::Cpa => self.cpa = Some(space),
            Task::Tta => self.tta = Some(space),
        }
    }

    pub fn require(&self, task: Task) -> Result<&LabelSpace> {
        self.get(task)
            .ok_or_else(|| Error::validation(format!("dataset has no {task} label space")))
    }
}

/// Ordered column pair with a relation label ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairLabel {
    pub subject: usize,
    pub object: usize,
    pub label: usize,
}

/// A table plus optional gold labels for each task (as label ordinals).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedTable {
    pub table: Table,
    /// One entry per column; `None` marks an unlabeled column.
    pub cta: Option<Vec<Option<usize>>>,
    pub cpa: Option<Vec<PairLabel>>,
    pub tta: Option<usize>,
}

impl AnnotatedTable {
    pub fn unlabeled(table: Table) -> Self {
        Self {
            table,
            cta: None,
            cpa: None,
            tta: None,
        }
    }

    pub fn has_labels(&self, task: Task) -> bool {
        match task {
            Task::Cta => self.cta.as_ref().is_some_and(|v| v.iter().any(Option::is_some)),
            Task::Cpa => self.cpa.as_ref().is_some_and(|v| !v.is_empty()),
            Task::Tta => self.tta.is_some(),
        }
    }

    /// Checks label arity and ranges against the table and label spaces.
    pub fn validate(&self, labels: &TaskLabels) -> Result<()> {
        let id = self.table.id();
        let n = self.table.n_columns();
        if let Some(cta) = &self.cta {
            if cta.len() != n {
                return Err(Error::validation(format!(
                    "table {id}: {} cta labels for {n} columns",
                    cta.len()
                )));
            }
            let space = labels.require(Task::Cta)?;
            if let Some(bad) = cta.iter().flatten().find(|&&o| o >= space.len()) {
                return Err(Error::validation(format!("table {id}: cta ordinal {bad} out of range")));
            }
        }
        if let Some(cpa) = &self.cpa {
            let space = labels.require(Task::Cpa)?;
            let mut seen = std::collections::HashSet::new();
            for p in cpa {
                if p.subject >= n || p.object >= n {
                    return Err(Error::validation(format!(
                        "table {id}: cpa pair ({}, {}) out of range for {n} columns",
                        p.subject, p.object
                    )));
                }
                if p.subject == p.object {
                    return Err(Error::validation(format!(
                        "table {id}: cpa pair ({0}, {0}) relates a column to itself",
                        p.subject
                    )));
                }
                if p.label >= space.len() {
                    return Err(Error::validation(format!("table {id}: cpa ordinal {} out of range", p.label)));
                }
                if !seen.insert((p.subject, p.object)) {
                    return Err(Error::validation(format!(
                        "table {id}: cpa pair ({}, {}) labeled twice",
                        p.subject, p.object
                    )));
                }
            }
        }
        if let Some(t) = self.tta {
            if t >= labels.require(Task::Tta)?.len() {
                return Err(Error::validation(format!("table {id}: tta ordinal {t} out of range")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.jsonl", self.as_str())
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub train: Vec<AnnotatedTable>,
    pub valid: Vec<AnnotatedTable>,
    pub test: Vec<AnnotatedTable>,
    pub labels: TaskLabels,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[AnnotatedTable] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    /// Count of each label ordinal among the training targets of `task`.
    pub fn train_frequencies(&self, task: Task) -> Vec<usize> {
        let k = self.labels.get(task).map_or(0, LabelSpace::len);
        let mut freq = vec![0; k];
        for t in &self.train {
            match task {
                Task::Cta => t.cta.iter().flatten().flatten().for_each(|&o| freq[o] += 1),
                Task::Cpa => t.cpa.iter().flatten().for_each(|p| freq[p.label] += 1),
                Task::Tta => t.tta.iter().for_each(|&o| freq[o] += 1),
            }
        }
        freq
    }
}
