use serde::Serialize;

use crate::error::{Error, Result};
use crate::table::LabelSpace;

fn check_lengths(preds: &[usize], golds: &[usize]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    if preds.len() != golds.len() {
        return Err(Error::invalid(format!("{} predictions for {} gold labels", preds.len(), golds.len())));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

fn class_counts(preds: &[usize], golds: &[usize]) -> Vec<Counts> {
    let n = preds.iter().chain(golds).max().map_or(0, |m| m + 1);
    let mut counts = vec![Counts::default(); n];
    for (&p, &g) in preds.iter().zip(golds) {
        if p == g {
            counts[g].tp += 1;
        } else {
            counts[p].fp += 1;
            counts[g].fn_ += 1;
        }
    }
    counts
}

/// `2ΣTP / (2ΣTP + ΣFP + ΣFN)` over all classes.
pub fn micro_f1(preds: &[usize], golds: &[usize]) -> Result<f64> {
    check_lengths(preds, golds)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for c in class_counts(preds, golds) {
        tp += c.tp;
        fp += c.fp;
        fn_ += c.fn_;
    }
    Ok((2 * tp) as f64 / (2 * tp + fp + fn_) as f64)
}

/// Per-class F1 indexed by ordinal; `None` where the class has no gold support.
pub fn per_class_f1(preds: &[usize], golds: &[usize], n_classes: usize) -> Result<Vec<Option<f64>>> {
    check_lengths(preds, golds)?;
    if let Some(x) = preds.iter().chain(golds).find(|&&x| x >= n_classes) {
        return Err(Error::invalid(format!("label ordinal {x} outside {n_classes} classes")));
    }
    let mut counts = class_counts(preds, golds);
    counts.resize(n_classes, Counts::default());
    Ok(counts
        .iter()
        .map(|c| (c.tp + c.fn_ > 0).then(|| (2 * c.tp) as f64 / (2 * c.tp + c.fp + c.fn_) as f64))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScore {
    pub label: String,
    pub f1: Option<f64>,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub task: String,
    pub micro_f1: f64,
    pub n_targets: usize,
    pub per_class: Vec<ClassScore>,
}

impl EvalReport {
    pub fn new(preds: &[usize], golds: &[usize], labels: &LabelSpace) -> Result<Self> {
        let f1 = per_class_f1(preds, golds, labels.len())?;
        let mut support = vec![0; labels.len()];
        golds.iter().for_each(|&g| support[g] += 1);
        Ok(Self {
            task: labels.task().as_str().to_string(),
            micro_f1: micro_f1(preds, golds)?,
            n_targets: golds.len(),
            per_class: labels
                .labels()
                .iter()
                .zip(f1)
                .zip(support)
                .map(|((label, f1), support)| ClassScore {
                    label: label.clone(),
                    f1,
                    support,
                })
                .collect(),
        })
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "# {} evaluation\n\nmicro-F1: {:.4} over {} targets\n\n| label | F1 | support |\n|---|---|---|\n",
            self.task, self.micro_f1, self.n_targets
        );
        for c in &self.per_class {
            let f1 = c.f1.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
            out.push_str(&format!("| {} | {f1} | {} |\n", c.label, c.support));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyBin {
    pub name: &'static str,
    /// Class ordinals in the bin, most frequent first.
    pub classes: Vec<usize>,
    /// Unweighted mean F1 over classes with test support.
    pub mean_f1: Option<f64>,
    /// Classes left out of the mean because they never occur in the test golds.
    pub excluded: Vec<usize>,
}

/// Classes sorted by descending training frequency (ties by ordinal), cut
/// into High/Medium/Low bins whose sizes differ by at most one.
pub fn freq_stratified_f1(preds: &[usize], golds: &[usize], train_frequencies: &[usize]) -> Result<[FrequencyBin; 3]> {
    let c = train_frequencies.len();
    if c < 3 {
        return Err(Error::invalid(format!("frequency strata need at least 3 classes, got {c}")));
    }
    let f1 = per_class_f1(preds, golds, c)?;
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| train_frequencies[b].cmp(&train_frequencies[a]).then(a.cmp(&b)));
    let mut start = 0;
    let bins = [0, 1, 2].map(|i| {
        let size = c / 3 + usize::from(i < c % 3);
        let classes = order[start..start + size].to_vec();
        start += size;
        let scored: Vec<f64> = classes.iter().filter_map(|&k| f1[k]).collect();
        FrequencyBin {
            name: ["high", "medium", "low"][i],
            excluded: classes.iter().copied().filter(|&k| f1[k].is_none()).collect(),
            mean_f1: (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64),
            classes,
        }
    });
    Ok(bins)
}
