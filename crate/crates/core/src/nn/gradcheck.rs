use super::model::{Network, Targets};
use crate::colgraph::ColumnGraph;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-4;

/// Gradients smaller than this in magnitude are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Parameter holding the worst entry.
    pub worst_param: String,
    pub n_checked: usize,
    /// (parameter name, max relative error) in store order.
    pub per_param: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Checks every parameter entry of the composite network against central
/// differences of the mean cross-entropy over `targets`.
pub fn grad_check(net: &Network, graph: &ColumnGraph, targets: &Targets, gold: &[usize]) -> Result<GradCheckReport> {
    let scale = 1.0 / targets.len().max(1) as f64;
    let (_, grads) = net.loss_and_gradients(graph, targets, gold, scale)?;
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_param: String::new(),
        n_checked: 0,
        per_param: Vec::new(),
    };
    for p in 0..net.params.len() {
        let mut worst = 0.0f64;
        for j in 0..net.params.values()[p].len() {
            let original = net.params.values()[p].data()[j];
            probe.params.values_mut()[p].data_mut()[j] = original + FD_STEP;
            let plus = probe.loss(graph, targets, gold)? * scale;
            probe.params.values_mut()[p].data_mut()[j] = original - FD_STEP;
            let minus = probe.loss(graph, targets, gold)? * scale;
            probe.params.values_mut()[p].data_mut()[j] = original;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let analytic = grads.params[p].as_ref().map_or(0.0, |g| g.data()[j]);
            let rel = relative_error(analytic, numeric);
            worst = worst.max(rel);
            report.max_abs_error = report.max_abs_error.max((analytic - numeric).abs());
            report.n_checked += 1;
        }
        if worst > report.max_rel_error || report.worst_param.is_empty() {
            report.max_rel_error = report.max_rel_error.max(worst);
            report.worst_param = net.params.name(p).to_string();
        }
        report.per_param.push((net.params.name(p).to_string(), worst));
    }
    Ok(report)
}
