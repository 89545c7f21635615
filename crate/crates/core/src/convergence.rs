//! Empirical checks of the convergence guarantees over a recorded trajectory.
//!
//! Each [`IterationRecord`] describes step `k`: the error `E^k` and gradient
//! `q^k` at the current weights, the increment `dv^{k+1}` the optimizer applied,
//! the resulting change of every layer's outputs, the first-order prediction
//! `Q^k(E^k) = sum dv^{k+1} : q^k` and the realised `dE^{k+1} = E^{k+1} - E^k`.
//!
//! Checked properties:
//!
//! * descent inequality `Q^k(E^k) <= (-eta + tau) sum ||q^k||^2` (exact up to rounding);
//! * increment bound `||dv^{k+1}|| <= (eta + tau) ||q^k||` per edge (exact up to rounding);
//! * second-order remainder `|Q^k(E^k) - dE^{k+1}| <= C (sum ||dH||^2 + sum ||dv||^2)`,
//!   reported as the sup of the ratio since the constant is not constructive;
//! * monotone descent, per-step error estimate, summability of `||q||^2`, and
//!   vanishing tail gradients and increments.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::optimizer::max_eta;
use crate::params::EdgeMatrices;
use crate::gradients::GradientSet;
use crate::topology::{DagTopology, Edge};

/// Columns of the trajectory CSV.
pub const CSV_HEADER: &str = "k,E,sum_q_sq,sum_dv_sq,sum_dH_sq,Q_pred,dE,max_abs_weight";

/// Relative slack for the algebraically exact inequalities.
pub const EXACT_SLACK: f64 = 1e-12;

/// Measurements for one optimizer step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationRecord {
    pub k: usize,
    /// `E^k`.
    pub error: f64,
    /// `||q^k_(i,j)||^2` per edge, in topology edge order.
    pub edge_q_sq: Vec<f64>,
    pub sum_q_sq: f64,
    /// `||dv^{k+1}_(i,j)||^2` per edge for the increment applied at this step.
    pub edge_dv_sq: Vec<f64>,
    pub sum_dv_sq: f64,
    /// `||H_n^{k+1} - H_n^k||^2` per layer, summed over all training samples.
    pub layer_dh_sq: Vec<f64>,
    pub sum_dh_sq: f64,
    /// `Q^k(E^k)`.
    pub predicted: f64,
    /// `E^{k+1} - E^k`.
    pub delta_error: Option<f64>,
    /// `max |v^k|` over all weights.
    pub max_abs_weight: f64,
}

/// `sum_(i,j) dv^{k+1}_(i,j) : q^k_(i,j)`.
pub fn first_order_predictor(g: &GradientSet, next_delta: &EdgeMatrices) -> Result<f64> {
    g.per_edge
        .check_keys(next_delta, "gradients and increments")
        .map_err(|_| Error::KeyMismatch("gradients and increments"))?;
    next_delta.dot(&g.per_edge)
}

fn within(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + EXACT_SLACK * (1.0 + lhs.abs())
}

/// `Q^k(E^k) <= (-eta + s eta) sum ||q^k||^2`, up to [`EXACT_SLACK`].
pub fn check_descent_inequality(record: &IterationRecord, eta: f64, s: f64) -> bool {
    within(record.predicted, (-eta + s * eta) * record.sum_q_sq)
}

/// Edges (by index) where `||dv^{k+1}|| > (eta + tau) ||q^k||` beyond slack.
pub fn increment_bound_violations(record: &IterationRecord, eta: f64, s: f64) -> Vec<usize> {
    let factor = eta + s * eta;
    record
        .edge_dv_sq
        .iter()
        .zip(&record.edge_q_sq)
        .enumerate()
        .filter(|(_, (dv, q))| !within(dv.sqrt(), factor * q.sqrt()))
        .map(|(idx, _)| idx)
        .collect()
}

/// `|Q^k(E^k) - dE^{k+1}| / (sum ||dH||^2 + sum ||dv||^2)` for one step.
/// `Ok(None)` when the step carries no information (no `dE`, or a stationary
/// step where both numerator and denominator vanish).
pub fn theorem2_ratio(record: &IterationRecord) -> Result<Option<f64>> {
    let Some(de) = record.delta_error else {
        return Ok(None);
    };
    let residual = (record.predicted - de).abs();
    let scale = record.sum_dh_sq + record.sum_dv_sq;
    if scale == 0.0 {
        if residual == 0.0 {
            Ok(None)
        } else {
            Err(Error::UnboundedRatio {
                k: record.k,
                residual,
            })
        }
    } else {
        Ok(Some(residual / scale))
    }
}

/// Per-step remainder ratios, `None` where skipped.
pub fn theorem2_ratios(trajectory: &[IterationRecord]) -> Result<Vec<Option<f64>>> {
    trajectory.iter().map(theorem2_ratio).collect()
}

/// Empirical constant: the sup over usable steps of [`theorem2_ratio`].
pub fn estimate_c(trajectory: &[IterationRecord]) -> Result<f64> {
    if trajectory.len() < 2 {
        return Err(Error::InsufficientData);
    }
    theorem2_ratios(trajectory)?
        .into_iter()
        .flatten()
        .reduce(f64::max)
        .ok_or(Error::InsufficientData)
}

/// Max of the remainder ratio over the first and the second half of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioStability {
    pub first_half_max: f64,
    pub second_half_max: f64,
}

impl RatioStability {
    /// `second_half_max / first_half_max`.
    pub fn growth(&self) -> f64 {
        self.second_half_max / self.first_half_max
    }

    /// The second half's maximum exceeds the first half's by at most `factor`.
    /// A ratio that settles lower as the run converges counts as stable.
    pub fn bounded_growth(&self, factor: f64) -> bool {
        self.second_half_max.is_finite() && self.second_half_max <= factor * self.first_half_max
    }
}

pub fn ratio_stability(trajectory: &[IterationRecord]) -> Result<Option<RatioStability>> {
    let ratios = theorem2_ratios(trajectory)?;
    let mid = ratios.len() / 2;
    let max_of = |part: &[Option<f64>]| part.iter().flatten().copied().reduce(f64::max);
    Ok(match (max_of(&ratios[..mid]), max_of(&ratios[mid..])) {
        (Some(first_half_max), Some(second_half_max)) => Some(RatioStability {
            first_half_max,
            second_half_max,
        }),
        _ => None,
    })
}

/// Sup over steps and layers of `||dH_n|| / ((eta + tau) sum_{(m,n)} ||q_(m,n)||)`.
/// Needs per-layer and per-edge data; `None` if nothing is usable.
pub fn output_increment_constant(
    topology: &DagTopology,
    trajectory: &[IterationRecord],
    eta: f64,
    s: f64,
) -> Option<f64> {
    let factor = eta + s * eta;
    let mut sup: Option<f64> = None;
    for rec in trajectory {
        if rec.layer_dh_sq.len() != topology.num_layers() || rec.edge_q_sq.len() != topology.edges().len() {
            continue;
        }
        for n in 1..topology.num_layers() {
            let q_sum: f64 = topology.incoming(n).iter().map(|&i| rec.edge_q_sq[i].sqrt()).sum();
            let dh = rec.layer_dh_sq[n].sqrt();
            if q_sum > 0.0 {
                let r = dh / (factor * q_sum);
                sup = Some(sup.map_or(r, |m: f64| m.max(r)));
            }
        }
    }
    sup
}

/// Thresholds for [`verify_theorem1`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    /// Absolute slack on `E^{k+1} <= E^k`.
    pub monotone_slack: f64,
    /// Bound on `sqrt(sum ||q||^2)` over the tail window.
    pub tail_threshold: f64,
    /// Number of final steps forming the tail.
    pub tail_window: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            monotone_slack: 1e-12,
            tail_threshold: 1e-4,
            tail_window: 10,
        }
    }
}

/// Outcome of checking a trajectory against the convergence theorem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceVerdict {
    pub iterations: usize,
    pub eta: f64,
    pub s: f64,
    pub tau: f64,
    /// Constant used for the step-size precondition and the per-step estimate.
    pub c_used: Option<f64>,
    pub max_eta: Option<f64>,
    /// `eta < max_eta(s, C)`; `None` when no constant is available.
    pub theorem_applies: Option<bool>,
    pub notes: Vec<String>,

    pub monotone_descent: bool,
    pub first_violation: Option<usize>,

    #[serde(skip)]
    pub descent_inequality: Vec<bool>,
    pub descent_inequality_holds: bool,
    pub descent_inequality_violations: usize,

    pub increment_bound_violations: usize,

    pub estimated_c: Option<f64>,
    #[serde(skip)]
    pub theorem2_residuals: Vec<Option<f64>>,
    pub ratio_stability: Option<RatioStability>,
    pub output_increment_constant: Option<f64>,

    #[serde(skip)]
    pub error_estimate: Vec<bool>,
    pub error_estimate_holds: bool,

    pub gradient_partial_sum: f64,
    pub summability_bound: Option<f64>,
    pub summability_holds: Option<bool>,

    pub gradient_tail_norm: f64,
    pub tail_converged: bool,
    pub increment_tail_norm: f64,

    pub max_abs_weight: f64,
    pub weights_bounded: bool,
}

impl ConvergenceVerdict {
    /// Monotone descent with vanishing tail gradient.
    pub fn converged(&self) -> bool {
        self.monotone_descent && self.tail_converged
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serialises")
    }
}

/// Checks a trajectory against the convergence theorem. An inadmissible step
/// size is recorded in the verdict rather than returned as an error.
pub fn verify_theorem1(
    topology: Option<&DagTopology>,
    trajectory: &[IterationRecord],
    eta: f64,
    s: f64,
    c_used: Option<f64>,
    options: &VerifyOptions,
) -> Result<ConvergenceVerdict> {
    let tau = s * eta;
    let mut notes = Vec::new();

    let mut first_violation = None;
    for rec in trajectory {
        if let Some(de) = rec.delta_error {
            if de > options.monotone_slack && first_violation.is_none() {
                first_violation = Some(rec.k);
            }
        }
    }

    let descent_inequality: Vec<bool> = trajectory
        .iter()
        .map(|r| check_descent_inequality(r, eta, s))
        .collect();
    let increment_bound_violations = trajectory
        .iter()
        .map(|r| increment_bound_violations(r, eta, s).len())
        .sum();

    let theorem2_residuals = theorem2_ratios(trajectory)?;
    let estimated_c = match estimate_c(trajectory) {
        Ok(c) => Some(c),
        Err(Error::InsufficientData) => None,
        Err(e) => return Err(e),
    };
    let c = c_used.or(estimated_c);

    let (max_eta_value, theorem_applies) = match c {
        Some(c) if c > 0.0 => {
            let bound = max_eta(s, c)?;
            if eta >= bound {
                notes.push(format!(
                    "eta = {eta} is not below (1-s)/(C(s^2+1)) = {bound:e} for C = {c:e}; the theorem makes no claim"
                ));
            }
            (Some(bound), Some(eta < bound))
        }
        _ => {
            notes.push("no positive constant available; step-size precondition not evaluated".into());
            (None, None)
        }
    };

    let coefficient = c.map(|c| -eta + tau + c * (tau * tau + eta * eta));
    let error_estimate: Vec<bool> = trajectory
        .iter()
        .map(|r| match (r.delta_error, coefficient) {
            (Some(de), Some(coef)) => within(de, coef * r.sum_q_sq),
            _ => true,
        })
        .collect();

    let gradient_partial_sum: f64 = trajectory.iter().map(|r| r.sum_q_sq).sum();
    let summability_bound = match (trajectory.first(), trajectory.last(), coefficient) {
        (Some(first), Some(last), Some(coef)) if coef < 0.0 => {
            let final_error = last.error + last.delta_error.unwrap_or(0.0);
            Some((first.error - final_error) / -coef)
        }
        _ => None,
    };
    let summability_holds = summability_bound.map(|b| within(gradient_partial_sum, b));

    let tail = &trajectory[trajectory.len().saturating_sub(options.tail_window)..];
    let gradient_tail_norm = tail.iter().map(|r| r.sum_q_sq.sqrt()).fold(0.0, f64::max);
    let increment_tail_norm = tail.iter().map(|r| r.sum_dv_sq.sqrt()).fold(0.0, f64::max);

    let mid = trajectory.len() / 2;
    let max_weight = |part: &[IterationRecord]| part.iter().map(|r| r.max_abs_weight).fold(0.0, f64::max);
    let first_half_weight = max_weight(&trajectory[..mid]);
    let max_abs_weight = max_weight(trajectory);
    let weights_bounded = mid == 0 || max_weight(&trajectory[mid..]) <= 10.0 * first_half_weight.max(1.0);
    if !weights_bounded {
        notes.push("weights grew by more than 10x between the two halves of the run".into());
    }

    Ok(ConvergenceVerdict {
        iterations: trajectory.len(),
        eta,
        s,
        tau,
        c_used: c,
        max_eta: max_eta_value,
        theorem_applies,
        notes,
        monotone_descent: first_violation.is_none(),
        first_violation,
        descent_inequality_holds: descent_inequality.iter().all(|&b| b),
        descent_inequality_violations: descent_inequality.iter().filter(|&&b| !b).count(),
        descent_inequality,
        increment_bound_violations,
        estimated_c,
        ratio_stability: ratio_stability(trajectory)?,
        theorem2_residuals,
        output_increment_constant: topology.and_then(|t| output_increment_constant(t, trajectory, eta, s)),
        error_estimate_holds: error_estimate.iter().all(|&b| b),
        error_estimate,
        gradient_partial_sum,
        summability_bound,
        summability_holds,
        gradient_tail_norm,
        tail_converged: gradient_tail_norm < options.tail_threshold,
        increment_tail_norm,
        max_abs_weight,
        weights_bounded,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// Renders the trajectory CSV. `meta` pairs become leading `# key=value` lines.
///
/// When `edges` is given, per-edge `q_sq[i-j]` and `dv_sq[i-j]` columns and
/// per-layer `dH_sq[n]` columns follow the fixed ones.
pub fn trajectory_to_csv(
    trajectory: &[IterationRecord],
    meta: &[(&str, String)],
    edges: Option<&[Edge]>,
) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str(CSV_HEADER);
    let layers = trajectory.first().map_or(0, |r| r.layer_dh_sq.len());
    if let Some(edges) = edges {
        for prefix in ["q_sq", "dv_sq"] {
            for e in edges {
                let _ = write!(out, ",{prefix}[{}-{}]", e.from, e.to);
            }
        }
        for n in 0..layers {
            let _ = write!(out, ",dH_sq[{n}]");
        }
    }
    out.push('\n');
    for r in trajectory {
        let _ = write!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{},{:e}",
            r.k,
            r.error,
            r.sum_q_sq,
            r.sum_dv_sq,
            r.sum_dh_sq,
            r.predicted,
            fmt_opt(r.delta_error),
            r.max_abs_weight
        );
        if edges.is_some() {
            for v in r.edge_q_sq.iter().chain(&r.edge_dv_sq).chain(&r.layer_dh_sq) {
                let _ = write!(out, ",{v:e}");
            }
        }
        out.push('\n');
    }
    out
}

/// `# key=value` lines at the head of a trajectory CSV.
pub type CsvMetadata = Vec<(String, String)>;

/// Parses a trajectory CSV into its metadata and records. Per-edge and
/// per-layer vectors are filled when the file carries those columns.
pub fn trajectory_from_csv(text: &str) -> Result<(CsvMetadata, Vec<IterationRecord>)> {
    let mut meta = Vec::new();
    let mut records = Vec::new();
    let mut header: Option<(usize, usize, usize)> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                meta.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        let Some((n_q, n_dv, n_dh)) = header else {
            let extra = line
                .strip_prefix(CSV_HEADER)
                .ok_or_else(|| Error::Parse(format!("unexpected trajectory header {line:?}")))?;
            let names: Vec<&str> = extra.split(',').filter(|c| !c.is_empty()).collect();
            let count = |p: &str| names.iter().filter(|c| c.starts_with(p)).count();
            let counts = (count("q_sq["), count("dv_sq["), count("dH_sq["));
            if counts.0 + counts.1 + counts.2 != names.len() || counts.0 != counts.1 {
                return Err(Error::Parse(format!("unrecognised trajectory columns {extra:?}")));
            }
            header = Some(counts);
            continue;
        };
        let bad = |what: &str| Error::Parse(format!("trajectory line {}: {what}", lineno + 1));
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 + n_q + n_dv + n_dh {
            return Err(bad("wrong number of columns"));
        }
        let num = |i: usize| cols[i].parse::<f64>().map_err(|_| bad(cols[i]));
        let range = |from: usize, len: usize| (from..from + len).map(num).collect::<Result<Vec<f64>>>();
        records.push(IterationRecord {
            k: cols[0].parse().map_err(|_| bad(cols[0]))?,
            error: num(1)?,
            sum_q_sq: num(2)?,
            sum_dv_sq: num(3)?,
            sum_dh_sq: num(4)?,
            predicted: num(5)?,
            delta_error: if cols[6].is_empty() { None } else { Some(num(6)?) },
            max_abs_weight: num(7)?,
            edge_q_sq: range(8, n_q)?,
            edge_dv_sq: range(8 + n_q, n_dv)?,
            layer_dh_sq: range(8 + n_q + n_dv, n_dh)?,
        });
    }
    if header.is_none() {
        return Err(Error::Parse("trajectory CSV has no header".into()));
    }
    Ok((meta, records))
}
