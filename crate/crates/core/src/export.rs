//! Shared file formats: distribution, trajectory, and condensation-report
//! CSV. Numbers are printed with 17 significant digits so files round-trip
//! through f64 exactly and byte-identical reruns are guaranteed.

use thiserror::Error;

use crate::condensation::CondensationReport;
use crate::gillespie::Trajectory;
use crate::oracle::ExactDistribution;
use crate::product_form::JOINT_STATE_CAP;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("joint CSV needs {states} rows, cap is {cap}")]
    TooManyRows { states: u128, cap: u128 },
    #[error("malformed CSV at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// `species,count,probability` rows for the given per-species marginals.
pub fn marginal_csv(species: &[String], marginals: &[Vec<f64>]) -> String {
    let mut out = String::from("species,count,probability\n");
    for (name, marginal) in species.iter().zip(marginals) {
        for (count, &p) in marginal.iter().enumerate() {
            out.push_str(&format!("{name},{count},{}\n", fmt(p)));
        }
    }
    out
}

/// `state_index,x_1,...,x_n,probability` over the lexicographic state list.
pub fn joint_csv(dist: &ExactDistribution) -> Result<String, ExportError> {
    if dist.states.len() as u128 > JOINT_STATE_CAP {
        return Err(ExportError::TooManyRows {
            states: dist.states.len() as u128,
            cap: JOINT_STATE_CAP,
        });
    }
    let n = dist.states.first().map_or(0, |s| s.len());
    let mut out = String::from("state_index");
    for i in 1..=n {
        out.push_str(&format!(",x_{i}"));
    }
    out.push_str(",probability\n");
    for (index, (state, &p)) in dist.states.iter().zip(&dist.probs).enumerate() {
        out.push_str(&index.to_string());
        for &x in state {
            out.push_str(&format!(",{x}"));
        }
        out.push(',');
        out.push_str(&fmt(p));
        out.push('\n');
    }
    Ok(out)
}

/// Parse the joint CSV format back into a distribution.
pub fn parse_joint_csv(text: &str) -> Result<ExactDistribution, ExportError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ExportError::Malformed {
        line: 1,
        reason: "empty file".into(),
    })?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.first() != Some(&"state_index") || columns.last() != Some(&"probability") {
        return Err(ExportError::Malformed {
            line: 1,
            reason: "expected header state_index,x_1,...,probability".into(),
        });
    }
    let n = columns.len() - 2;
    let mut states = Vec::new();
    let mut probs = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + 2 {
            return Err(ExportError::Malformed {
                line: idx + 1,
                reason: format!("expected {} fields, got {}", n + 2, fields.len()),
            });
        }
        let mut state = Vec::with_capacity(n);
        for f in &fields[1..=n] {
            state.push(f.parse::<u32>().map_err(|e| ExportError::Malformed {
                line: idx + 1,
                reason: e.to_string(),
            })?);
        }
        probs.push(
            fields[n + 1]
                .parse::<f64>()
                .map_err(|e| ExportError::Malformed {
                    line: idx + 1,
                    reason: e.to_string(),
                })?,
        );
        states.push(state);
    }
    let total = states.first().map_or(0, |s| s.iter().sum());
    Ok(ExactDistribution {
        total,
        states,
        probs,
    })
}

/// `time,x_1,...,x_n` rows, starting with the initial state at time zero.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.states.first().map_or(0, |s| s.len());
    let mut out = String::from("time");
    for i in 1..=n {
        out.push_str(&format!(",x_{i}"));
    }
    out.push('\n');
    for (t, state) in traj.times.iter().zip(&traj.states) {
        out.push_str(&fmt(*t));
        for &x in state {
            out.push_str(&format!(",{x}"));
        }
        out.push('\n');
    }
    out
}

/// Condensation report: a `#`-prefixed JSON header line with the regime
/// metadata, then `N,p_exact_max,p_within_K,p_theta,mean_fraction,zn_over_kf`
/// rows.
pub fn condensation_csv(report: &CondensationReport) -> String {
    let header = serde_json::json!({
        "regime": report.regime,
        "maximal_set": report.maximal_set,
        "k": report.k,
        "theta": report.theta,
        "K": report.window,
        "target": report.target,
    });
    let mut out = format!("# {header}\n");
    out.push_str("N,p_exact_max,p_within_K,p_theta,mean_fraction,zn_over_kf\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.total,
            fmt(row.p_exact_max),
            fmt(row.p_within_k),
            fmt(row.p_theta),
            fmt(row.mean_fraction),
            row.zn_over_kf.map_or(String::from(""), fmt)
        ));
    }
    out
}
