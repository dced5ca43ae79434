//! Run reports: everything a command produced, serialized as deterministic
//! JSON (sorted keys, floats trimmed to 12 significant digits) so identical
//! runs emit identical bytes. Reports embed their configuration and seed,
//! and violation witnesses replay from the parsed report alone.

use serde::{Deserialize, Serialize};

use crate::attack::AttackResult;
use crate::audit::AuditFinding;
use crate::axioms::AxiomReport;
use crate::dataset::Params;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Auto,
    Hidden,
    NonHidden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    MinL2,
}

/// Echo of how a run was configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub p: f64,
    pub q: f64,
    pub tolerance: f64,
    pub seed: u64,
    pub setting: Setting,
    pub tie_break: TieBreak,
}

impl RunConfig {
    pub fn new(command: &str, params: &Params, setting: Setting) -> Self {
        Self {
            command: command.to_string(),
            p: params.p,
            q: params.q,
            tolerance: params.tolerance,
            seed: params.seed,
            setting,
            tie_break: TieBreak::MinL2,
        }
    }
}

/// One cell's fitted value and residual, identified by the input ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub paper_id: String,
    pub reviewer_id: String,
    pub recommendation: f64,
    pub fitted: f64,
    pub residual: f64,
}

/// Aggregate output for one paper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperScore {
    pub paper_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Report {
    pub config: Option<RunConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub solutions: Vec<PaperScore>,
    pub erm_loss: Option<f64>,
    pub aggregation_loss: Option<f64>,
    /// Per-cell fits, input order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fitted: Vec<CellRecord>,
    /// Same cells ranked by |recommendation − fitted| descending: the
    /// flag list for reviews whose recommendation the fit had to bend most.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub residual_ranking: Vec<CellRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub axiom_reports: Vec<AxiomReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attack_results: Vec<AttackResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub audit_findings: Vec<AuditFinding>,
    /// (ε, score gap) pairs from continuity probes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub continuity_gaps: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(config: RunConfig) -> Self {
        Self {
            config: Some(config),
            ..Self::default()
        }
    }

    /// Fills `fitted`, `residual_ranking`, `solutions`, and both losses
    /// from a pipeline run.
    pub fn with_pipeline(
        mut self,
        ds: &crate::dataset::ReviewDataset,
        paper_ids: &[String],
        reviewer_ids: &[String],
        fitted: &crate::solver::FittedValues,
        solution: &crate::solver::Solution,
    ) -> Self {
        self.solutions = solution
            .scores
            .iter()
            .enumerate()
            .map(|(a, &score)| PaperScore {
                paper_id: paper_ids[a].clone(),
                score,
            })
            .collect();
        self.erm_loss = Some(solution.erm_loss);
        self.aggregation_loss = Some(solution.aggregation_loss);
        self.fitted = ds
            .cell_ids()
            .map(|(i, a)| {
                let rec = ds.recommendation(i, a);
                let fit = fitted.value(i, a);
                CellRecord {
                    paper_id: paper_ids[a].clone(),
                    reviewer_id: reviewer_ids[i].clone(),
                    recommendation: rec,
                    fitted: fit,
                    residual: rec - fit,
                }
            })
            .collect();
        let mut ranking = self.fitted.clone();
        ranking.sort_by(|x, y| {
            y.residual
                .abs()
                .partial_cmp(&x.residual.abs())
                .unwrap()
                .then_with(|| x.paper_id.cmp(&y.paper_id))
                .then_with(|| x.reviewer_id.cmp(&y.reviewer_id))
        });
        self.residual_ranking = ranking;
        self
    }

    /// True when the report documents a violation or a successful attack —
    /// the machine-checkable signal behind exit code 2.
    pub fn found_violation(&self) -> bool {
        self.axiom_reports
            .iter()
            .any(|r| r.verdict == crate::axioms::Verdict::Violated)
            || self.attack_results.iter().any(|a| a.gain > 0.0)
            || !self.audit_findings.is_empty()
    }
}

/// Serializes with sorted keys and floats rounded to 12 significant digits;
/// byte-identical across runs for identical inputs.
pub fn to_deterministic_json(report: &Report) -> Result<String, serde_json::Error> {
    let mut value = serde_json::to_value(report)?;
    round_floats(&mut value);
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

pub fn from_json(text: &str) -> Result<Report, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn emit_report(report: &Report, path: &std::path::Path) -> Result<(), crate::io::IoError> {
    let text = to_deterministic_json(report).map_err(crate::io::IoError::Json)?;
    std::fs::write(path, text).map_err(|source| crate::io::IoError::Read {
        path: path.display().to_string(),
        source,
    })
}

/// Per-paper solution CSV (`paper_id,score`).
pub fn solutions_csv(report: &Report) -> String {
    let mut out = String::from("paper_id,score\n");
    for s in &report.solutions {
        out.push_str(&format!("{},{}\n", s.paper_id, round_sig(s.score, 12)));
    }
    out
}

/// Per-cell residual CSV ranked by |residual| descending.
pub fn residuals_csv(report: &Report) -> String {
    let mut out = String::from("paper_id,reviewer_id,recommendation,fitted,residual\n");
    for c in &report.residual_ranking {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.paper_id,
            c.reviewer_id,
            round_sig(c.recommendation, 12),
            round_sig(c.fitted, 12),
            round_sig(c.residual, 12)
        ));
    }
    out
}

fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(digits - 1 - mag);
    (x * factor).round() / factor
}

fn round_floats(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Number(n) => {
            if let Some(x) = n.as_f64() {
                if n.is_f64() {
                    if let Some(rounded) = serde_json::Number::from_f64(round_sig(x, 12)) {
                        *n = rounded;
                    }
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_floats),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axioms::{check_consensus, replay, AxiomMode, Verdict};
    use crate::instances;
    use crate::solver::aggregate;

    fn staircase_report() -> Report {
        let ds = instances::consensus_counterexample();
        let params = Params::new(1.0, 1.0).unwrap();
        let (fitted, solution) = aggregate(&ds, &params).unwrap();
        let ids = (
            vec!["a".to_string(), "b".to_string()],
            vec!["r1".to_string(), "r2".to_string()],
        );
        let mut report = Report::new(RunConfig::new("aggregate", &params, Setting::Auto))
            .with_pipeline(&ds, &ids.0, &ids.1, &fitted, &solution);
        report.axiom_reports =
            vec![check_consensus(&ds, &params, AxiomMode::Plain).unwrap()];
        report
    }

    #[test]
    fn identical_runs_serialize_identically() {
        let a = to_deterministic_json(&staircase_report()).unwrap();
        let b = to_deterministic_json(&staircase_report()).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("residual_ranking"));
    }

    #[test]
    fn violation_witness_roundtrips_and_replays() {
        let report = staircase_report();
        assert!(report.found_violation());
        let json = to_deterministic_json(&report).unwrap();
        let parsed = from_json(&json).unwrap();
        let witness = parsed.axiom_reports[0].witness.as_ref().unwrap();
        assert_eq!(replay(witness).unwrap(), Verdict::Violated);
    }

    #[test]
    fn residual_ranking_is_sorted_descending() {
        let report = staircase_report();
        let residuals: Vec<f64> = report
            .residual_ranking
            .iter()
            .map(|c| c.residual.abs())
            .collect();
        for w in residuals.windows(2) {
            assert!(w[0] >= w[1]);
        }
        // the bent cell is reviewer r1 on paper b (2 fitted as 1)
        assert_eq!(report.residual_ranking[0].paper_id, "b");
        assert_eq!(report.residual_ranking[0].reviewer_id, "r1");
    }

    #[test]
    fn csv_exports_are_stable() {
        let report = staircase_report();
        assert_eq!(
            solutions_csv(&report),
            "paper_id,score\na,1\nb,1\n"
        );
        let r = residuals_csv(&report);
        assert!(r.starts_with("paper_id,reviewer_id,"));
        assert_eq!(r.lines().count(), 5);
    }
}
