//! Prediction records and evaluation reports.

use c2f_core::bench::{CaseScore, SplitReport, Summary};
use c2f_core::components::Normality;
use c2f_core::pipeline::CaseResult;
use serde::{Deserialize, Serialize};

/// Machine-readable record written next to a prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub verdict: String,
    pub n_kidney: usize,
    pub corrected: bool,
    pub flags: Vec<String>,
    pub coarse_voxels: usize,
    pub guidance_voxels: usize,
    pub fine_voxels: usize,
}

impl CaseRecord {
    pub fn new(case_id: &str, r: &CaseResult) -> Self {
        CaseRecord {
            case_id: case_id.to_string(),
            verdict: r.verdict.verdict.to_string(),
            n_kidney: r.verdict.n_kidney,
            corrected: r.corrected,
            flags: r.flags.iter().map(|f| f.to_string()).collect(),
            coarse_voxels: r.coarse_mask.count_foreground(),
            guidance_voxels: r.guidance.count_foreground(),
            fine_voxels: r.fine_mask.count_foreground(),
        }
    }

    pub fn normality(&self) -> Option<Normality> {
        match self.verdict.as_str() {
            "normal" => Some(Normality::Normal),
            "abnormal" => Some(Normality::Abnormal),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub case_id: String,
    pub coarse_dsc: f64,
    pub fine_dsc: f64,
    pub verdict: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub case_id: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cases: Vec<ScoreRow>,
    pub failures: Vec<FailureRow>,
    pub coarse: Option<SummaryRow>,
    pub fine: Option<SummaryRow>,
}

fn row(s: &CaseScore) -> ScoreRow {
    ScoreRow {
        case_id: s.id.clone(),
        coarse_dsc: s.coarse_dsc,
        fine_dsc: s.fine_dsc,
        verdict: s.verdict.to_string(),
    }
}

fn summary(s: &Summary) -> SummaryRow {
    SummaryRow {
        mean: s.mean,
        std: s.std,
        max: s.max,
        min: s.min,
    }
}

impl From<&SplitReport> for EvalReport {
    fn from(r: &SplitReport) -> Self {
        EvalReport {
            cases: r.scores.iter().map(row).collect(),
            failures: r
                .failures
                .iter()
                .map(|(id, e)| FailureRow {
                    case_id: id.clone(),
                    error: e.clone(),
                })
                .collect(),
            coarse: r.coarse.as_ref().map(summary),
            fine: r.fine.as_ref().map(summary),
        }
    }
}

impl EvalReport {
    /// One `case_id coarse_dsc fine_dsc verdict` line per case, failures as
    /// comments, then the per-stage summary table in percent.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# case_id coarse_dsc fine_dsc verdict\n");
        for c in &self.cases {
            out += &format!(
                "{} {:.6} {:.6} {}\n",
                c.case_id, c.coarse_dsc, c.fine_dsc, c.verdict
            );
        }
        for f in &self.failures {
            out += &format!("# failed {}: {}\n", f.case_id, f.error.replace('\n', " "));
        }
        out += &format!(
            "\n{:<8}{:<20}{:<10}{}\n",
            "Stage", "Mean ± STD [%]", "Max [%]", "Min [%]"
        );
        for (name, s) in [("Coarse", &self.coarse), ("Fine", &self.fine)] {
            match s {
                Some(s) => {
                    let mean_std = format!("{:.2} ± {:.2}", 100.0 * s.mean, 100.0 * s.std);
                    out += &format!(
                        "{name:<8}{mean_std:<20}{:<10.2}{:.2}\n",
                        100.0 * s.max,
                        100.0 * s.min
                    );
                }
                None => out += &format!("{name:<8}n/a\n"),
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}
