use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::score::ScoreTriple;
use crate::convo::Speaker;
use crate::tracker::ResponseCategory;

/// Ground truth and generated reply at one trigger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub conversation_id: String,
    pub trigger_index: usize,
    pub speaker: Speaker,
    /// Category of the ground-truth reply; `None` when it is silence.
    pub category: Option<ResponseCategory>,
    pub gt_text: String,
    pub gen_text: String,
    /// Present exactly when both texts are non-empty.
    pub scores: Option<ScoreTriple>,
    pub correct: Option<bool>,
    pub latency_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category: ResponseCategory,
    /// Triggers whose ground truth falls in this category.
    pub support: usize,
    pub correct: usize,
    pub recall: Option<f64>,
    pub mean_similarity: Option<f64>,
    pub mean_bertscore_f1: Option<f64>,
    pub mean_entailment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub include_miscellaneous: bool,
    /// Non-empty ground-truth replies counted.
    pub support: usize,
    /// Non-empty generated replies counted.
    pub generated: usize,
    pub correct: usize,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub backend: String,
    pub scorer: String,
    pub conversations: usize,
    pub triggers: usize,
    pub sim_threshold: f64,
    pub ent_threshold: f64,
    pub categories: Vec<CategoryMetrics>,
    /// Triggers where the ground truth stays silent.
    pub gt_empty: usize,
    pub true_negatives: usize,
    pub tnr: Option<f64>,
    pub overall: OverallMetrics,
    pub mean_latency_secs: Option<f64>,
}

impl MetricsReport {
    pub fn category(&self, c: ResponseCategory) -> &CategoryMetrics {
        self.categories.iter().find(|m| m.category == c).expect("report covers every category")
    }
}

/// Harmonic mean; zero when both inputs are zero.
pub fn f_score(recall: f64, precision: f64) -> f64 {
    if recall + precision == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Labels for the report header.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportLabels {
    pub backend: String,
    pub scorer: String,
    pub conversations: usize,
    pub sim_threshold: f64,
    pub ent_threshold: f64,
    pub include_miscellaneous: bool,
}

/// Aggregates per-trigger records into the report.
pub fn aggregate(records: &[EvalRecord], labels: &ReportLabels) -> MetricsReport {
    let categories = ResponseCategory::ALL
        .into_iter()
        .map(|cat| {
            let rows: Vec<&EvalRecord> = records.iter().filter(|r| r.category == Some(cat)).collect();
            let scored = || rows.iter().filter_map(|r| r.scores);
            let correct = rows.iter().filter(|r| r.correct == Some(true)).count();
            CategoryMetrics {
                category: cat,
                support: rows.len(),
                correct,
                recall: ratio(correct, rows.len()),
                mean_similarity: mean(scored().map(|s| s.similarity)),
                mean_bertscore_f1: mean(scored().filter_map(|s| s.bertscore_f1)),
                mean_entailment: mean(scored().filter_map(|s| s.entailment)),
            }
        })
        .collect::<Vec<_>>();

    let counted = |r: &&EvalRecord| labels.include_miscellaneous || r.category != Some(ResponseCategory::Miscellaneous);
    let support = records.iter().filter(counted).filter(|r| !r.gt_text.is_empty()).count();
    let generated = records.iter().filter(counted).filter(|r| !r.gen_text.is_empty()).count();
    let correct = records.iter().filter(counted).filter(|r| r.correct == Some(true)).count();
    let recall = ratio(correct, support);
    let precision = ratio(correct, generated);
    let f = match (recall, precision) {
        (Some(r), Some(p)) => Some(f_score(r, p)),
        _ => None,
    };

    let gt_empty = records.iter().filter(|r| r.gt_text.is_empty()).count();
    let true_negatives = records.iter().filter(|r| r.gt_text.is_empty() && r.gen_text.is_empty()).count();

    MetricsReport {
        backend: labels.backend.clone(),
        scorer: labels.scorer.clone(),
        conversations: labels.conversations,
        triggers: records.len(),
        sim_threshold: labels.sim_threshold,
        ent_threshold: labels.ent_threshold,
        categories,
        gt_empty,
        true_negatives,
        tnr: ratio(true_negatives, gt_empty),
        overall: OverallMetrics {
            include_miscellaneous: labels.include_miscellaneous,
            support,
            generated,
            correct,
            recall,
            precision,
            f_score: f,
        },
        mean_latency_secs: mean(records.iter().map(|r| r.latency_secs)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Structured,
    Table,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" | "structured" => Ok(ReportFormat::Structured),
            "table" => Ok(ReportFormat::Table),
            other => Err(format!("unknown report format {other:?} (expected json or table)")),
        }
    }
}

pub fn render_report(r: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Structured => serde_json::to_string_pretty(r).expect("report serializes") + "\n",
        ReportFormat::Table => render_table(r),
    }
}

pub fn parse_report(json: &str) -> Result<MetricsReport, serde_json::Error> {
    serde_json::from_str(json)
}

fn cell(v: Option<f64>, width: usize) -> String {
    match v {
        Some(x) => format!("{x:>width$.2}"),
        None => format!("{:>width$}", "-"),
    }
}

fn render_table(r: &MetricsReport) -> String {
    const CAT_W: usize = 20;
    let name_w = r.backend.chars().count().max(7);
    let mut out = String::new();
    let _ = write!(out, "{:name_w$} |", "");
    for c in &r.categories {
        let _ = write!(out, " {:^CAT_W$} |", c.category.title());
    }
    let _ = writeln!(out, " {:^5} | {:^26}", "", "Overall");
    let _ = write!(out, "{:name_w$} |", "Model");
    for _ in &r.categories {
        let _ = write!(out, " {:>6}{:>7}{:>7} |", "Rcl", "Sbrt", "Ent");
    }
    let _ = writeln!(out, " {:>5} | {:>6}{:>6}{:>6}{:>8}", "TNR", "Rcl", "Prec", "FSc", "Tm");
    let _ = write!(out, "{:name_w$} |", r.backend);
    for c in &r.categories {
        let _ = write!(out, " {}{}{} |", cell(c.recall, 6), cell(c.mean_similarity, 7), cell(c.mean_entailment, 7));
    }
    let _ = writeln!(
        out,
        " {} | {}{}{}{}",
        cell(r.tnr, 5),
        cell(r.overall.recall, 6),
        cell(r.overall.precision, 6),
        cell(r.overall.f_score, 6),
        cell(r.mean_latency_secs, 8),
    );
    let support: Vec<String> =
        r.categories.iter().map(|c| format!("{} {}", c.category.title().to_lowercase(), c.support)).collect();
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "Support: {}; silent ground-truth turns {}. {} conversations, {} triggers.",
        support.join(", "),
        r.gt_empty,
        r.conversations,
        r.triggers
    );
    let misc = if r.overall.include_miscellaneous { "including" } else { "excluding" };
    let _ = writeln!(out, "Overall recall and precision are micro-averages over all turns, {misc} miscellaneous.");
    let _ = writeln!(
        out,
        "Correct when similarity > {:.2} or entailment > {:.2}. Scorer: {}. Tm is mean seconds per trigger.",
        r.sim_threshold, r.ent_threshold, r.scorer
    );
    out
}
