//! Evaluation results and their rendering as text or JSON tables.
//!
//! [`evaluate_columns`] gathers metric and agreement results by calling into
//! [`crate::metrics`] and [`crate::agreement`]. [`Report`] only formats those results:
//! percentages to two decimals, agreement coefficients to three.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::agreement::{
    bootstrap_ci, cohen_kappa, fleiss_kappa, gwet_ac1_multi, gwet_ac1_pairwise, pabak, pairwise_consistency,
    AgreementError, AgreementResult, BootstrapSpec, PassAgreement, RatingMatrix,
};
use crate::corpus::Corpus;
use crate::inference::{ParseRoute, PredictionRecord, RunLedger};
use crate::label::ScreeningLabel;
use crate::metrics::{
    aggregate, build_confusion, format_percent, per_class_metrics, round_half_away, row_normalize, AggregateMetrics,
    ClassMetrics, ConfusionMatrix, MetricsError, RowNormalized,
};

#[derive(Debug, thiserror::Error)]
pub enum EvaluationError {
    #[error("ledger and corpus share no study ids")]
    EmptyIntersection,
    #[error("ledger study id {0:?} is not in the corpus")]
    UnknownStudy(String),
    #[error("prediction column {label} has {found} decisions for {expected} items")]
    ColumnLength {
        label: String,
        found: usize,
        expected: usize,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Agreement(#[from] AgreementError),
    #[error(transparent)]
    Ledger(#[from] crate::inference::LedgerError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteCounts {
    pub digit: usize,
    pub keyword: usize,
    pub fallback: usize,
    /// Fallbacks caused by a failed request rather than an unparseable reply.
    pub request_errors: usize,
}

impl RouteCounts {
    pub fn tally<'a>(records: impl IntoIterator<Item = &'a PredictionRecord>) -> Self {
        let mut c = Self::default();
        for r in records {
            match r.parse_route {
                ParseRoute::Digit => c.digit += 1,
                ParseRoute::Keyword => c.keyword += 1,
                ParseRoute::Fallback => c.fallback += 1,
            }
            if r.error.is_some() {
                c.request_errors += 1;
            }
        }
        c
    }
}

/// One column of model decisions to score against the human labels.
#[derive(Debug, Clone)]
pub struct PredictionColumn {
    pub label: String,
    pub temperature: Option<f64>,
    pub decisions: Vec<ScreeningLabel>,
    pub routes: Option<RouteCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingEvaluation {
    pub label: String,
    pub temperature: Option<f64>,
    pub n: usize,
    pub confusion: ConfusionMatrix,
    /// `[Exclude, Include]`, with F2 as the F-beta column.
    pub per_class: [ClassMetrics; 2],
    pub aggregate: AggregateMetrics,
    pub row_normalized: RowNormalized,
    pub cohen_kappa: AgreementResult,
    pub pabak: AgreementResult,
    pub gwet_ac1: AgreementResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_routes: Option<RouteCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiRater {
    pub raters: Vec<String>,
    pub fleiss_kappa: AgreementResult,
    pub gwet_ac1: AgreementResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub n_items: usize,
    pub settings: Vec<SettingEvaluation>,
    pub consistency: Vec<PassAgreement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multi_rater: Option<MultiRater>,
}

fn with_ci<F>(
    result: AgreementResult,
    statistic: F,
    m: &RatingMatrix,
    bootstrap: Option<&BootstrapSpec>,
) -> Result<AgreementResult, AgreementError>
where
    F: Fn(&RatingMatrix) -> Result<AgreementResult, AgreementError> + Sync,
{
    match bootstrap {
        Some(spec) => Ok(AgreementResult {
            ci: Some(bootstrap_ci(statistic, m, spec)?),
            ..result
        }),
        None => Ok(result),
    }
}

/// Scores each prediction column against `human`. With two or more columns the
/// multi-rater statistics (human plus every column) are added, with bootstrap intervals
/// when `bootstrap` is given.
pub fn evaluate_columns(
    human: &[ScreeningLabel],
    columns: &[PredictionColumn],
    bootstrap: Option<&BootstrapSpec>,
) -> Result<Evaluation, EvaluationError> {
    let n = human.len();
    let mut settings = Vec::with_capacity(columns.len());
    for col in columns {
        if col.decisions.len() != n {
            return Err(EvaluationError::ColumnLength {
                label: col.label.clone(),
                found: col.decisions.len(),
                expected: n,
            });
        }
        let cm = build_confusion(human.iter().copied().zip(col.decisions.iter().copied()))?;
        settings.push(SettingEvaluation {
            label: col.label.clone(),
            temperature: col.temperature,
            n,
            confusion: cm,
            per_class: per_class_metrics(&cm, 2.0),
            aggregate: aggregate(&cm),
            row_normalized: row_normalize(&cm),
            cohen_kappa: cohen_kappa(human, &col.decisions)?,
            pabak: pabak(human, &col.decisions)?,
            gwet_ac1: gwet_ac1_pairwise(human, &col.decisions)?,
            parse_routes: col.routes,
        });
    }

    let multi_rater = if columns.len() >= 2 {
        let mut raters = vec!["human".to_string()];
        raters.extend(columns.iter().map(|c| c.label.clone()));
        let mut data = vec![human.to_vec()];
        data.extend(columns.iter().map(|c| c.decisions.clone()));
        let item_ids = (1..=n).map(|i| format!("item{i}")).collect();
        let m = RatingMatrix::from_named_columns(item_ids, raters.clone(), data)?;
        Some(MultiRater {
            raters,
            fleiss_kappa: with_ci(fleiss_kappa(&m)?, fleiss_kappa, &m, bootstrap)?,
            gwet_ac1: with_ci(gwet_ac1_multi(&m)?, gwet_ac1_multi, &m, bootstrap)?,
        })
    } else {
        None
    };

    Ok(Evaluation {
        run_id: None,
        n_items: n,
        settings,
        consistency: Vec::new(),
        multi_rater,
    })
}

pub fn temperature_label(t: f64) -> String {
    format!("T={t}")
}

/// Item ids, human labels and one column per pass.
pub type LedgerColumns = (Vec<String>, Vec<ScreeningLabel>, Vec<PredictionColumn>);

/// Human labels from `corpus` joined with a completed ledger, in ledger item order.
pub fn ledger_columns(ledger: &RunLedger, corpus: &Corpus) -> Result<LedgerColumns, EvaluationError> {
    ledger.check_complete()?;
    let ids = ledger.item_ids().to_vec();
    let human: Vec<ScreeningLabel> = ids
        .iter()
        .filter_map(|id| corpus.get(id).map(|r| r.human_label))
        .collect();
    if human.is_empty() {
        return Err(EvaluationError::EmptyIntersection);
    }
    if let Some(id) = ids.iter().find(|id| corpus.get(id).is_none()) {
        return Err(EvaluationError::UnknownStudy(id.clone()));
    }
    let columns = ledger
        .passes()
        .into_iter()
        .map(|(t, recs)| PredictionColumn {
            label: temperature_label(t),
            temperature: Some(t),
            decisions: recs.iter().map(|r| r.decision).collect(),
            routes: Some(RouteCounts::tally(recs.iter().copied())),
        })
        .collect();
    Ok((ids, human, columns))
}

/// Full evaluation of a completed ledger: one setting per temperature pass, pass
/// consistency and the multi-rater statistics.
pub fn evaluate_ledger(
    ledger: &RunLedger,
    corpus: &Corpus,
    bootstrap: Option<&BootstrapSpec>,
) -> Result<Evaluation, EvaluationError> {
    let (_, human, columns) = ledger_columns(ledger, corpus)?;
    let mut eval = evaluate_columns(&human, &columns, bootstrap)?;
    eval.run_id = Some(ledger.header.run_id.clone());
    if columns.len() >= 2 {
        eval.consistency = pairwise_consistency(ledger)?;
    }
    Ok(eval)
}

/// Agreement results for an arbitrary rating table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n: usize,
    pub raters: Vec<String>,
    pub pairwise: Vec<PairAgreement>,
    pub multi_rater: MultiRater,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub rater_a: String,
    pub rater_b: String,
    pub cohen_kappa: AgreementResult,
    pub pabak: AgreementResult,
    pub gwet_ac1: AgreementResult,
}

/// Every rater pair plus the all-rater statistics. With bootstrap, each estimate gets an interval.
pub fn agreement_report(
    m: &RatingMatrix,
    bootstrap: Option<&BootstrapSpec>,
) -> Result<AgreementReport, AgreementError> {
    if m.r() < 2 {
        return Err(AgreementError::TooFewRaters(m.r()));
    }
    let mut pairwise = Vec::new();
    for a in 0..m.r() {
        for b in a + 1..m.r() {
            let sub = m.select_raters(&[a, b])?;
            let (x, y) = (sub.column(0), sub.column(1));
            let pair_stat = |f: fn(&[ScreeningLabel], &[ScreeningLabel]) -> Result<AgreementResult, AgreementError>| {
                move |s: &RatingMatrix| f(&s.column(0), &s.column(1))
            };
            pairwise.push(PairAgreement {
                rater_a: m.rater_ids()[a].clone(),
                rater_b: m.rater_ids()[b].clone(),
                cohen_kappa: with_ci(cohen_kappa(&x, &y)?, pair_stat(cohen_kappa), &sub, bootstrap)?,
                pabak: with_ci(pabak(&x, &y)?, pair_stat(pabak), &sub, bootstrap)?,
                gwet_ac1: with_ci(
                    gwet_ac1_pairwise(&x, &y)?,
                    pair_stat(gwet_ac1_pairwise),
                    &sub,
                    bootstrap,
                )?,
            });
        }
    }
    Ok(AgreementReport {
        n: m.n(),
        raters: m.rater_ids().to_vec(),
        pairwise,
        multi_rater: MultiRater {
            raters: m.rater_ids().to_vec(),
            fleiss_kappa: with_ci(fleiss_kappa(m)?, fleiss_kappa, m, bootstrap)?,
            gwet_ac1: with_ci(gwet_ac1_multi(m)?, gwet_ac1_multi, m, bootstrap)?,
        },
    })
}

/// Three-decimal agreement rendering; negative zero prints as `0.000`.
pub fn format_coefficient(x: f64) -> String {
    let s = format!("{:.3}", round_half_away(x, 3));
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

fn format_ci(result: &AgreementResult) -> String {
    match &result.ci {
        Some(ci) => format!("[{}, {}]", format_coefficient(ci.low), format_coefficient(ci.high)),
        None => "-".to_string(),
    }
}

fn format_row_percent(v: Option<[f64; 2]>, j: usize) -> String {
    match v {
        Some(row) => format!("{:.2}", round_half_away(row[j], 2)),
        None => "undefined".to_string(),
    }
}

fn class_name(label: ScreeningLabel) -> &'static str {
    match label {
        ScreeningLabel::Exclude => "Exclude (0)",
        ScreeningLabel::Include => "Include (1)",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallRow {
    #[serde(rename = "Setting")]
    pub setting: String,
    #[serde(rename = "Acc.")]
    pub accuracy: String,
    #[serde(rename = "Bal. Acc.")]
    pub balanced_accuracy: String,
    #[serde(rename = "Macro-F1")]
    pub macro_f1: String,
    #[serde(rename = "Macro-F2")]
    pub macro_f2: String,
    #[serde(rename = "W-F1")]
    pub weighted_f1: String,
    #[serde(rename = "W-F2")]
    pub weighted_f2: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassRow {
    #[serde(rename = "Setting")]
    pub setting: String,
    #[serde(rename = "Class")]
    pub class: String,
    #[serde(rename = "Precision")]
    pub precision: String,
    #[serde(rename = "Recall")]
    pub recall: String,
    #[serde(rename = "F1")]
    pub f1: String,
    #[serde(rename = "Support")]
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRow {
    #[serde(rename = "Setting")]
    pub setting: String,
    #[serde(rename = "True class")]
    pub true_class: String,
    #[serde(rename = "Pred. 0 (%)")]
    pub predicted_exclude: String,
    #[serde(rename = "Pred. 1 (%)")]
    pub predicted_include: String,
    #[serde(rename = "Count")]
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    #[serde(rename = "Setting")]
    pub setting: String,
    #[serde(rename = "Cohen's kappa")]
    pub cohen_kappa: String,
    #[serde(rename = "PABAK")]
    pub pabak: String,
    #[serde(rename = "Gwet AC1")]
    pub gwet_ac1: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    #[serde(rename = "Pair")]
    pub pair: String,
    #[serde(rename = "Cohen's kappa")]
    pub kappa: String,
    #[serde(rename = "p_o")]
    pub p_o: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticRow {
    #[serde(rename = "Raters")]
    pub raters: String,
    #[serde(rename = "Statistic")]
    pub statistic: String,
    #[serde(rename = "Estimate")]
    pub estimate: String,
    #[serde(rename = "CI")]
    pub ci: String,
    #[serde(rename = "p_o")]
    pub p_o: String,
    #[serde(rename = "p_e")]
    pub p_e: String,
    #[serde(rename = "Degenerate")]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRow {
    #[serde(rename = "Setting")]
    pub setting: String,
    #[serde(rename = "Digit")]
    pub digit: usize,
    #[serde(rename = "Keyword")]
    pub keyword: usize,
    #[serde(rename = "Fallback")]
    pub fallback: usize,
    #[serde(rename = "Request errors")]
    pub request_errors: usize,
}

/// Rendered tables. Every cell is already a formatted string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub n_items: usize,
    pub overall: Vec<OverallRow>,
    pub per_class: Vec<PerClassRow>,
    pub confusion: Vec<ConfusionRow>,
    pub agreement: Vec<AgreementRow>,
    pub consistency: Vec<ConsistencyRow>,
    pub multi_rater: Vec<StatisticRow>,
    pub parse_routes: Vec<RouteRow>,
}

fn statistic_row(raters: &str, r: &AgreementResult) -> StatisticRow {
    StatisticRow {
        raters: raters.to_string(),
        statistic: r.statistic.name().to_string(),
        estimate: format_coefficient(r.estimate),
        ci: format_ci(r),
        p_o: format_coefficient(r.p_o),
        p_e: format_coefficient(r.p_e),
        degenerate: r.degenerate,
    }
}

fn multi_rater_rows(m: &MultiRater) -> Vec<StatisticRow> {
    let raters = m.raters.join(" + ");
    vec![
        statistic_row(&raters, &m.fleiss_kappa),
        statistic_row(&raters, &m.gwet_ac1),
    ]
}

impl Report {
    pub fn from_evaluation(eval: &Evaluation) -> Self {
        let mut report = Report {
            run_id: eval.run_id.clone(),
            n_items: eval.n_items,
            overall: Vec::new(),
            per_class: Vec::new(),
            confusion: Vec::new(),
            agreement: Vec::new(),
            consistency: Vec::new(),
            multi_rater: Vec::new(),
            parse_routes: Vec::new(),
        };
        for s in &eval.settings {
            let a = &s.aggregate;
            report.overall.push(OverallRow {
                setting: s.label.clone(),
                accuracy: format_percent(a.accuracy),
                balanced_accuracy: format_percent(a.balanced_accuracy),
                macro_f1: format_percent(a.macro_f1),
                macro_f2: format_percent(a.macro_f2),
                weighted_f1: format_percent(a.weighted_f1),
                weighted_f2: format_percent(a.weighted_f2),
            });
            for c in &s.per_class {
                report.per_class.push(PerClassRow {
                    setting: s.label.clone(),
                    class: class_name(c.label).to_string(),
                    precision: format_percent(c.precision),
                    recall: format_percent(c.recall),
                    f1: format_percent(c.f1),
                    support: c.support,
                });
            }
            let cm = &s.confusion;
            for (label, row, count) in [
                (ScreeningLabel::Exclude, s.row_normalized.true_exclude, cm.tn + cm.fp),
                (ScreeningLabel::Include, s.row_normalized.true_include, cm.tp + cm.fn_),
            ] {
                report.confusion.push(ConfusionRow {
                    setting: s.label.clone(),
                    true_class: class_name(label).to_string(),
                    predicted_exclude: format_row_percent(row, 0),
                    predicted_include: format_row_percent(row, 1),
                    count,
                });
            }
            report.agreement.push(AgreementRow {
                setting: s.label.clone(),
                cohen_kappa: format_coefficient(s.cohen_kappa.estimate),
                pabak: format_coefficient(s.pabak.estimate),
                gwet_ac1: format_coefficient(s.gwet_ac1.estimate),
            });
            if let Some(r) = s.parse_routes {
                report.parse_routes.push(RouteRow {
                    setting: s.label.clone(),
                    digit: r.digit,
                    keyword: r.keyword,
                    fallback: r.fallback,
                    request_errors: r.request_errors,
                });
            }
        }
        for c in &eval.consistency {
            report.consistency.push(ConsistencyRow {
                pair: format!(
                    "{} vs {}",
                    temperature_label(c.temperature_a),
                    temperature_label(c.temperature_b)
                ),
                kappa: format_coefficient(c.kappa.estimate),
                p_o: format_coefficient(c.kappa.p_o),
            });
        }
        if let Some(m) = &eval.multi_rater {
            report.multi_rater = multi_rater_rows(m);
        }
        report
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report rows serialize");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(id) = &self.run_id {
            let _ = writeln!(out, "Run {id}");
        }
        let _ = writeln!(out, "Items: {}", self.n_items);
        section(&mut out, "Overall performance (%)", &self.overall);
        section(&mut out, "Per-class performance (%)", &self.per_class);
        section(&mut out, "Confusion matrix (% of true class)", &self.confusion);
        section(&mut out, "Agreement with human labels", &self.agreement);
        section(&mut out, "Pass consistency", &self.consistency);
        section(&mut out, "Multi-rater agreement", &self.multi_rater);
        section(&mut out, "Parse routes", &self.parse_routes);
        out
    }
}

/// Rendered [`AgreementReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementTables {
    pub n: usize,
    pub pairwise: Vec<StatisticRow>,
    pub multi_rater: Vec<StatisticRow>,
}

impl AgreementTables {
    pub fn from_report(r: &AgreementReport) -> Self {
        let mut pairwise = Vec::new();
        for p in &r.pairwise {
            let raters = format!("{} vs {}", p.rater_a, p.rater_b);
            for res in [&p.cohen_kappa, &p.pabak, &p.gwet_ac1] {
                pairwise.push(statistic_row(&raters, res));
            }
        }
        Self {
            n: r.n,
            pairwise,
            multi_rater: multi_rater_rows(&r.multi_rater),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report rows serialize");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Items: {}", self.n);
        section(&mut out, "Pairwise agreement", &self.pairwise);
        section(&mut out, "Multi-rater agreement", &self.multi_rater);
        out
    }
}

/// Appends an aligned table whose header comes from the rows' serialized field names.
fn section<T: Serialize>(out: &mut String, title: &str, rows: &[T]) {
    if rows.is_empty() {
        return;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("report rows serialize");
    }
    let bytes = w.into_inner().expect("in-memory writer");
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(bytes.as_slice());
    let mut table: Vec<Vec<String>> = rdr
        .records()
        .map(|r| r.expect("csv round trip").iter().map(str::to_string).collect())
        .collect();
    let header = table.remove(0);
    let cells = table;
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cols: &[String]| {
        let parts: Vec<String> = cols
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (c, w))| if j == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let _ = writeln!(out, "\n{title}");
    let _ = writeln!(out, "{}", line(&header));
    let rule: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
    let _ = writeln!(out, "{}", "-".repeat(rule));
    for row in &cells {
        let _ = writeln!(out, "{}", line(row));
    }
}
