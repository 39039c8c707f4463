//! Summaries, advice, histogram series and the text/CSV/JSON renderings.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::catalog::{Catalog, CatalogNode, NodeKind};
use crate::scoring::{display, int, priority_of, Predicate, Rational, ScoreReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("report was produced for catalog {report}, not {catalog}")]
    CatalogMismatch { report: String, catalog: String },
    #[error("histograms are only available at domain or control level, not `{0}`")]
    UnsupportedLevel(NodeKind),
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    /// Controls whose priority is at least this value are flagged.
    pub flag_threshold: Rational,
    /// How many strongest/weakest domains the narrative names.
    pub top_k: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            flag_threshold: int(2),
            top_k: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankedNode {
    pub node_id: String,
    pub label: String,
    #[serde(serialize_with = "ser_display")]
    pub achievement: Rational,
    #[serde(serialize_with = "ser_display")]
    pub priority: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Advice {
    pub strongest_domains: Vec<RankedNode>,
    pub weakest_domains: Vec<RankedNode>,
    pub flagged_controls: Vec<RankedNode>,
    #[serde(serialize_with = "ser_display")]
    pub flag_threshold: Rational,
    pub narrative: String,
}

/// The four summary features: grade out of 4, percentage, predicate and advice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Summary {
    #[serde(serialize_with = "ser_display_opt")]
    pub grade: Option<Rational>,
    #[serde(serialize_with = "ser_display_opt")]
    pub percentage: Option<Rational>,
    pub predicate: Option<Predicate>,
    pub complete: bool,
    pub advice: Advice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Bar {
    pub node_id: String,
    pub label: String,
    #[serde(serialize_with = "ser_display_opt")]
    pub achievement: Option<Rational>,
    #[serde(serialize_with = "ser_display_opt")]
    pub priority: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HistogramSeries {
    pub level: NodeKind,
    pub bars: Vec<Bar>,
}

fn ser_display<S: serde::Serializer>(v: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&display(v))
}

fn ser_display_opt<S: serde::Serializer>(v: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.serialize_str(&display(v)),
        None => s.serialize_none(),
    }
}

fn check_same_catalog(report: &ScoreReport, catalog: &Catalog) -> Result<(), ReportError> {
    let ids: HashSet<&str> = catalog.iter().map(|n| n.id.as_str()).collect();
    let same_nodes = report.per_node.len() == ids.len()
        && report.per_node.keys().all(|k| ids.contains(k.as_str()));
    if report.catalog != catalog.catalog_ref() || !same_nodes {
        return Err(ReportError::CatalogMismatch {
            report: report.catalog.to_string(),
            catalog: catalog.catalog_ref().to_string(),
        });
    }
    Ok(())
}

fn ranked(report: &ScoreReport, nodes: &[&CatalogNode]) -> Vec<RankedNode> {
    nodes
        .iter()
        .filter_map(|n| {
            let achievement = report.achievement(&n.id)?.clone();
            Some(RankedNode {
                node_id: n.id.clone(),
                label: n.name.clone(),
                priority: priority_of(&achievement).expect("achievement within scale"),
                achievement,
            })
        })
        .collect()
}

// Stable sorts keep catalog document order among ties.
fn by_priority_desc(a: &RankedNode, b: &RankedNode) -> Ordering {
    b.priority.cmp(&a.priority)
}

fn by_achievement_desc(a: &RankedNode, b: &RankedNode) -> Ordering {
    b.achievement.cmp(&a.achievement)
}

pub fn summarize(
    report: &ScoreReport,
    catalog: &Catalog,
    opts: &ReportOptions,
) -> Result<Summary, ReportError> {
    check_same_catalog(report, catalog)?;

    let domains = ranked(report, &catalog.nodes_of_kind(NodeKind::Domain));
    let mut strongest = domains.clone();
    strongest.sort_by(by_achievement_desc);
    let mut weakest = domains;
    weakest.sort_by(by_priority_desc);

    let mut flagged: Vec<_> = ranked(report, &catalog.nodes_of_kind(NodeKind::Control))
        .into_iter()
        .filter(|c| c.priority >= opts.flag_threshold)
        .collect();
    flagged.sort_by(by_priority_desc);

    let narrative = narrative(report, &strongest, &weakest, &flagged, opts);
    Ok(Summary {
        grade: report.grade().cloned(),
        percentage: report.percentage(),
        predicate: report.predicate(),
        complete: report.complete,
        advice: Advice {
            strongest_domains: strongest,
            weakest_domains: weakest,
            flagged_controls: flagged,
            flag_threshold: opts.flag_threshold.clone(),
            narrative,
        },
    })
}

fn name_list(nodes: &[RankedNode], value: impl Fn(&RankedNode) -> String) -> String {
    nodes
        .iter()
        .map(|n| format!("{} ({})", n.label, value(n)))
        .collect::<Vec<_>>()
        .join(", ")
}

fn narrative(
    report: &ScoreReport,
    strongest: &[RankedNode],
    weakest: &[RankedNode],
    flagged: &[RankedNode],
    opts: &ReportOptions,
) -> String {
    let (Some(grade), Some(pct), Some(pred)) =
        (report.grade(), report.percentage(), report.predicate())
    else {
        return "No assessment issues have been scored yet.".to_string();
    };

    let mut lines = vec![format!(
        "Overall readiness is {} out of 4 ({}%), rated {}.",
        display(grade),
        display(&pct),
        pred
    )];
    if !report.complete {
        lines.push(format!(
            "This is a provisional result based on {} of {} assessment issues.",
            report.overall.scored_leaf_count, report.overall.total_leaf_count
        ));
    }

    let top: Vec<_> = strongest.iter().take(opts.top_k).cloned().collect();
    if !top.is_empty() {
        lines.push(format!(
            "Strongest areas: {}.",
            name_list(&top, |n| display(&n.achievement))
        ));
    }

    let zero = int(0);
    let weak: Vec<_> = weakest
        .iter()
        .filter(|n| n.priority > zero)
        .take(opts.top_k)
        .cloned()
        .collect();
    if weak.is_empty() {
        lines.push("No weaknesses: every assessed domain is at the ideal level.".to_string());
    } else {
        lines.push(format!(
            "Weakest areas, highest priority for improvement: {}.",
            name_list(&weak, |n| format!("priority {}", display(&n.priority)))
        ));
    }

    if flagged.is_empty() {
        lines.push(format!(
            "No control has a priority of {} or more.",
            display(&opts.flag_threshold)
        ));
    } else {
        lines.push(format!(
            "Controls to address first (priority {} or more): {}.",
            display(&opts.flag_threshold),
            name_list(flagged, |n| display(&n.priority))
        ));
    }
    lines.join("\n")
}

pub fn histogram(
    report: &ScoreReport,
    catalog: &Catalog,
    level: NodeKind,
) -> Result<HistogramSeries, ReportError> {
    if !matches!(level, NodeKind::Domain | NodeKind::Control) {
        return Err(ReportError::UnsupportedLevel(level));
    }
    check_same_catalog(report, catalog)?;
    let bars = catalog
        .nodes_of_kind(level)
        .into_iter()
        .map(|n| {
            let score = report.node(&n.id);
            Bar {
                node_id: n.id.clone(),
                label: n.name.clone(),
                achievement: score.and_then(|s| s.achievement.clone()),
                priority: score.and_then(|s| s.priority()),
            }
        })
        .collect();
    Ok(HistogramSeries { level, bars })
}

fn opt_display(v: Option<&Rational>) -> String {
    v.map(display).unwrap_or_else(|| "-".to_string())
}

fn status_line(report: &ScoreReport) -> String {
    let (scored, total) = (
        report.overall.scored_leaf_count,
        report.overall.total_leaf_count,
    );
    if report.complete {
        format!("COMPLETE ({scored}/{total} leaves scored)")
    } else {
        format!("INCOMPLETE ({scored}/{total} leaves scored)")
    }
}

/// Plain-text report: headline figures, the scored tree down to controls, and advice.
pub fn render_text(
    report: &ScoreReport,
    catalog: &Catalog,
    opts: &ReportOptions,
) -> Result<String, ReportError> {
    let summary = summarize(report, catalog, opts)?;
    let mut out = String::new();

    writeln!(out, "ISMS readiness report").unwrap();
    writeln!(
        out,
        "Catalog: {} {}",
        report.catalog.name, report.catalog.version
    )
    .unwrap();
    writeln!(out, "Status:  {}", status_line(report)).unwrap();
    writeln!(out).unwrap();
    writeln!(
        out,
        "Final result: {} / 4",
        opt_display(summary.grade.as_ref())
    )
    .unwrap();
    writeln!(
        out,
        "Percentage:   {}",
        summary
            .percentage
            .as_ref()
            .map(|p| format!("{}%", display(p)))
            .unwrap_or_else(|| "-".into())
    )
    .unwrap();
    writeln!(
        out,
        "Predicate:    {}",
        summary.predicate.map(Predicate::label).unwrap_or("-")
    )
    .unwrap();
    writeln!(out).unwrap();

    // Depth-annotated rows for everything between the root and the issues.
    let mut rows: Vec<(usize, &CatalogNode)> = Vec::new();
    let mut stack: Vec<(usize, &CatalogNode)> = catalog
        .root()
        .children
        .iter()
        .rev()
        .map(|c| (0, c))
        .collect();
    while let Some((depth, node)) = stack.pop() {
        if node.kind == NodeKind::Issue {
            continue;
        }
        rows.push((depth, node));
        stack.extend(node.children.iter().rev().map(|c| (depth + 1, c)));
    }
    let width = rows
        .iter()
        .map(|(d, n)| d * 2 + n.name.chars().count())
        .max()
        .unwrap_or(0)
        .max("Node".len());

    writeln!(
        out,
        "{:<width$}  {:<7}  {:>11}  {:>8}",
        "Node", "Kind", "Achievement", "Priority"
    )
    .unwrap();
    for (depth, node) in rows {
        let score = report.node(&node.id);
        let label = format!("{}{}", "  ".repeat(depth), node.name);
        writeln!(
            out,
            "{:<width$}  {:<7}  {:>11}  {:>8}",
            label,
            node.kind.as_str(),
            opt_display(score.and_then(|s| s.achievement.as_ref())),
            opt_display(score.and_then(|s| s.priority()).as_ref()),
        )
        .unwrap();
    }
    writeln!(out).unwrap();
    writeln!(out, "Advice").unwrap();
    for line in summary.advice.narrative.lines() {
        writeln!(out, "  {line}").unwrap();
    }
    Ok(out)
}

pub fn render_csv(series: &HistogramSeries) -> String {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer
        .write_record(["node_id", "label", "achievement", "priority"])
        .expect("write to memory");
    for bar in &series.bars {
        let fmt = |v: &Option<Rational>| v.as_ref().map(display).unwrap_or_default();
        writer
            .write_record([
                bar.node_id.as_str(),
                bar.label.as_str(),
                &fmt(&bar.achievement),
                &fmt(&bar.priority),
            ])
            .expect("write to memory");
    }
    let bytes = writer.into_inner().expect("flush to memory");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

/// The serialized score report with an `advice` object alongside.
pub fn report_json_value(
    report: &ScoreReport,
    catalog: &Catalog,
    opts: &ReportOptions,
) -> Result<serde_json::Value, ReportError> {
    let summary = summarize(report, catalog, opts)?;
    let mut value = serde_json::to_value(report).expect("report serializes");
    value["advice"] = serde_json::to_value(&summary.advice).expect("advice serializes");
    Ok(value)
}

pub fn render_json(
    report: &ScoreReport,
    catalog: &Catalog,
    opts: &ReportOptions,
) -> Result<String, ReportError> {
    let value = report_json_value(report, catalog, opts)?;
    let mut text = serde_json::to_string_pretty(&value).expect("json value serializes");
    text.push('\n');
    Ok(text)
}
