//! Recursive-mean rollup of leaf scores through the control tree.
//!
//! Every internal node's achievement is the unweighted mean of its children's
//! achievements, evaluated bottom-up: controls average their issues, classes
//! average their controls, domains average their classes and the root averages
//! its domains. All arithmetic is exact; rounding only happens for display.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogNode, CatalogRef, SCALE_MAX};

pub type Rational = num_rational::BigRational;

pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

pub fn ratio(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

/// The ideal achievement every node is measured against.
pub fn ideal() -> Rational {
    int(i64::from(SCALE_MAX))
}

/// Formats `value` with `places` decimals, rounding half away from zero.
pub fn format_decimal(value: &Rational, places: u32) -> String {
    let scale = BigInt::from(10u32).pow(places);
    let half = ratio(1, 2);
    let scaled = (value.abs() * Rational::from_integer(scale.clone()) + half)
        .floor()
        .to_integer();
    let sign = if value.is_negative() && !scaled.is_zero() {
        "-"
    } else {
        ""
    };
    let whole = &scaled / &scale;
    let frac = &scaled % &scale;
    if places == 0 {
        format!("{sign}{whole}")
    } else {
        format!("{sign}{whole}.{frac:0>width$}", width = places as usize)
    }
}

/// Two-decimal display form used everywhere user-facing.
pub fn display(value: &Rational) -> String {
    format_decimal(value, 2)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoringError {
    #[error("cannot take the mean of an empty list")]
    EmptyMean,
    #[error("value {0} is outside the 0..=4 scale")]
    OutOfRange(String),
    #[error("assessment targets catalog {found}, expected {expected}")]
    CatalogMismatch {
        expected: CatalogRef,
        found: CatalogRef,
    },
    #[error("scores reference unknown assessment issues: {}", .0.join(", "))]
    UnknownLeaves(Vec<String>),
    #[error("assessment is incomplete; unscored issues: {}", .0.join(", "))]
    Incomplete(Vec<String>),
}

fn check_range(value: &Rational) -> Result<(), ScoringError> {
    if value.is_negative() || *value > ideal() {
        return Err(ScoringError::OutOfRange(value.to_string()));
    }
    Ok(())
}

/// Exact arithmetic mean of child achievements.
pub fn node_mean(values: &[Rational]) -> Result<Rational, ScoringError> {
    if values.is_empty() {
        return Err(ScoringError::EmptyMean);
    }
    for v in values {
        check_range(v)?;
    }
    let sum: Rational = values.iter().sum();
    Ok(sum / int(values.len() as i64))
}

/// Gap between the ideal score and `achievement`.
pub fn priority_of(achievement: &Rational) -> Result<Rational, ScoringError> {
    check_range(achievement)?;
    Ok(ideal() - achievement)
}

pub fn to_percentage(achievement: &Rational) -> Result<Rational, ScoringError> {
    check_range(achievement)?;
    Ok(achievement / ideal() * int(100))
}

/// Qualitative band of an achievement, rounding half up to the nearest scale label.
pub fn predicate_of(achievement: &Rational) -> Result<Predicate, ScoringError> {
    check_range(achievement)?;
    let nearest = (achievement + ratio(1, 2)).floor().to_integer();
    let idx: usize = nearest.try_into().expect("band index within 0..=4");
    Ok(Predicate::ALL[idx.min(4)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    NotImplementing,
    BelowAverage,
    Average,
    AboveAverage,
    Excellent,
}

impl Predicate {
    pub const ALL: [Predicate; 5] = [
        Predicate::NotImplementing,
        Predicate::BelowAverage,
        Predicate::Average,
        Predicate::AboveAverage,
        Predicate::Excellent,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Predicate::NotImplementing => "not implementing",
            Predicate::BelowAverage => "below average",
            Predicate::Average => "average",
            Predicate::AboveAverage => "above average",
            Predicate::Excellent => "excellent",
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A single answer on the 0..=4 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct LeafScore(u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("score {0} is outside the 0..=4 scale")]
pub struct LeafScoreError(pub i64);

impl LeafScore {
    pub fn new(value: i64) -> Result<Self, LeafScoreError> {
        if (0..=i64::from(SCALE_MAX)).contains(&value) {
            Ok(LeafScore(value as u8))
        } else {
            Err(LeafScoreError(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn predicate(self) -> Predicate {
        Predicate::ALL[usize::from(self.0)]
    }

    pub fn as_rational(self) -> Rational {
        int(i64::from(self.0))
    }
}

impl TryFrom<i64> for LeafScore {
    type Error = LeafScoreError;

    fn try_from(value: i64) -> Result<Self, Self::Error> {
        LeafScore::new(value)
    }
}

impl From<LeafScore> for u8 {
    fn from(score: LeafScore) -> u8 {
        score.0
    }
}

#[derive(Debug, Error)]
pub enum AssessmentError {
    #[error("malformed assessment document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scores out of range: {}", .0.iter().map(|(id, v)| format!("{id}={v}")).collect::<Vec<_>>().join(", "))]
    OutOfRange(Vec<(String, i64)>),
}

/// Scores for the assessment issues of one catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    pub catalog: CatalogRef,
    pub scores: BTreeMap<String, LeafScore>,
}

#[derive(Deserialize)]
struct RawAssessment {
    catalog: CatalogRef,
    scores: BTreeMap<String, i64>,
}

impl Assessment {
    pub fn new(catalog: CatalogRef) -> Self {
        Assessment {
            catalog,
            scores: BTreeMap::new(),
        }
    }

    /// Parses an assessment document, reporting every out-of-range score by id.
    pub fn from_json(text: &str) -> Result<Self, AssessmentError> {
        let raw: RawAssessment = serde_json::from_str(text)?;
        let (scores, bad) = validate_raw_scores(raw.scores);
        if !bad.is_empty() {
            return Err(AssessmentError::OutOfRange(bad));
        }
        Ok(Assessment {
            catalog: raw.catalog,
            scores,
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("assessment serializes")
    }

    pub fn unknown_leaves(&self, catalog: &Catalog) -> Vec<String> {
        let leaves: HashSet<&str> = catalog.leaves().iter().map(|n| n.id.as_str()).collect();
        self.scores
            .keys()
            .filter(|id| !leaves.contains(id.as_str()))
            .cloned()
            .collect()
    }

    /// Leaf ids without a score, in document order.
    pub fn unscored_leaves(&self, catalog: &Catalog) -> Vec<String> {
        catalog
            .leaves()
            .into_iter()
            .filter(|n| !self.scores.contains_key(&n.id))
            .map(|n| n.id.clone())
            .collect()
    }

    pub fn is_complete(&self, catalog: &Catalog) -> bool {
        catalog
            .leaves()
            .iter()
            .all(|n| self.scores.contains_key(&n.id))
    }
}

/// Splits raw integer scores into valid ones and `(id, value)` pairs that are out of range.
pub fn validate_raw_scores(
    raw: BTreeMap<String, i64>,
) -> (BTreeMap<String, LeafScore>, Vec<(String, i64)>) {
    let mut scores = BTreeMap::new();
    let mut bad = Vec::new();
    for (id, value) in raw {
        match LeafScore::new(value) {
            Ok(s) => {
                scores.insert(id, s);
            }
            Err(_) => bad.push((id, value)),
        }
    }
    (scores, bad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every leaf must be scored.
    #[default]
    Strict,
    /// Means are taken over scored leaves only; unscored subtrees drop out.
    Partial,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(Mode::Strict),
            "partial" => Ok(Mode::Partial),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// Rolled-up result for one node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "wire::NodeScore", try_from = "wire::NodeScore")]
pub struct NodeScore {
    pub node_id: String,
    /// `None` when no leaf below this node has been scored (partial mode only).
    pub achievement: Option<Rational>,
    pub scored_leaf_count: usize,
    pub total_leaf_count: usize,
}

impl NodeScore {
    pub fn priority(&self) -> Option<Rational> {
        self.achievement.as_ref().map(|a| ideal() - a)
    }

    pub fn is_complete(&self) -> bool {
        self.scored_leaf_count == self.total_leaf_count
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "wire::ScoreReport", try_from = "wire::ScoreReport")]
pub struct ScoreReport {
    pub catalog: CatalogRef,
    pub mode: Mode,
    pub complete: bool,
    pub overall: NodeScore,
    /// Scores for every node, in catalog document order.
    pub per_node: IndexMap<String, NodeScore>,
}

impl ScoreReport {
    pub fn node(&self, id: &str) -> Option<&NodeScore> {
        self.per_node.get(id)
    }

    pub fn achievement(&self, id: &str) -> Option<&Rational> {
        self.node(id).and_then(|n| n.achievement.as_ref())
    }

    pub fn grade(&self) -> Option<&Rational> {
        self.overall.achievement.as_ref()
    }

    pub fn percentage(&self) -> Option<Rational> {
        self.grade()
            .map(|g| to_percentage(g).expect("grade within scale"))
    }

    pub fn predicate(&self) -> Option<Predicate> {
        self.grade()
            .map(|g| predicate_of(g).expect("grade within scale"))
    }
}

struct Frame<'a> {
    node: &'a CatalogNode,
    next_child: usize,
    child_values: Vec<Rational>,
    scored: usize,
    total: usize,
}

impl<'a> Frame<'a> {
    fn new(node: &'a CatalogNode) -> Self {
        Frame {
            node,
            next_child: 0,
            child_values: Vec::with_capacity(node.children.len()),
            scored: 0,
            total: 0,
        }
    }
}

/// Rolls leaf scores up through the catalog, from issues to the root.
pub fn rollup(
    catalog: &Catalog,
    assessment: &Assessment,
    mode: Mode,
) -> Result<ScoreReport, ScoringError> {
    let expected = catalog.catalog_ref();
    if assessment.catalog != expected {
        return Err(ScoringError::CatalogMismatch {
            expected,
            found: assessment.catalog.clone(),
        });
    }
    let unknown = assessment.unknown_leaves(catalog);
    if !unknown.is_empty() {
        return Err(ScoringError::UnknownLeaves(unknown));
    }
    if mode == Mode::Strict {
        let missing = assessment.unscored_leaves(catalog);
        if !missing.is_empty() {
            return Err(ScoringError::Incomplete(missing));
        }
    }

    // Iterative post-order walk; results are keyed in pre-order so the
    // report lists nodes in document order.
    let mut per_node: IndexMap<String, NodeScore> = IndexMap::new();
    let root = catalog.root();
    let mut stack = vec![Frame::new(root)];
    per_node.insert(root.id.clone(), placeholder(&root.id));

    while let Some(frame) = stack.last_mut() {
        if let Some(child) = frame.node.children.get(frame.next_child) {
            frame.next_child += 1;
            per_node.insert(child.id.clone(), placeholder(&child.id));
            stack.push(Frame::new(child));
            continue;
        }

        let frame = stack.pop().expect("frame present");
        let score = if frame.node.is_leaf() {
            let value = assessment
                .scores
                .get(&frame.node.id)
                .map(|s| s.as_rational());
            NodeScore {
                node_id: frame.node.id.clone(),
                scored_leaf_count: usize::from(value.is_some()),
                total_leaf_count: 1,
                achievement: value,
            }
        } else {
            let achievement = if frame.child_values.is_empty() {
                None
            } else {
                Some(node_mean(&frame.child_values)?)
            };
            NodeScore {
                node_id: frame.node.id.clone(),
                achievement,
                scored_leaf_count: frame.scored,
                total_leaf_count: frame.total,
            }
        };

        if let Some(parent) = stack.last_mut() {
            parent.scored += score.scored_leaf_count;
            parent.total += score.total_leaf_count;
            if let Some(a) = &score.achievement {
                parent.child_values.push(a.clone());
            }
        }
        per_node.insert(score.node_id.clone(), score);
    }

    let overall = per_node[&root.id].clone();
    Ok(ScoreReport {
        catalog: expected,
        mode,
        complete: overall.is_complete(),
        overall,
        per_node,
    })
}

fn placeholder(id: &str) -> NodeScore {
    NodeScore {
        node_id: id.to_string(),
        achievement: None,
        scored_leaf_count: 0,
        total_leaf_count: 0,
    }
}

/// Serialized forms: decimal strings for display plus exact numerator/denominator.
mod wire {
    use super::*;

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct Exact {
        pub num: String,
        pub den: String,
    }

    impl From<&Rational> for Exact {
        fn from(r: &Rational) -> Self {
            Exact {
                num: r.numer().to_string(),
                den: r.denom().to_string(),
            }
        }
    }

    impl TryFrom<&Exact> for Rational {
        type Error = String;

        fn try_from(e: &Exact) -> Result<Self, Self::Error> {
            let num: BigInt = e
                .num
                .parse()
                .map_err(|_| format!("bad numerator `{}`", e.num))?;
            let den: BigInt = e
                .den
                .parse()
                .map_err(|_| format!("bad denominator `{}`", e.den))?;
            if den.is_zero() {
                return Err("zero denominator".into());
            }
            Ok(Rational::new(num, den))
        }
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct NodeScore {
        pub node_id: String,
        pub achievement: Option<String>,
        pub priority: Option<String>,
        pub achievement_exact: Option<Exact>,
        pub priority_exact: Option<Exact>,
        pub scored_leaf_count: usize,
        pub total_leaf_count: usize,
    }

    impl From<super::NodeScore> for NodeScore {
        fn from(n: super::NodeScore) -> Self {
            let priority = n.priority();
            NodeScore {
                achievement: n.achievement.as_ref().map(display),
                priority: priority.as_ref().map(display),
                achievement_exact: n.achievement.as_ref().map(Exact::from),
                priority_exact: priority.as_ref().map(Exact::from),
                node_id: n.node_id,
                scored_leaf_count: n.scored_leaf_count,
                total_leaf_count: n.total_leaf_count,
            }
        }
    }

    impl TryFrom<NodeScore> for super::NodeScore {
        type Error = String;

        fn try_from(w: NodeScore) -> Result<Self, Self::Error> {
            let achievement = w
                .achievement_exact
                .as_ref()
                .map(Rational::try_from)
                .transpose()?;
            let priority = w
                .priority_exact
                .as_ref()
                .map(Rational::try_from)
                .transpose()?;
            if let Some(a) = &achievement {
                check_range(a).map_err(|e| e.to_string())?;
            }
            let node = super::NodeScore {
                node_id: w.node_id,
                achievement,
                scored_leaf_count: w.scored_leaf_count,
                total_leaf_count: w.total_leaf_count,
            };
            if node.priority() != priority {
                return Err(format!(
                    "node `{}`: priority is not 4 - achievement",
                    node.node_id
                ));
            }
            Ok(node)
        }
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct ScoreReport {
        pub catalog: CatalogRef,
        pub mode: Mode,
        pub complete: bool,
        pub scored_leaf_count: usize,
        pub total_leaf_count: usize,
        pub grade: Option<String>,
        pub percentage: Option<String>,
        pub percentage_exact: Option<Exact>,
        pub predicate: Option<Predicate>,
        pub overall: NodeScore,
        pub per_node: IndexMap<String, NodeScore>,
    }

    impl From<super::ScoreReport> for ScoreReport {
        fn from(r: super::ScoreReport) -> Self {
            let percentage = r.percentage();
            ScoreReport {
                grade: r.grade().map(display),
                percentage: percentage.as_ref().map(display),
                percentage_exact: percentage.as_ref().map(Exact::from),
                predicate: r.predicate(),
                catalog: r.catalog,
                mode: r.mode,
                complete: r.complete,
                scored_leaf_count: r.overall.scored_leaf_count,
                total_leaf_count: r.overall.total_leaf_count,
                overall: r.overall.into(),
                per_node: r.per_node.into_iter().map(|(k, v)| (k, v.into())).collect(),
            }
        }
    }

    impl TryFrom<ScoreReport> for super::ScoreReport {
        type Error = String;

        fn try_from(w: ScoreReport) -> Result<Self, Self::Error> {
            let per_node = w
                .per_node
                .into_iter()
                .map(|(k, v)| Ok((k, super::NodeScore::try_from(v)?)))
                .collect::<Result<IndexMap<_, _>, String>>()?;
            let overall = super::NodeScore::try_from(w.overall)?;
            if per_node.get(&overall.node_id) != Some(&overall) {
                return Err("overall score does not match the root entry".into());
            }
            Ok(super::ScoreReport {
                catalog: w.catalog,
                mode: w.mode,
                complete: w.complete,
                overall,
                per_node,
            })
        }
    }
}
