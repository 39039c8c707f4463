//! Hierarchical control catalog: domains, classes, controls and assessment issues.
//!
//! A catalog is a tree whose leaves are assessment issues. The bundled
//! catalog arranges the 21 ISO 27001 essential controls under six domains
//! (organization, stakeholder, tools & technology, policy, culture,
//! knowledge). Levels may be skipped and `class` nodes may nest, so trees of
//! any depth can be expressed.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The only supported scale maximum (0 = not implementing .. 4 = excellent).
pub const SCALE_MAX: u8 = 4;

/// JSON source of the bundled six-domain ISO 27001 catalog.
pub const BUNDLED_CATALOG_JSON: &str = include_str!("../catalogs/iso27001-six-domain.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Root,
    Domain,
    Class,
    Control,
    Issue,
}

impl NodeKind {
    pub const ALL: [NodeKind; 5] = [
        NodeKind::Root,
        NodeKind::Domain,
        NodeKind::Class,
        NodeKind::Control,
        NodeKind::Issue,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Root => "root",
            NodeKind::Domain => "domain",
            NodeKind::Class => "class",
            NodeKind::Control => "control",
            NodeKind::Issue => "issue",
        }
    }

    /// Whether a node of this kind may directly own a node of `child` kind.
    ///
    /// Kinds must descend along every path (levels may be skipped); the one
    /// exception is `class`, which may nest to model sub-sections.
    pub fn may_parent(self, child: NodeKind) -> bool {
        child > self || (self == NodeKind::Class && child == NodeKind::Class)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown node kind `{0}`")]
pub struct ParseKindError(String);

impl FromStr for NodeKind {
    type Err = ParseKindError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ParseKindError(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogNode {
    pub id: String,
    pub name: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<CatalogNode>,
}

impl CatalogNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Pre-order (document order) traversal of this subtree.
    pub fn iter(&self) -> PreOrder<'_> {
        PreOrder { stack: vec![self] }
    }

    pub fn leaf_count(&self) -> usize {
        self.iter().filter(|n| n.is_leaf()).count()
    }
}

pub struct PreOrder<'a> {
    stack: Vec<&'a CatalogNode>,
}

impl<'a> Iterator for PreOrder<'a> {
    type Item = &'a CatalogNode;

    fn next(&mut self) -> Option<Self::Item> {
        let node = self.stack.pop()?;
        self.stack.extend(node.children.iter().rev());
        Some(node)
    }
}

/// Name and version pair identifying a catalog.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CatalogRef {
    pub name: String,
    pub version: String,
}

impl fmt::Display for CatalogRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.name, self.version)
    }
}

/// A validated control tree. Immutable once constructed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCatalog")]
pub struct Catalog {
    name: String,
    version: String,
    scale_max: u8,
    root: CatalogNode,
}

#[derive(Deserialize)]
struct RawCatalog {
    name: String,
    version: String,
    scale_max: u32,
    root: CatalogNode,
}

impl TryFrom<RawCatalog> for Catalog {
    type Error = CatalogError;

    fn try_from(raw: RawCatalog) -> Result<Self, Self::Error> {
        if raw.scale_max != u32::from(SCALE_MAX) {
            return Err(CatalogError::UnsupportedScale(raw.scale_max));
        }
        Catalog::new(raw.name, raw.version, raw.root)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Problem {
    DuplicateId,
    InvalidId,
    EmptyName,
    RootKind(NodeKind),
    IssueWithChildren,
    NoChildren,
    KindOrder { parent: NodeKind, child: NodeKind },
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Problem::DuplicateId => f.write_str("duplicate id"),
            Problem::InvalidId => f.write_str("id must be non-empty and match [a-z0-9_.-]+"),
            Problem::EmptyName => f.write_str("name is empty"),
            Problem::RootKind(kind) => write!(f, "root node must have kind `root`, found `{kind}`"),
            Problem::IssueWithChildren => f.write_str("issue nodes must be leaves"),
            Problem::NoChildren => f.write_str("non-issue node has no children"),
            Problem::KindOrder { parent, child } => {
                write!(f, "a `{parent}` node cannot contain a `{child}` node")
            }
        }
    }
}

/// One validation finding, attached to the offending node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub node_id: String,
    pub problem: Problem,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node `{}`: {}", self.node_id, self.problem)
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("malformed catalog document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported scale_max {0} (only {SCALE_MAX} is supported)")]
    UnsupportedScale(u32),
    #[error("invalid catalog: {}", join_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
}

impl CatalogError {
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            CatalogError::Invalid(d) => d,
            _ => &[],
        }
    }
}

fn join_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.bytes().all(|b| {
            b.is_ascii_lowercase() || b.is_ascii_digit() || matches!(b, b'_' | b'.' | b'-')
        })
}

fn validate(root: &CatalogNode) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut seen = HashSet::new();
    let mut report = |node: &CatalogNode, problem| {
        diags.push(Diagnostic {
            node_id: node.id.clone(),
            problem,
        })
    };

    if root.kind != NodeKind::Root {
        report(root, Problem::RootKind(root.kind));
    }
    for node in root.iter() {
        if !valid_id(&node.id) {
            report(node, Problem::InvalidId);
        }
        if !seen.insert(node.id.as_str()) {
            report(node, Problem::DuplicateId);
        }
        if node.name.trim().is_empty() {
            report(node, Problem::EmptyName);
        }
        match (node.kind, node.children.is_empty()) {
            (NodeKind::Issue, false) => report(node, Problem::IssueWithChildren),
            (kind, true) if kind != NodeKind::Issue => report(node, Problem::NoChildren),
            _ => {}
        }
        for child in &node.children {
            if !node.kind.may_parent(child.kind) {
                report(
                    child,
                    Problem::KindOrder {
                        parent: node.kind,
                        child: child.kind,
                    },
                );
            }
        }
    }
    diags
}

impl Catalog {
    /// Builds a catalog from a tree, validating every structural invariant.
    pub fn new(
        name: impl Into<String>,
        version: impl Into<String>,
        root: CatalogNode,
    ) -> Result<Self, CatalogError> {
        let diags = validate(&root);
        if !diags.is_empty() {
            return Err(CatalogError::Invalid(diags));
        }
        Ok(Catalog {
            name: name.into(),
            version: version.into(),
            scale_max: SCALE_MAX,
            root,
        })
    }

    /// The six-domain, 21-control ISO 27001 catalog shipped with the crate.
    pub fn bundled() -> Catalog {
        load_catalog(BUNDLED_CATALOG_JSON).expect("bundled catalog is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn scale_max(&self) -> u8 {
        self.scale_max
    }

    pub fn root(&self) -> &CatalogNode {
        &self.root
    }

    pub fn catalog_ref(&self) -> CatalogRef {
        CatalogRef {
            name: self.name.clone(),
            version: self.version.clone(),
        }
    }

    /// All nodes in document order.
    pub fn iter(&self) -> PreOrder<'_> {
        self.root.iter()
    }

    /// Assessment issues (leaves) in depth-first document order.
    pub fn leaves(&self) -> Vec<&CatalogNode> {
        self.iter().filter(|n| n.is_leaf()).collect()
    }

    pub fn find_node(&self, id: &str) -> Option<&CatalogNode> {
        self.iter().find(|n| n.id == id)
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> Vec<&CatalogNode> {
        self.iter().filter(|n| n.kind == kind).collect()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }
}

/// Parses and validates a catalog document.
pub fn load_catalog(text: &str) -> Result<Catalog, CatalogError> {
    // Deserialize the raw shape first so validation failures surface as
    // `Invalid` rather than being folded into a serde error.
    let raw: RawCatalog = serde_json::from_str(text)?;
    Catalog::try_from(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_doc() -> &'static str {
        r#"{
          "name": "mini", "version": "1", "scale_max": 4,
          "root": {"id": "r", "name": "Root", "kind": "root", "children": [
            {"id": "d", "name": "Domain", "kind": "domain", "children": [
              {"id": "c", "name": "Control", "kind": "control", "children": [
                {"id": "c.q1", "name": "Question", "kind": "issue"}
              ]}
            ]}
          ]}
        }"#
    }

    #[test]
    fn bundled_has_six_domains_and_21_controls() {
        let cat = Catalog::bundled();
        assert_eq!(cat.root().children.len(), 6);
        assert!(cat
            .root()
            .children
            .iter()
            .all(|d| d.kind == NodeKind::Domain));
        assert_eq!(cat.nodes_of_kind(NodeKind::Control).len(), 21);
        assert_eq!(cat.scale_max(), 4);
    }

    #[test]
    fn bundled_domain_names_match_framework() {
        let cat = Catalog::bundled();
        let mut names: Vec<_> = cat
            .root()
            .children
            .iter()
            .map(|d| d.name.as_str())
            .collect();
        names.sort_unstable();
        assert_eq!(
            names,
            [
                "Culture",
                "Knowledge",
                "Organization",
                "Policy",
                "Stakeholder",
                "Tools & Technology"
            ]
        );
    }

    #[test]
    fn bundled_leaves_one_per_control() {
        let cat = Catalog::bundled();
        let leaves = cat.leaves();
        let shipped: serde_json::Value = serde_json::from_str(BUNDLED_CATALOG_JSON).unwrap();
        fn count_issues(v: &serde_json::Value) -> usize {
            let own = usize::from(v["kind"] == "issue");
            own + v["children"]
                .as_array()
                .map(|c| c.iter().map(count_issues).sum())
                .unwrap_or(0)
        }
        assert_eq!(leaves.len(), count_issues(&shipped["root"]));
        assert_eq!(leaves.len(), 21);
        assert!(leaves.iter().all(|l| l.kind == NodeKind::Issue));
    }

    #[test]
    fn minimal_catalog_loads() {
        let cat = load_catalog(minimal_doc()).unwrap();
        assert_eq!(cat.iter().count(), 4);
        assert_eq!(cat.root().children.len(), 1);
        let leaves = cat.leaves();
        assert_eq!(leaves.len(), 1);
        assert_eq!(leaves[0].id, "c.q1");
    }

    #[test]
    fn leaves_preserve_control_order() {
        let doc = r#"{"name":"m","version":"1","scale_max":4,"root":{"id":"r","name":"R","kind":"root","children":[
          {"id":"a","name":"A","kind":"control","children":[
            {"id":"a.1","name":"1","kind":"issue"},{"id":"a.2","name":"2","kind":"issue"},{"id":"a.3","name":"3","kind":"issue"}]},
          {"id":"b","name":"B","kind":"control","children":[{"id":"b.1","name":"1","kind":"issue"}]}]}}"#;
        let cat = load_catalog(doc).unwrap();
        let ids: Vec<_> = cat.leaves().iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, ["a.1", "a.2", "a.3", "b.1"]);
    }

    #[test]
    fn duplicate_id_is_named() {
        let doc = r#"{"name":"m","version":"1","scale_max":4,"root":{"id":"r","name":"R","kind":"root","children":[
          {"id":"bcm.testing","name":"A","kind":"control","children":[{"id":"x","name":"x","kind":"issue"}]},
          {"id":"c","name":"B","kind":"control","children":[{"id":"bcm.testing","name":"y","kind":"issue"}]}]}}"#;
        let err = load_catalog(doc).unwrap_err();
        assert_eq!(
            err.diagnostics(),
            [Diagnostic {
                node_id: "bcm.testing".into(),
                problem: Problem::DuplicateId
            }]
        );
        assert!(err.to_string().contains("bcm.testing"));
    }

    #[test]
    fn structural_violations() {
        let doc = r#"{"name":"m","version":"1","scale_max":4,"root":{"id":"r","name":"R","kind":"root","children":[
          {"id":"c","name":"C","kind":"control","children":[
             {"id":"d","name":"D","kind":"domain","children":[{"id":"q","name":"q","kind":"issue"}]}]},
          {"id":"empty","name":"E","kind":"class"},
          {"id":"q2","name":"q","kind":"issue","children":[{"id":"q3","name":"q","kind":"issue"}]},
          {"id":"Bad Id","name":"B","kind":"control","children":[{"id":"q4","name":"q","kind":"issue"}]}]}}"#;
        let err = load_catalog(doc).unwrap_err();
        let problems: Vec<_> = err
            .diagnostics()
            .iter()
            .map(|d| (d.node_id.as_str(), d.problem.clone()))
            .collect();
        assert!(problems.contains(&(
            "d",
            Problem::KindOrder {
                parent: NodeKind::Control,
                child: NodeKind::Domain
            }
        )));
        assert!(problems.contains(&("empty", Problem::NoChildren)));
        assert!(problems.contains(&("q2", Problem::IssueWithChildren)));
        assert!(problems.contains(&("Bad Id", Problem::InvalidId)));
        assert!(problems.contains(&(
            "q3",
            Problem::KindOrder {
                parent: NodeKind::Issue,
                child: NodeKind::Issue
            }
        )));
    }

    #[test]
    fn root_kind_and_scale_checked() {
        let doc = r#"{"name":"m","version":"1","scale_max":4,"root":{"id":"r","name":"R","kind":"domain","children":[
          {"id":"q","name":"q","kind":"issue"}]}}"#;
        let err = load_catalog(doc).unwrap_err();
        assert_eq!(
            err.diagnostics()[0].problem,
            Problem::RootKind(NodeKind::Domain)
        );

        let doc = minimal_doc().replace("\"scale_max\": 4", "\"scale_max\": 5");
        assert!(matches!(
            load_catalog(&doc),
            Err(CatalogError::UnsupportedScale(5))
        ));
    }

    #[test]
    fn malformed_document_is_parse_error() {
        assert!(matches!(
            load_catalog("{not json"),
            Err(CatalogError::Parse(_))
        ));
        assert!(matches!(
            load_catalog(
                r#"{"name":"x","version":"1","scale_max":4,"root":{"id":"r","name":"R","kind":"leaf"}}"#
            ),
            Err(CatalogError::Parse(_))
        ));
    }

    #[test]
    fn nested_classes_allowed() {
        let doc = r#"{"name":"m","version":"1","scale_max":4,"root":{"id":"r","name":"R","kind":"root","children":[
          {"id":"a","name":"A","kind":"class","children":[
            {"id":"b","name":"B","kind":"class","children":[{"id":"q","name":"q","kind":"issue"}]}]}]}}"#;
        assert!(load_catalog(doc).is_ok());
    }

    #[test]
    fn find_node_lookups() {
        let cat = Catalog::bundled();
        let node = cat.find_node("org.allocation").unwrap();
        assert_eq!(
            node.name,
            "Allocation of information security responsibilities"
        );
        assert_eq!(node.kind, NodeKind::Control);
        assert_eq!(cat.find_node(&cat.root().id).unwrap().kind, NodeKind::Root);
        assert!(cat.find_node("no.such.id").is_none());
    }

    #[test]
    fn serialization_round_trip() {
        let cat = Catalog::bundled();
        let again = load_catalog(&cat.to_json_pretty()).unwrap();
        assert_eq!(cat, again);
        let ids: Vec<_> = cat.iter().map(|n| (&n.id, n.kind)).collect();
        let ids2: Vec<_> = again.iter().map(|n| (&n.id, n.kind)).collect();
        assert_eq!(ids, ids2);
    }

    #[test]
    fn kind_parse() {
        assert_eq!("control".parse::<NodeKind>().unwrap(), NodeKind::Control);
        assert!("section".parse::<NodeKind>().is_err());
    }
}
