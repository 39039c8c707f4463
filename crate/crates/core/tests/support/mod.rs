//! Random catalog generation and an explicit-recursion scoring oracle.
//!
//! The oracle evaluates the nested-mean formula directly by recursion over
//! the tree and shares no code with the engine's rollup.

#![allow(dead_code)]

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use readiness_core::{Assessment, Catalog, CatalogNode, LeafScore, NodeKind};

pub struct Generated {
    pub catalog: Catalog,
    pub assessment: Assessment,
}

fn child_kind(rng: &mut ChaCha8Rng, parent: NodeKind, depth: usize, max_depth: usize) -> NodeKind {
    let leaf_bias = 0.3 + 0.12 * depth as f64;
    if parent == NodeKind::Control || depth + 1 >= max_depth || rng.gen_bool(leaf_bias.min(1.0)) {
        return NodeKind::Issue;
    }
    let options: &[NodeKind] = match parent {
        NodeKind::Root => &[NodeKind::Domain, NodeKind::Class, NodeKind::Control],
        NodeKind::Domain | NodeKind::Class => &[NodeKind::Class, NodeKind::Control],
        _ => unreachable!(),
    };
    options[rng.gen_range(0..options.len())]
}

fn build(
    rng: &mut ChaCha8Rng,
    kind: NodeKind,
    id: String,
    depth: usize,
    max_depth: usize,
    max_fanout: usize,
) -> CatalogNode {
    let children = if kind == NodeKind::Issue {
        Vec::new()
    } else {
        let n = rng.gen_range(1..=max_fanout);
        (0..n)
            .map(|i| {
                let k = child_kind(rng, kind, depth, max_depth);
                build(
                    rng,
                    k,
                    format!("{id}.{i}"),
                    depth + 1,
                    max_depth,
                    max_fanout,
                )
            })
            .collect()
    };
    CatalogNode {
        name: format!("{kind} {id}"),
        id,
        kind,
        description: None,
        children,
    }
}

/// A valid catalog of depth at most `max_depth` edges and fan-out at most
/// `max_fanout`, with uniformly random scores on every leaf.
pub fn generate(seed: u64, max_depth: usize, max_fanout: usize) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root = build(
        &mut rng,
        NodeKind::Root,
        "r".into(),
        0,
        max_depth,
        max_fanout,
    );
    let catalog =
        Catalog::new("random", seed.to_string(), root).expect("generated catalog is valid");
    let scores = catalog
        .leaves()
        .iter()
        .map(|l| (l.id.clone(), LeafScore::new(rng.gen_range(0..=4)).unwrap()))
        .collect();
    let assessment = Assessment {
        catalog: catalog.catalog_ref(),
        scores,
    };
    Generated {
        catalog,
        assessment,
    }
}

pub fn depth(node: &CatalogNode) -> usize {
    node.children
        .iter()
        .map(|c| 1 + depth(c))
        .max()
        .unwrap_or(0)
}

/// Nested mean by explicit recursion; `None` for subtrees with no scored leaf.
pub fn oracle(node: &CatalogNode, scores: &BTreeMap<String, LeafScore>) -> Option<BigRational> {
    if node.children.is_empty() {
        return scores
            .get(&node.id)
            .map(|s| BigRational::from_integer(BigInt::from(s.value())));
    }
    let values: Vec<BigRational> = node
        .children
        .iter()
        .filter_map(|c| oracle(c, scores))
        .collect();
    if values.is_empty() {
        return None;
    }
    let n = BigRational::from_integer(BigInt::from(values.len()));
    let mut sum = BigRational::from_integer(BigInt::from(0));
    for v in values {
        sum += v;
    }
    Some(sum / n)
}

/// Oracle value for every node, keyed by id.
pub fn oracle_all(
    root: &CatalogNode,
    scores: &BTreeMap<String, LeafScore>,
    out: &mut BTreeMap<String, Option<BigRational>>,
) {
    out.insert(root.id.clone(), oracle(root, scores));
    for c in &root.children {
        oracle_all(c, scores, out);
    }
}

/// Ids of every strict ancestor of `target`, root first.
pub fn ancestors(root: &CatalogNode, target: &str) -> Option<Vec<String>> {
    if root.id == target {
        return Some(Vec::new());
    }
    for c in &root.children {
        if let Some(mut path) = ancestors(c, target) {
            path.insert(0, root.id.clone());
            return Some(path);
        }
    }
    None
}
