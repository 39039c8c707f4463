//! Synthetic inputs for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use readiness_core::{Assessment, Catalog, CatalogNode, LeafScore, NodeKind};

fn node(kind: NodeKind, id: String, children: Vec<CatalogNode>) -> CatalogNode {
    CatalogNode {
        name: id.clone(),
        id,
        kind,
        description: None,
        children,
    }
}

fn level(kind: NodeKind, id: &str, fanout: usize, class_depth: usize) -> CatalogNode {
    let (child_kind, next_depth) = match kind {
        NodeKind::Root => (NodeKind::Domain, class_depth),
        NodeKind::Domain | NodeKind::Class if class_depth > 0 => (NodeKind::Class, class_depth - 1),
        NodeKind::Domain | NodeKind::Class => (NodeKind::Control, 0),
        NodeKind::Control => (NodeKind::Issue, 0),
        NodeKind::Issue => return node(kind, id.to_string(), Vec::new()),
    };
    let children = (0..fanout)
        .map(|i| level(child_kind, &format!("{id}.{i}"), fanout, next_depth))
        .collect();
    node(kind, id.to_string(), children)
}

/// A full tree with `fanout` children per inner node and `class_depth` levels
/// of classes between the domains and the controls, scored at random.
///
/// Leaf count is `fanout ^ (3 + class_depth)`.
pub fn balanced(fanout: usize, class_depth: usize, seed: u64) -> (Catalog, Assessment) {
    let root = level(NodeKind::Root, "r", fanout, class_depth);
    let catalog = Catalog::new("synthetic", "1", root).expect("synthetic catalog is valid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = catalog
        .leaves()
        .iter()
        .map(|l| (l.id.clone(), LeafScore::new(rng.gen_range(0..=4)).unwrap()))
        .collect();
    let assessment = Assessment {
        catalog: catalog.catalog_ref(),
        scores,
    };
    (catalog, assessment)
}
