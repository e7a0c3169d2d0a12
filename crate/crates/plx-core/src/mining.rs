//! Cross-variant comparison and the variant taxonomy.
//!
//! [`compare_variants`] walks two artifact trees top-down and reports, node
//! by node, what matched and what exists on one side only. Roots always
//! match (two variants of one system are comparable by construction); below
//! a matched pair, children pair up greedily by similarity with a cutoff,
//! and unpaired children are reported with their whole subtree.
//!
//! [`mine_taxonomy`] orders a set of variants by pairwise root similarity
//! into a spanning chain: the most similar pair seeds the taxonomy and every
//! remaining variant attaches to its most similar already-placed relative.
//! Integration consumes variants in that order so each merge step folds the
//! closest available variant into the platform.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ArtifactGraph, ArtifactNode, NodeId, NodeType};
use crate::similarity::{greedy_child_pairs, node_similarity};

/// How one node fared when comparing two variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MatchKind {
    /// Present in both variants (possibly with differences below).
    Match,
    /// Present only in the left variant.
    LeftOnly,
    /// Present only in the right variant.
    RightOnly,
}

/// One row of a variant comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEntry {
    pub kind: MatchKind,
    pub node_type: NodeType,
    /// Node id in the left variant; absent for right-only entries.
    pub left: Option<NodeId>,
    /// Node id in the right variant; absent for left-only entries.
    pub right: Option<NodeId>,
    /// Similarity of the matched pair; 0 for one-sided entries.
    pub similarity: f64,
}

/// Full comparison of two variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantComparison {
    pub left_variant: String,
    pub right_variant: String,
    /// Root similarity, the headline number for the pair.
    pub similarity: f64,
    pub entries: Vec<MatchEntry>,
}

/// An edge of the taxonomy: `variant` attaches to `parent` with the given
/// similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyLink {
    pub variant: String,
    pub parent: String,
    pub similarity: f64,
}

/// The mined variant taxonomy: an integration order plus the links that
/// justify it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    /// Variant ids in integration order; the first is the seed.
    pub order: Vec<String>,
    /// One link per non-seed variant, in attachment order. The second
    /// variant's link points at the seed.
    pub links: Vec<TaxonomyLink>,
}

/// Similarity of two variants, measured at their roots.
pub fn variant_similarity(left: &ArtifactGraph, right: &ArtifactGraph) -> f64 {
    node_similarity(left.root(), right.root())
}

/// Compares two variants node by node. `cutoff` is the minimum similarity
/// for two children to pair up; below it both children report as one-sided.
pub fn compare_variants(
    left: &ArtifactGraph,
    right: &ArtifactGraph,
    cutoff: f64,
) -> Result<VariantComparison> {
    if !(0.0..=1.0).contains(&cutoff) {
        return Err(Error::InvalidParameter(format!(
            "similarity cutoff must lie in [0, 1], got {cutoff}"
        )));
    }
    let mut entries = Vec::new();
    descend(left.root(), right.root(), cutoff, &mut entries);
    Ok(VariantComparison {
        left_variant: left.variant_id().to_string(),
        right_variant: right.variant_id().to_string(),
        similarity: variant_similarity(left, right),
        entries,
    })
}

fn descend(left: &ArtifactNode, right: &ArtifactNode, cutoff: f64, out: &mut Vec<MatchEntry>) {
    out.push(MatchEntry {
        kind: MatchKind::Match,
        node_type: left.node_type,
        left: Some(left.id),
        right: Some(right.id),
        similarity: node_similarity(left, right),
    });
    let pairs = greedy_child_pairs(&left.children, &right.children, Some(cutoff));
    let mut right_matched = vec![false; right.children.len()];
    let mut left_partner: Vec<Option<usize>> = vec![None; left.children.len()];
    for &(li, ri, _) in &pairs {
        left_partner[li] = Some(ri);
        right_matched[ri] = true;
    }
    // Emit in left order, interleaving the matched pairs' descents; then the
    // right-only leftovers in right order.
    for (li, child) in left.children.iter().enumerate() {
        match left_partner[li] {
            Some(ri) => descend(child, &right.children[ri], cutoff, out),
            None => emit_one_sided(child, MatchKind::LeftOnly, out),
        }
    }
    for (ri, child) in right.children.iter().enumerate() {
        if !right_matched[ri] {
            emit_one_sided(child, MatchKind::RightOnly, out);
        }
    }
}

fn emit_one_sided(node: &ArtifactNode, kind: MatchKind, out: &mut Vec<MatchEntry>) {
    for n in node.walk() {
        out.push(MatchEntry {
            kind,
            node_type: n.node_type,
            left: (kind == MatchKind::LeftOnly).then_some(n.id),
            right: (kind == MatchKind::RightOnly).then_some(n.id),
            similarity: 0.0,
        });
    }
}

/// Orders variants for integration by pairwise similarity.
///
/// The globally most similar pair (ties broken lexicographically) seeds the
/// order; each remaining variant then attaches to whichever placed variant
/// it resembles most. Ties prefer the lexicographically smallest unplaced
/// variant, then the smallest placed parent.
pub fn mine_taxonomy(variants: &[ArtifactGraph]) -> Result<Taxonomy> {
    if variants.is_empty() {
        return Err(Error::InvalidParameter(
            "taxonomy mining needs at least one variant".into(),
        ));
    }
    let mut ids: Vec<&str> = variants.iter().map(|v| v.variant_id()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        let dup = ids
            .windows(2)
            .find(|w| w[0] == w[1])
            .map(|w| w[0].to_string())
            .unwrap_or_default();
        return Err(Error::DuplicateVariant(dup));
    }
    let mut by_id: Vec<&ArtifactGraph> = variants.iter().collect();
    by_id.sort_by_key(|v| v.variant_id());

    let n = by_id.len();
    if n == 1 {
        return Ok(Taxonomy {
            order: vec![by_id[0].variant_id().to_string()],
            links: Vec::new(),
        });
    }

    let mut sim = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s = variant_similarity(by_id[i], by_id[j]);
            sim[i][j] = s;
            sim[j][i] = s;
        }
    }

    // Seed with the most similar pair; indexes follow the lexicographic id
    // order, so scanning i < j already breaks ties toward smaller ids.
    let (mut seed_a, mut seed_b, mut best) = (0, 1, f64::NEG_INFINITY);
    for i in 0..n {
        for j in (i + 1)..n {
            if sim[i][j] > best {
                best = sim[i][j];
                seed_a = i;
                seed_b = j;
            }
        }
    }

    let mut placed = vec![false; n];
    placed[seed_a] = true;
    placed[seed_b] = true;
    let mut order = vec![seed_a, seed_b];
    let mut links = vec![TaxonomyLink {
        variant: by_id[seed_b].variant_id().to_string(),
        parent: by_id[seed_a].variant_id().to_string(),
        similarity: best,
    }];

    while order.len() < n {
        let (mut pick, mut parent, mut best) = (usize::MAX, usize::MAX, f64::NEG_INFINITY);
        for cand in 0..n {
            if placed[cand] {
                continue;
            }
            for &p in &order {
                if sim[cand][p] > best {
                    best = sim[cand][p];
                    pick = cand;
                    parent = p;
                }
            }
        }
        placed[pick] = true;
        order.push(pick);
        links.push(TaxonomyLink {
            variant: by_id[pick].variant_id().to_string(),
            parent: by_id[parent].variant_id().to_string(),
            similarity: best,
        });
    }

    Ok(Taxonomy {
        order: order
            .into_iter()
            .map(|i| by_id[i].variant_id().to_string())
            .collect(),
        links,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::java::parse_source;

    fn graph(variant: &str, source: &str) -> ArtifactGraph {
        parse_source(source, variant).unwrap()
    }

    #[test]
    fn identical_variants_compare_as_full_match() {
        let a = graph("a", "class A { void m() { x = 1; } }");
        let b = graph("b", "class A { void m() { x = 1; } }");
        let cmp = compare_variants(&a, &b, 0.5).unwrap();
        assert_eq!(cmp.similarity, 1.0);
        assert!(cmp.entries.iter().all(|e| e.kind == MatchKind::Match));
        assert_eq!(cmp.entries.len(), a.node_count());
    }

    #[test]
    fn one_sided_subtrees_are_reported_whole() {
        let a = graph("a", "class A { void m() { x = 1; } }");
        let b = graph(
            "b",
            "class A { void m() { x = 1; } void extra() { y = 2; } }",
        );
        let cmp = compare_variants(&a, &b, 0.5).unwrap();
        let right_only: Vec<&MatchEntry> = cmp
            .entries
            .iter()
            .filter(|e| e.kind == MatchKind::RightOnly)
            .collect();
        // The extra method plus its block and statement.
        assert_eq!(right_only.len(), 3);
        assert_eq!(right_only[0].node_type, NodeType::Method);
        assert!(right_only.iter().all(|e| e.left.is_none()));
    }

    #[test]
    fn matched_entries_carry_pair_similarity() {
        let a = graph("a", "class A { void m() { x = y + z; } }");
        let b = graph("b", "class A { void m() { x = y - z; } }");
        let cmp = compare_variants(&a, &b, 0.1).unwrap();
        let stmt_entry = cmp
            .entries
            .iter()
            .find(|e| e.node_type == NodeType::Statement && e.kind == MatchKind::Match)
            .expect("statements pair up");
        // Five of six tokens survive: 2*5/(6+6).
        assert!((stmt_entry.similarity - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn cutoff_splits_dissimilar_children_into_one_sided_entries() {
        let a = graph("a", "class A { void m() { x = 1; } }");
        let b = graph("b", "class A { void q() { fetch(url, retries, backoff); } }");
        let high = compare_variants(&a, &b, 0.9).unwrap();
        assert!(high
            .entries
            .iter()
            .any(|e| e.kind == MatchKind::LeftOnly && e.node_type == NodeType::Method));
        let low = compare_variants(&a, &b, 0.0).unwrap();
        assert!(low
            .entries
            .iter()
            .filter(|e| e.node_type == NodeType::Method)
            .all(|e| e.kind == MatchKind::Match));
    }

    #[test]
    fn comparison_rejects_out_of_range_cutoffs() {
        let a = graph("a", "class A { }");
        let b = graph("b", "class A { }");
        assert!(matches!(
            compare_variants(&a, &b, 1.5),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn taxonomy_follows_the_frozen_three_variant_example() {
        // Engineered similarities: A and B share most statements (high),
        // C shares a little more with B than with A.
        let a = graph(
            "A",
            "class K { void m() { x = 1; y = 2; z = 3; w = 4; v = 5; } }",
        );
        let b = graph(
            "B",
            "class K { void m() { x = 1; y = 2; z = 3; w = 4; u = 9; } }",
        );
        let c = graph(
            "C",
            "class K { void m() { fetch(url); parse(body); u = 9; store(result, cache, key); } }",
        );
        let ab = variant_similarity(&a, &b);
        let ac = variant_similarity(&a, &c);
        let bc = variant_similarity(&b, &c);
        assert!(ab > bc && bc > ac, "ab={ab} ac={ac} bc={bc}");

        let taxonomy = mine_taxonomy(&[c.clone(), a.clone(), b.clone()]).unwrap();
        assert_eq!(taxonomy.order, vec!["A", "B", "C"]);
        assert_eq!(taxonomy.links.len(), 2);
        assert_eq!(taxonomy.links[0].variant, "B");
        assert_eq!(taxonomy.links[0].parent, "A");
        assert!((taxonomy.links[0].similarity - ab).abs() < 1e-12);
        assert_eq!(taxonomy.links[1].variant, "C");
        assert_eq!(taxonomy.links[1].parent, "B");
        assert!((taxonomy.links[1].similarity - bc).abs() < 1e-12);
    }

    #[test]
    fn taxonomy_order_is_independent_of_input_order() {
        let sources = [
            ("A", "class K { void m() { x = 1; y = 2; z = 3; } }"),
            ("B", "class K { void m() { x = 1; y = 2; q = 7; } }"),
            ("C", "class K { void m() { x = 1; r = 8; s = 9; } }"),
            ("D", "class K { void m() { t = 4; u = 5; v = 6; } }"),
        ];
        let graphs: Vec<ArtifactGraph> =
            sources.iter().map(|(id, s)| graph(id, s)).collect();
        let t1 = mine_taxonomy(&graphs).unwrap();
        let mut reversed = graphs.clone();
        reversed.reverse();
        let t2 = mine_taxonomy(&reversed).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn singleton_taxonomy_has_no_links() {
        let a = graph("only", "class K { }");
        let t = mine_taxonomy(&[a]).unwrap();
        assert_eq!(t.order, vec!["only"]);
        assert!(t.links.is_empty());
    }

    #[test]
    fn duplicate_variant_ids_are_rejected() {
        let a = graph("same", "class K { }");
        let b = graph("same", "class L { }");
        assert!(matches!(
            mine_taxonomy(&[a, b]),
            Err(Error::DuplicateVariant(_))
        ));
    }

    #[test]
    fn empty_variant_list_is_rejected() {
        assert!(matches!(
            mine_taxonomy(&[]),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn variant_similarity_is_symmetric() {
        let a = graph("a", "class A { void m() { x = 1; y = 2; } }");
        let b = graph("b", "class A { void m() { x = 1; z = 3; } }");
        assert_eq!(variant_similarity(&a, &b), variant_similarity(&b, &a));
    }
}
