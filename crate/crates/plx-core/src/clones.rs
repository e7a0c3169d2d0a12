//! Intra-variant clone detection.
//!
//! Candidates are subtrees of the configured granularities whose token mass
//! meets `min_tokens`. Classes form in three tiers per granularity:
//!
//! 1. identical EXACT digests (verbatim duplicates),
//! 2. identical ABSTRACTED digests among the rest (consistent renames),
//! 3. greedy similarity: remaining candidates, visited in EXACT-digest
//!    order, join the first class (in formation order) whose representative
//!    scores at least `theta`, else open a new class; classes that stay
//!    singletons are dropped.
//!
//! A final pruning pass removes members nested inside other reported members:
//! members are visited shallowest first and kept only when no kept member is
//! a strict ancestor; classes left with fewer than two members disappear.
//! The surviving classes are therefore pairwise disjoint and non-nested,
//! which the component refactoring step relies on.
//!
//! The greedy tier consults an admissible upper bound (see
//! [`crate::similarity::similarity_upper_bound`]) before computing a full
//! similarity; the bound never underestimates, so results are identical with
//! or without the shortcut (a property test in `tests/` checks this).

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ArtifactGraph, ArtifactNode, NodeId, NodeType};
use crate::hash::{canonical_hash, exact_hash_map, Abstraction, Digest};
use crate::similarity::{node_similarity, BoundContext};

/// Classification of a clone class by the strongest relation that holds
/// between all its members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CloneType {
    /// All members are verbatim copies (equal EXACT digests).
    #[serde(rename = "TYPE1")]
    Type1,
    /// All members are consistent renames (equal ABSTRACTED digests).
    #[serde(rename = "TYPE2")]
    Type2,
    /// Members joined through similarity; they differ structurally.
    #[serde(rename = "TYPE3")]
    Type3,
}

impl std::fmt::Display for CloneType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            CloneType::Type1 => "TYPE1",
            CloneType::Type2 => "TYPE2",
            CloneType::Type3 => "TYPE3",
        };
        f.write_str(name)
    }
}

/// Node types that may serve as clone candidates.
pub const DETECTABLE: &[NodeType] = &[
    NodeType::Class,
    NodeType::Method,
    NodeType::Block,
    NodeType::Statement,
];

/// Tuning knobs for [`detect_clones`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Similarity threshold for the greedy tier, in [0, 1].
    pub theta: f64,
    /// Minimum subtree token mass for a candidate.
    pub min_tokens: usize,
    /// Granularities to scan.
    pub granularities: BTreeSet<NodeType>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            theta: 0.75,
            min_tokens: 8,
            granularities: [NodeType::Class, NodeType::Method, NodeType::Block]
                .into_iter()
                .collect(),
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidParameter(format!(
                "theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        if self.granularities.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one clone granularity is required".into(),
            ));
        }
        for g in &self.granularities {
            if !DETECTABLE.contains(g) {
                return Err(Error::InvalidParameter(format!(
                    "{g} is not a detectable clone granularity"
                )));
            }
        }
        Ok(())
    }
}

/// One detected clone class. Members are node ids in the analyzed graph,
/// sorted ascending; the representative is the member with the smallest
/// EXACT digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloneClass {
    pub granularity: NodeType,
    pub clone_type: CloneType,
    pub members: Vec<NodeId>,
    pub representative: NodeId,
}

/// Detection result for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneReport {
    pub variant_id: String,
    pub theta: f64,
    pub min_tokens: usize,
    pub classes: Vec<CloneClass>,
}

/// Detects clone classes in one variant.
pub fn detect_clones(graph: &ArtifactGraph, config: &DetectionConfig) -> Result<CloneReport> {
    detect_with(graph, config, true)
}

/// Like [`detect_clones`] but with the admissible-bound shortcut disabled.
/// Exists so tests can prove the shortcut changes nothing.
pub fn detect_clones_unbounded(
    graph: &ArtifactGraph,
    config: &DetectionConfig,
) -> Result<CloneReport> {
    detect_with(graph, config, false)
}

struct WorkClass {
    granularity: NodeType,
    members: Vec<NodeId>,
    rep: NodeId,
    rep_digest: Digest,
}

fn detect_with(
    graph: &ArtifactGraph,
    config: &DetectionConfig,
    use_bound: bool,
) -> Result<CloneReport> {
    config.validate()?;
    let exact = exact_hash_map(graph.root());
    let mut mass: HashMap<NodeId, usize> = HashMap::new();
    collect_mass(graph.root(), &mut mass);
    let bound = use_bound.then(|| BoundContext::new(&[graph.root()]));

    let mut classes: Vec<WorkClass> = Vec::new();
    for &granularity in NodeType::all() {
        if !config.granularities.contains(&granularity) {
            continue;
        }
        let mut candidates: Vec<(Digest, NodeId)> = graph
            .nodes()
            .filter(|n| n.node_type == granularity && mass[&n.id] >= config.min_tokens)
            .map(|n| (exact[&n.id], n.id))
            .collect();
        candidates.sort();
        form_classes(graph, granularity, candidates, config.theta, bound.as_ref(), &mut classes);
    }

    let pruned = prune_nested(graph, classes);
    let mut out = Vec::with_capacity(pruned.len());
    for class in pruned {
        let clone_type = classify_members(graph, &class.members)?;
        let mut members = class.members;
        members.sort();
        out.push(CloneClass {
            granularity: class.granularity,
            clone_type,
            members,
            representative: class.rep,
        });
    }
    Ok(CloneReport {
        variant_id: graph.variant_id().to_string(),
        theta: config.theta,
        min_tokens: config.min_tokens,
        classes: out,
    })
}

fn collect_mass(node: &ArtifactNode, out: &mut HashMap<NodeId, usize>) -> usize {
    let mut total = node.tokens.len();
    for child in &node.children {
        total += collect_mass(child, out);
    }
    out.insert(node.id, total);
    total
}

fn form_classes(
    graph: &ArtifactGraph,
    granularity: NodeType,
    candidates: Vec<(Digest, NodeId)>,
    theta: f64,
    bound: Option<&BoundContext>,
    classes: &mut Vec<WorkClass>,
) {
    let first_new = classes.len();
    let mut leftovers: Vec<(Digest, NodeId)> = Vec::new();
    let mut i = 0;
    while i < candidates.len() {
        let mut j = i + 1;
        while j < candidates.len() && candidates[j].0 == candidates[i].0 {
            j += 1;
        }
        if j - i >= 2 {
            classes.push(WorkClass {
                granularity,
                members: candidates[i..j].iter().map(|&(_, id)| id).collect(),
                rep: candidates[i].1,
                rep_digest: candidates[i].0,
            });
        } else {
            leftovers.push(candidates[i]);
        }
        i = j;
    }

    // Group consistent renames by ABSTRACTED digest.
    let mut by_abstract: Vec<(Digest, Digest, NodeId)> = leftovers
        .iter()
        .map(|&(digest, id)| {
            let node = graph.node(id).expect("candidate id is valid");
            (canonical_hash(node, Abstraction::Abstracted), digest, id)
        })
        .collect();
    by_abstract.sort();
    let mut singles: Vec<(Digest, NodeId)> = Vec::new();
    let mut i = 0;
    while i < by_abstract.len() {
        let mut j = i + 1;
        while j < by_abstract.len() && by_abstract[j].0 == by_abstract[i].0 {
            j += 1;
        }
        if j - i >= 2 {
            classes.push(WorkClass {
                granularity,
                members: by_abstract[i..j].iter().map(|&(_, _, id)| id).collect(),
                rep: by_abstract[i].2,
                rep_digest: by_abstract[i].1,
            });
        } else {
            singles.push((by_abstract[i].1, by_abstract[i].2));
        }
        i = j;
    }

    // Greedy similarity pass over what is left, in EXACT-digest order.
    singles.sort();
    for (digest, id) in singles {
        let node = graph.node(id).expect("candidate id is valid");
        let mut joined = false;
        for class in classes[first_new..].iter_mut() {
            let rep_node = graph.node(class.rep).expect("representative id is valid");
            if let Some(ctx) = bound {
                if ctx.bound(node, rep_node) < theta {
                    continue;
                }
            }
            if node_similarity(node, rep_node) >= theta {
                class.members.push(id);
                if digest < class.rep_digest {
                    class.rep = id;
                    class.rep_digest = digest;
                }
                joined = true;
                break;
            }
        }
        if !joined {
            classes.push(WorkClass {
                granularity,
                members: vec![id],
                rep: id,
                rep_digest: digest,
            });
        }
    }

    classes.retain(|c| c.members.len() >= 2);
}

/// Drops members nested inside other reported members, shallowest first,
/// then classes that fall below two members. A class that dies this way is
/// gone entirely; its surviving member is already covered by the enclosing
/// clone that shadowed its partners.
fn prune_nested(graph: &ArtifactGraph, classes: Vec<WorkClass>) -> Vec<WorkClass> {
    let mut members: Vec<(usize, NodeId, usize)> = Vec::new();
    for (ci, class) in classes.iter().enumerate() {
        for &m in &class.members {
            let depth = graph.depth_of(m).expect("member id is valid");
            members.push((ci, m, depth));
        }
    }
    members.sort_by_key(|&(_, id, depth)| (depth, id));

    let mut kept: BTreeSet<NodeId> = BTreeSet::new();
    for &(_, id, _) in &members {
        let mut ancestor = graph.parent_of(id);
        let mut shadowed = false;
        while let Some(a) = ancestor {
            if kept.contains(&a) {
                shadowed = true;
                break;
            }
            ancestor = graph.parent_of(a);
        }
        if !shadowed {
            kept.insert(id);
        }
    }

    let exact = exact_hash_map(graph.root());
    classes
        .into_iter()
        .filter_map(|mut class| {
            class.members.retain(|m| kept.contains(m));
            if class.members.len() < 2 {
                return None;
            }
            let (&rep, &digest) = class
                .members
                .iter()
                .map(|m| (m, &exact[m]))
                .min_by_key(|&(m, d)| (*d, *m))
                .expect("class has members");
            class.rep = rep;
            class.rep_digest = digest;
            Some(class)
        })
        .collect()
}

/// Classifies a member set by the strongest relation holding across all of
/// it: equal EXACT digests, equal ABSTRACTED digests, or mere similarity.
pub fn classify_members(graph: &ArtifactGraph, members: &[NodeId]) -> Result<CloneType> {
    if members.len() < 2 {
        return Err(Error::InvalidParameter(
            "clone classification needs at least two members".into(),
        ));
    }
    let nodes: Vec<&ArtifactNode> = members
        .iter()
        .map(|&m| graph.require_node(m))
        .collect::<Result<_>>()?;
    let first_exact = canonical_hash(nodes[0], Abstraction::Exact);
    if nodes[1..]
        .iter()
        .all(|n| canonical_hash(n, Abstraction::Exact) == first_exact)
    {
        return Ok(CloneType::Type1);
    }
    let first_abs = canonical_hash(nodes[0], Abstraction::Abstracted);
    if nodes[1..]
        .iter()
        .all(|n| canonical_hash(n, Abstraction::Abstracted) == first_abs)
    {
        return Ok(CloneType::Type2);
    }
    Ok(CloneType::Type3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::java::parse_source;

    fn detect(source: &str) -> CloneReport {
        let graph = parse_source(source, "v1").unwrap();
        detect_clones(&graph, &DetectionConfig::default()).unwrap()
    }

    // The `sync` methods are verbatim copies; the second method of each
    // class keeps the classes themselves dissimilar so only the method pair
    // groups.
    const TWINS: &str = r#"
        class A {
            void sync(int x) { total = total + x; count = count + 1; }
            void render() { frame.draw(shape, style); ticks = clock.now(); }
        }
        class B {
            void sync(int x) { total = total + x; count = count + 1; }
            void parse(int k) { head = table[k]; tail = head.next; link(head, tail); }
        }
    "#;

    #[test]
    fn verbatim_method_copies_form_a_type1_class() {
        let report = detect(TWINS);
        let methods: Vec<&CloneClass> = report
            .classes
            .iter()
            .filter(|c| c.granularity == NodeType::Method)
            .collect();
        assert_eq!(methods.len(), 1);
        assert_eq!(methods[0].clone_type, CloneType::Type1);
        assert_eq!(methods[0].members.len(), 2);
    }

    #[test]
    fn consistent_renames_form_a_type2_class() {
        let report = detect(
            r#"
            class A {
                void load(int n) { buf = buf + n; idx = idx + 1; }
                void save(int m) { out = out + m; pos = pos + 1; }
            }
            "#,
        );
        let class = report
            .classes
            .iter()
            .find(|c| c.granularity == NodeType::Method)
            .expect("renamed methods should group");
        assert_eq!(class.clone_type, CloneType::Type2);
    }

    #[test]
    fn near_misses_join_through_similarity_as_type3() {
        let report = detect(
            r#"
            class A {
                void load(int n) { buf = buf + n; idx = idx + 1; flag = 0; }
                void save(int n) { buf = buf + n; idx = idx + 1; flag = 0; log = log + 1; }
            }
            "#,
        );
        let class = report
            .classes
            .iter()
            .find(|c| c.granularity == NodeType::Method)
            .expect("near-miss methods should group");
        assert_eq!(class.clone_type, CloneType::Type3);
    }

    #[test]
    fn dissimilar_candidates_stay_unreported() {
        let report = detect(
            r#"
            class A {
                void load(int n) { buf = buf + n; idx = idx + 1; }
                void render() { frame.draw(shape, style); ticks = clock.now(); }
            }
            "#,
        );
        assert!(report.classes.is_empty());
    }

    #[test]
    fn tiny_subtrees_fall_under_the_mass_gate() {
        let report = detect(
            r#"
            class A {
                void a() { x = 1; }
                void b() { x = 1; }
            }
            "#,
        );
        assert!(report.classes.is_empty());
        let graph = parse_source(
            "class A { void a() { x = 1; } void b() { x = 1; } }",
            "v1",
        )
        .unwrap();
        let mut config = DetectionConfig::default();
        config.min_tokens = 4;
        let report = detect_clones(&graph, &config).unwrap();
        assert_eq!(report.classes.len(), 1);
    }

    #[test]
    fn members_nested_inside_reported_members_are_pruned() {
        // The methods are verbatim twins, so their bodies and inner blocks
        // duplicate too; only the outermost (method) class must survive.
        let report = detect(
            r#"
            class A {
                void first(int x) { if (x > 0) { total = total + x; hits = hits + 1; } }
                void second(int x) { if (x > 0) { total = total + x; hits = hits + 1; } }
            }
            "#,
        );
        assert_eq!(report.classes.len(), 1);
        assert_eq!(report.classes[0].granularity, NodeType::Method);
    }

    #[test]
    fn representative_carries_the_smallest_exact_digest() {
        let graph = parse_source(TWINS, "v1").unwrap();
        let report = detect_clones(&graph, &DetectionConfig::default()).unwrap();
        let class = &report.classes[0];
        let digests: Vec<Digest> = class
            .members
            .iter()
            .map(|&m| canonical_hash(graph.node(m).unwrap(), Abstraction::Exact))
            .collect();
        let rep_digest = canonical_hash(
            graph.node(class.representative).unwrap(),
            Abstraction::Exact,
        );
        assert!(digests.iter().all(|d| rep_digest <= *d));
        assert!(class.members.contains(&class.representative));
    }

    #[test]
    fn statement_granularity_is_opt_in() {
        // The shared statement sits in otherwise unrelated methods, so no
        // enclosing clone shadows it.
        let source = r#"
            class A {
                void a() { acc = acc + delta * scale + offset; m.alpha(p, q); r = r & 1; }
                void b() { acc = acc + delta * scale + offset; table[k] = fetch(k); emit(sum); }
            }
        "#;
        let graph = parse_source(source, "v1").unwrap();
        let default_report = detect_clones(&graph, &DetectionConfig::default()).unwrap();
        assert!(default_report
            .classes
            .iter()
            .all(|c| c.granularity != NodeType::Statement));

        let mut config = DetectionConfig::default();
        config.granularities.insert(NodeType::Statement);
        let report = detect_clones(&graph, &config).unwrap();
        assert!(report
            .classes
            .iter()
            .any(|c| c.granularity == NodeType::Statement));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let graph = parse_source("class A {}", "v1").unwrap();
        let mut config = DetectionConfig::default();
        config.theta = 1.5;
        assert!(detect_clones(&graph, &config).is_err());
        let mut config = DetectionConfig::default();
        config.granularities.clear();
        assert!(detect_clones(&graph, &config).is_err());
        let mut config = DetectionConfig::default();
        config.granularities.insert(NodeType::System);
        assert!(detect_clones(&graph, &config).is_err());
    }

    #[test]
    fn detection_is_deterministic_and_bound_invariant() {
        let source = r#"
            class A {
                void a(int x) { u = u + x; v = v + 1; w = w * 2; }
                void b(int y) { u = u + y; v = v + 1; w = w * 2; }
                void c(int z) { u = u + z; v = v + 1; w = w * 2; extra = 1; }
                void d() { alpha = beta.gamma(delta); eps = 0; zeta = eps; }
            }
        "#;
        let graph = parse_source(source, "v1").unwrap();
        let config = DetectionConfig::default();
        let first = detect_clones(&graph, &config).unwrap();
        let second = detect_clones(&graph, &config).unwrap();
        let unbounded = detect_clones_unbounded(&graph, &config).unwrap();
        assert_eq!(
            serde_json::to_string(&first).unwrap(),
            serde_json::to_string(&second).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&first).unwrap(),
            serde_json::to_string(&unbounded).unwrap()
        );
    }
}
