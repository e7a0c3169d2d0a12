//! The integrated platform: all variants superimposed on one tree.
//!
//! Every platform node records, per variant, the local content (label,
//! tokens, attributes) and the sibling position that variant saw. A node
//! absent from a variant simply has no entry for it, so the variant set of
//! a node doubles as its presence signature for feature synthesis.
//!
//! Variants fold in one at a time. Within each sibling group the incoming
//! children claim platform children through a four-tier ladder, each tier
//! consuming its matches before the next runs on the leftovers:
//!
//! 1. EXACT — the child's subtree digest equals some variant's view of a
//!    platform child (duplicate siblings align by rank, i-th to i-th);
//! 2. ABSTRACTED — same with rename-insensitive digests;
//! 3. LABEL — packages, classes and methods with an equal label;
//! 4. SIMILARITY — best pairwise similarity against any variant's view of
//!    the candidate, at or above the integration threshold.
//!
//! INSTANCE_REF children additionally only ever match platform nodes bound
//! to the same component, keeping instance nodes component-pure. Unclaimed
//! incoming children start new platform subtrees.
//!
//! [`IntegratedPlatform::canonicalize`] re-sorts every sibling group by a
//! content digest and renumbers pids in pre-order, which makes the
//! [`IntegratedPlatform::canonical_form`] document byte-comparable across
//! integration runs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::components::ConfigurableComponent;
use crate::condition::Condition;
use crate::error::{Error, Result};
use crate::graph::{valid_variant_id, ArtifactGraph, ArtifactNode, NodeId, NodeType};
use crate::hash::{abstracted_hash_map, exact_hash_map, type_tag, Digest};
use crate::mining::mine_taxonomy;
use crate::similarity::node_similarity;

/// What one variant stores at a platform node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalContent {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl LocalContent {
    fn of(node: &ArtifactNode) -> LocalContent {
        LocalContent {
            label: node.label.clone(),
            tokens: node.tokens.clone(),
            attributes: node.attributes.clone(),
        }
    }
}

/// One node of the integrated platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformNode {
    pub pid: NodeId,
    #[serde(rename = "type")]
    pub node_type: NodeType,
    /// Per-variant content; the key set is the node's presence signature.
    pub contents: BTreeMap<String, LocalContent>,
    /// Per-variant sibling position, used to restore each variant's order.
    pub ordering: BTreeMap<String, u32>,
    /// Presence condition attached by feature annotation, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<PlatformNode>,
}

impl PlatformNode {
    /// Variants this node is present in.
    pub fn variant_set(&self) -> BTreeSet<&str> {
        self.contents.keys().map(|s| s.as_str()).collect()
    }

    /// Pre-order traversal of this subtree.
    pub fn walk(&self) -> impl Iterator<Item = &PlatformNode> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let node = stack.pop()?;
            for child in node.children.iter().rev() {
                stack.push(child);
            }
            Some(node)
        })
    }

    fn walk_mut_apply(&mut self, f: &mut impl FnMut(&mut PlatformNode)) {
        f(self);
        for child in &mut self.children {
            child.walk_mut_apply(f);
        }
    }

    /// Reconstructs this subtree as `variant` sees it: present children
    /// only, in that variant's order, with that variant's content. Node ids
    /// carry the pids. Returns `None` when the node is absent from the
    /// variant.
    pub fn variant_subtree(&self, variant: &str) -> Option<ArtifactNode> {
        let content = self.contents.get(variant)?;
        let mut children: Vec<(u32, ArtifactNode)> = self
            .children
            .iter()
            .filter_map(|c| {
                c.variant_subtree(variant)
                    .map(|node| (c.ordering.get(variant).copied().unwrap_or(u32::MAX), node))
            })
            .collect();
        children.sort_by_key(|&(key, _)| key);
        Some(ArtifactNode {
            id: self.pid,
            node_type: self.node_type,
            label: content.label.clone(),
            tokens: content.tokens.clone(),
            attributes: content.attributes.clone(),
            children: children.into_iter().map(|(_, n)| n).collect(),
        })
    }

    /// The component an INSTANCE_REF node is bound to, if any content says.
    fn component_id(&self) -> Option<&str> {
        self.contents
            .values()
            .find_map(|c| c.attributes.get("component"))
            .map(|s| s.as_str())
    }

    fn from_variant(node: &ArtifactNode, variant: &str, sibling: u32, next_pid: &mut u32) -> Self {
        let pid = NodeId(*next_pid);
        *next_pid += 1;
        PlatformNode {
            pid,
            node_type: node.node_type,
            contents: BTreeMap::from([(variant.to_string(), LocalContent::of(node))]),
            ordering: BTreeMap::from([(variant.to_string(), sibling)]),
            condition: None,
            children: node
                .children
                .iter()
                .enumerate()
                .map(|(i, c)| PlatformNode::from_variant(c, variant, i as u32, next_pid))
                .collect(),
        }
    }

    /// Deterministic sort key among siblings, independent of pid assignment:
    /// earliest position any variant gives the node, then the full ordering
    /// map.
    fn rank_key(&self) -> (u32, Vec<(&str, u32)>) {
        let min = self.ordering.values().copied().min().unwrap_or(u32::MAX);
        let map: Vec<(&str, u32)> = self
            .ordering
            .iter()
            .map(|(v, &k)| (v.as_str(), k))
            .collect();
        (min, map)
    }
}

/// How [`integrate_all`] orders the variants it folds in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationOrder {
    /// Use the order the variants were supplied in.
    Given,
    /// Mine the variant taxonomy and integrate along it, most similar first.
    Taxonomy,
}

/// A set of variants superimposed on one tree, plus the component library
/// their INSTANCE_REF leaves point into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedPlatform {
    /// Variant ids in integration order.
    pub variants: Vec<String>,
    pub components: BTreeMap<String, ConfigurableComponent>,
    pub root: PlatformNode,
}

impl IntegratedPlatform {
    /// Seeds a platform from a single variant.
    pub fn from_variant(graph: &ArtifactGraph) -> IntegratedPlatform {
        let mut next_pid = 0;
        IntegratedPlatform {
            variants: vec![graph.variant_id().to_string()],
            components: BTreeMap::new(),
            root: PlatformNode::from_variant(graph.root(), graph.variant_id(), 0, &mut next_pid),
        }
    }

    fn max_pid(&self) -> u32 {
        self.root.walk().map(|n| n.pid.0).max().unwrap_or(0)
    }

    /// Looks a node up by pid.
    pub fn node(&self, pid: NodeId) -> Option<&PlatformNode> {
        self.root.walk().find(|n| n.pid == pid)
    }

    /// Folds another variant into the platform. `theta` is the similarity
    /// threshold for the last matching tier.
    pub fn integrate_variant(&mut self, graph: &ArtifactGraph, theta: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidParameter(format!(
                "integration threshold must lie in [0, 1], got {theta}"
            )));
        }
        let variant = graph.variant_id().to_string();
        if self.variants.iter().any(|v| *v == variant) {
            return Err(Error::DuplicateVariant(variant));
        }
        if self.root.node_type != graph.root().node_type {
            return Err(Error::Structure {
                node: "root".into(),
                message: format!(
                    "cannot integrate a {} root into a {} platform",
                    graph.root().node_type,
                    self.root.node_type
                ),
            });
        }

        // Subtree digests of every variant's view of every platform node.
        let mut member_exact: HashMap<u32, BTreeSet<Digest>> = HashMap::new();
        let mut member_abstract: HashMap<u32, BTreeSet<Digest>> = HashMap::new();
        for v in &self.variants {
            let view = self
                .root
                .variant_subtree(v)
                .expect("every integrated variant reaches the root");
            for (id, digest) in exact_hash_map(&view) {
                member_exact.entry(id.0).or_default().insert(digest);
            }
            for (id, digest) in abstracted_hash_map(&view) {
                member_abstract.entry(id.0).or_default().insert(digest);
            }
        }

        let mut ctx = MatchCtx {
            variant: variant.clone(),
            theta,
            v_exact: exact_hash_map(graph.root()),
            v_abstract: abstracted_hash_map(graph.root()),
            member_exact,
            member_abstract,
            next_pid: self.max_pid() + 1,
        };

        // Roots of two variants of one system always correspond.
        merge_node(&mut self.root, graph.root(), 0, &mut ctx);
        self.variants.push(variant);
        Ok(())
    }

    /// Attaches a presence condition to the given platform nodes. Condition
    /// names must come from `known_features`.
    pub fn annotate_feature(
        &mut self,
        pids: &[NodeId],
        condition: &Condition,
        known_features: &BTreeSet<String>,
    ) -> Result<()> {
        for name in condition.names() {
            if !known_features.contains(name) {
                return Err(Error::UnknownFeature(name.to_string()));
            }
        }
        let targets: BTreeSet<NodeId> = pids.iter().copied().collect();
        let mut found: BTreeSet<NodeId> = BTreeSet::new();
        self.root.walk_mut_apply(&mut |node| {
            if targets.contains(&node.pid) {
                node.condition = Some(condition.clone());
                found.insert(node.pid);
            }
        });
        if let Some(missing) = targets.difference(&found).next() {
            return Err(Error::UnknownNode(missing.0));
        }
        Ok(())
    }

    /// Restores one variant exactly as it was integrated, with INSTANCE_REF
    /// leaves expanded back into full subtrees.
    pub fn derive_variant(&self, variant_id: &str) -> Result<ArtifactGraph> {
        if !self.variants.iter().any(|v| v == variant_id) {
            return Err(Error::UnknownVariant(variant_id.to_string()));
        }
        let root = self
            .root
            .variant_subtree(variant_id)
            .expect("integrated variants reach the root");
        let graph = ArtifactGraph::with_preorder_ids(variant_id, root)?;
        crate::components::expand_all(&graph, &self.components)
    }

    /// Sorts every sibling group by content digest and renumbers pids in
    /// pre-order, making structurally equal platforms compare equal.
    pub fn canonicalize(&mut self) {
        canonical_sort(&mut self.root);
        let mut next = 0;
        self.root.walk_mut_apply(&mut |node| {
            node.pid = NodeId(next);
            next += 1;
        });
    }

    /// Deterministic, pid-free rendering of the platform. Two platforms
    /// integrating the same variant set the same way produce byte-identical
    /// canonical forms regardless of integration order.
    pub fn canonical_form(&self) -> String {
        let mut sorted = self.clone();
        sorted.canonicalize();
        let doc = CanonicalDoc {
            variants: {
                let mut v = sorted.variants.clone();
                v.sort_unstable();
                v
            },
            components: &sorted.components,
            root: CanonicalNode::of(&sorted.root),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("platform serializes");
        text.push('\n');
        text
    }

    /// Serializes the full platform document, pids included.
    pub fn to_document(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("platform serializes");
        text.push('\n');
        text
    }

    /// Parses a platform document and validates its structure.
    pub fn from_document(text: &str) -> Result<IntegratedPlatform> {
        let platform: IntegratedPlatform = serde_json::from_str(text)
            .map_err(|e| Error::parse(e.line(), e.column(), e.to_string()))?;
        platform.validate()?;
        Ok(platform)
    }

    /// Structural checks for documents arriving from outside: unique pids,
    /// declared variants, contents and orderings in step.
    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::InvalidParameter(
                "a platform must hold at least one variant".into(),
            ));
        }
        let mut ids = BTreeSet::new();
        for v in &self.variants {
            if !valid_variant_id(v) {
                return Err(Error::InvalidParameter(format!("invalid variant id {v:?}")));
            }
            if !ids.insert(v.as_str()) {
                return Err(Error::DuplicateVariant(v.clone()));
            }
        }
        let mut pids = BTreeSet::new();
        for node in self.root.walk() {
            if !pids.insert(node.pid) {
                return Err(Error::structure(node.pid.0, "duplicate pid"));
            }
            if node.contents.is_empty() {
                return Err(Error::structure(node.pid.0, "node has no variant content"));
            }
            for v in node.contents.keys() {
                if !ids.contains(v.as_str()) {
                    return Err(Error::UnknownVariant(v.clone()));
                }
                if !node.ordering.contains_key(v) {
                    return Err(Error::structure(
                        node.pid.0,
                        format!("missing ordering key for variant {v}"),
                    ));
                }
            }
            for v in node.ordering.keys() {
                if !node.contents.contains_key(v) {
                    return Err(Error::structure(
                        node.pid.0,
                        format!("ordering key for absent variant {v}"),
                    ));
                }
            }
        }
        for v in &self.variants {
            if !self.root.contents.contains_key(v) {
                return Err(Error::structure(
                    self.root.pid.0,
                    format!("variant {v} is missing from the root"),
                ));
            }
        }
        Ok(())
    }
}

/// Integrates a set of refactored variants into one platform.
pub fn integrate_all(
    graphs: &[ArtifactGraph],
    components: BTreeMap<String, ConfigurableComponent>,
    theta: f64,
    order: IntegrationOrder,
) -> Result<IntegratedPlatform> {
    if graphs.is_empty() {
        return Err(Error::InvalidParameter(
            "integration needs at least one variant".into(),
        ));
    }
    let sequence: Vec<&ArtifactGraph> = match order {
        IntegrationOrder::Given => graphs.iter().collect(),
        IntegrationOrder::Taxonomy => {
            let taxonomy = mine_taxonomy(graphs)?;
            taxonomy
                .order
                .iter()
                .map(|id| {
                    graphs
                        .iter()
                        .find(|g| g.variant_id() == id)
                        .expect("taxonomy orders the given variants")
                })
                .collect()
        }
    };
    let mut platform = IntegratedPlatform::from_variant(sequence[0]);
    platform.components = components;
    for graph in &sequence[1..] {
        platform.integrate_variant(graph, theta)?;
    }
    platform.canonicalize();
    Ok(platform)
}

// ---------------------------------------------------------------------------
// Matching
// ---------------------------------------------------------------------------

struct MatchCtx {
    variant: String,
    theta: f64,
    v_exact: HashMap<NodeId, Digest>,
    v_abstract: HashMap<NodeId, Digest>,
    member_exact: HashMap<u32, BTreeSet<Digest>>,
    member_abstract: HashMap<u32, BTreeSet<Digest>>,
    next_pid: u32,
}

/// Merges a variant node into the platform node it matched: record content
/// and position, then match the children.
fn merge_node(p: &mut PlatformNode, v: &ArtifactNode, sibling: u32, ctx: &mut MatchCtx) {
    p.contents
        .insert(ctx.variant.clone(), LocalContent::of(v));
    p.ordering.insert(ctx.variant.clone(), sibling);
    match_children(p, v, ctx);
}

fn match_children(p: &mut PlatformNode, v: &ArtifactNode, ctx: &mut MatchCtx) {
    let p_count = p.children.len();
    let v_count = v.children.len();
    let mut p_free: Vec<bool> = vec![true; p_count];
    let mut v_partner: Vec<Option<usize>> = vec![None; v_count];

    // Incoming children are processed by (exact digest, sibling index) in
    // the hash tiers; duplicate digests then align by rank on both sides.
    let v_order: Vec<usize> = {
        let mut idx: Vec<usize> = (0..v_count).collect();
        idx.sort_by_key(|&j| (ctx.v_exact[&v.children[j].id], j));
        idx
    };

    // A platform child is only eligible for an INSTANCE_REF newcomer when it
    // is bound to the same component (and vice versa).
    let instance_guard = |p_child: &PlatformNode, v_child: &ArtifactNode| -> bool {
        if v_child.node_type != NodeType::InstanceRef {
            return true;
        }
        match (
            p_child.component_id(),
            v_child.attributes.get("component"),
        ) {
            (Some(pc), Some(vc)) => pc == vc,
            _ => false,
        }
    };

    // Tier 1 and 2: digest membership with rank alignment.
    for abstraction in [0, 1] {
        let (v_digests, member): (&HashMap<NodeId, Digest>, &HashMap<u32, BTreeSet<Digest>>) =
            if abstraction == 0 {
                (&ctx.v_exact, &ctx.member_exact)
            } else {
                (&ctx.v_abstract, &ctx.member_abstract)
            };
        // Group unmatched newcomers by digest, in digest order.
        let mut groups: BTreeMap<Digest, Vec<usize>> = BTreeMap::new();
        for &j in &v_order {
            if v_partner[j].is_none() {
                groups.entry(v_digests[&v.children[j].id]).or_default().push(j);
            }
        }
        for (digest, group) in groups {
            let mut candidates: Vec<usize> = (0..p_count)
                .filter(|&i| {
                    p_free[i]
                        && p.children[i].node_type == v.children[group[0]].node_type
                        && member
                            .get(&p.children[i].pid.0)
                            .is_some_and(|set| set.contains(&digest))
                        && instance_guard(&p.children[i], &v.children[group[0]])
                })
                .collect();
            candidates.sort_by(|&a, &b| {
                p.children[a]
                    .rank_key()
                    .cmp(&p.children[b].rank_key())
                    .then(a.cmp(&b))
            });
            for (slot, &j) in group.iter().enumerate() {
                if let Some(&i) = candidates.get(slot) {
                    p_free[i] = false;
                    v_partner[j] = Some(i);
                }
            }
        }
    }

    // Tier 3: label identity for named containers.
    for &j in &v_order {
        if v_partner[j].is_some() {
            continue;
        }
        let v_child = &v.children[j];
        if !matches!(
            v_child.node_type,
            NodeType::Package | NodeType::Class | NodeType::Method
        ) {
            continue;
        }
        let mut candidates: Vec<usize> = (0..p_count)
            .filter(|&i| {
                p_free[i]
                    && p.children[i].node_type == v_child.node_type
                    && p.children[i]
                        .contents
                        .values()
                        .any(|c| c.label == v_child.label)
            })
            .collect();
        candidates.sort_by(|&a, &b| {
            p.children[a]
                .rank_key()
                .cmp(&p.children[b].rank_key())
                .then(a.cmp(&b))
        });
        if let Some(&i) = candidates.first() {
            p_free[i] = false;
            v_partner[j] = Some(i);
        }
    }

    // Tier 4: best similarity against any variant's view of a candidate.
    for &j in &v_order {
        if v_partner[j].is_some() {
            continue;
        }
        let v_child = &v.children[j];
        let mut best: Option<(f64, usize)> = None;
        for i in 0..p_count {
            if !p_free[i]
                || p.children[i].node_type != v_child.node_type
                || !instance_guard(&p.children[i], v_child)
            {
                continue;
            }
            let p_child = &p.children[i];
            let score = p_child
                .contents
                .keys()
                .filter_map(|variant| p_child.variant_subtree(variant))
                .map(|view| node_similarity(&view, v_child))
                .fold(f64::NEG_INFINITY, f64::max);
            if score < ctx.theta {
                continue;
            }
            let better = match best {
                None => true,
                Some((s, bi)) => {
                    score > s
                        || (score == s
                            && p.children[i].rank_key() < p.children[bi].rank_key())
                }
            };
            if better {
                best = Some((score, i));
            }
        }
        if let Some((_, i)) = best {
            p_free[i] = false;
            v_partner[j] = Some(i);
        }
    }

    // Apply: merge matched pairs in variant order, append the rest as new
    // platform subtrees.
    for (j, v_child) in v.children.iter().enumerate() {
        match v_partner[j] {
            Some(i) => merge_node(&mut p.children[i], v_child, j as u32, ctx),
            None => {
                let node = PlatformNode::from_variant(
                    v_child,
                    &ctx.variant,
                    j as u32,
                    &mut ctx.next_pid,
                );
                p.children.push(node);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Canonical ordering and the canonical form
// ---------------------------------------------------------------------------

/// Sorts children bottom-up by a content digest that ignores pids, and
/// returns this node's digest.
fn canonical_sort(node: &mut PlatformNode) -> Digest {
    let mut keyed: Vec<(Digest, PlatformNode)> = std::mem::take(&mut node.children)
        .into_iter()
        .map(|mut c| (canonical_sort(&mut c), c))
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));

    let mut hasher = Sha256::new();
    hasher.update([type_tag(node.node_type)]);
    hasher.update((node.contents.len() as u32).to_le_bytes());
    for (variant, content) in &node.contents {
        feed(&mut hasher, variant);
        feed(&mut hasher, &content.label);
        hasher.update((content.tokens.len() as u32).to_le_bytes());
        for t in &content.tokens {
            feed(&mut hasher, t);
        }
        hasher.update((content.attributes.len() as u32).to_le_bytes());
        for (k, value) in &content.attributes {
            feed(&mut hasher, k);
            feed(&mut hasher, value);
        }
    }
    hasher.update((node.ordering.len() as u32).to_le_bytes());
    for (variant, key) in &node.ordering {
        feed(&mut hasher, variant);
        hasher.update(key.to_le_bytes());
    }
    match &node.condition {
        Some(c) => feed(&mut hasher, &c.to_string()),
        None => feed(&mut hasher, ""),
    }
    hasher.update((keyed.len() as u32).to_le_bytes());
    for (digest, child) in keyed {
        hasher.update(digest.0);
        node.children.push(child);
    }
    Digest(hasher.finalize().into())
}

fn feed(hasher: &mut Sha256, text: &str) {
    hasher.update((text.len() as u32).to_le_bytes());
    hasher.update(text.as_bytes());
}

#[derive(Serialize)]
struct CanonicalDoc<'a> {
    variants: Vec<String>,
    components: &'a BTreeMap<String, ConfigurableComponent>,
    root: CanonicalNode<'a>,
}

#[derive(Serialize)]
struct CanonicalNode<'a> {
    #[serde(rename = "type")]
    node_type: NodeType,
    contents: &'a BTreeMap<String, LocalContent>,
    ordering: &'a BTreeMap<String, u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    condition: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    children: Vec<CanonicalNode<'a>>,
}

impl<'a> CanonicalNode<'a> {
    fn of(node: &'a PlatformNode) -> CanonicalNode<'a> {
        CanonicalNode {
            node_type: node.node_type,
            contents: &node.contents,
            ordering: &node.ordering,
            condition: node.condition.as_ref().map(|c| c.to_string()),
            children: node.children.iter().map(CanonicalNode::of).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clones::{detect_clones, DetectionConfig};
    use crate::components::refactor_graph;
    use crate::condition::parse_condition;
    use crate::java::parse_source;

    const THETA: f64 = 0.75;

    fn graph(variant: &str, source: &str) -> ArtifactGraph {
        parse_source(source, variant).unwrap()
    }

    fn integrate(graphs: &[ArtifactGraph]) -> IntegratedPlatform {
        integrate_all(graphs, BTreeMap::new(), THETA, IntegrationOrder::Given).unwrap()
    }

    #[test]
    fn duplicate_variants_are_rejected() {
        let a = graph("same", "class A { }");
        let b = graph("same", "class A { }");
        let mut platform = IntegratedPlatform::from_variant(&a);
        assert!(matches!(
            platform.integrate_variant(&b, THETA),
            Err(Error::DuplicateVariant(_))
        ));
    }

    #[test]
    fn identical_variants_overlay_completely() {
        let source = "class A { void m(int x) { y = x + 1; emit(y); } }";
        let a = graph("a", source);
        let b = graph("b", source);
        let platform = integrate(&[a.clone(), b]);
        assert_eq!(platform.root.walk().count(), a.node_count());
        assert!(platform
            .root
            .walk()
            .all(|n| n.contents.len() == 2 && n.ordering.len() == 2));
    }

    #[test]
    fn derived_variants_reproduce_their_originals() {
        let a = graph(
            "a",
            "class A { void m() { x = 1; y = 2; } void n() { z = 3; } }",
        );
        let b = graph(
            "b",
            "class A { void n() { z = 3; } void extra() { fetch(url); } }",
        );
        let platform = integrate(&[a.clone(), b.clone()]);
        let da = platform.derive_variant("a").unwrap();
        let db = platform.derive_variant("b").unwrap();
        assert!(da.root().content_eq(a.root()), "{:?}", da.root().first_difference(a.root()));
        assert!(db.root().content_eq(b.root()), "{:?}", db.root().first_difference(b.root()));
    }

    #[test]
    fn sibling_order_is_restored_per_variant() {
        let a = graph("a", "class A { void m() { x = 1; } void n() { y = 2; } }");
        let b = graph("b", "class A { void n() { y = 2; } void m() { x = 1; } }");
        let platform = integrate(&[a.clone(), b.clone()]);
        // Both methods merge, so the platform holds one class with two
        // method children.
        let class = &platform.root.children[0];
        assert_eq!(class.children.len(), 2);
        let da = platform.derive_variant("a").unwrap();
        let db = platform.derive_variant("b").unwrap();
        assert!(da.root().content_eq(a.root()));
        assert!(db.root().content_eq(b.root()));
    }

    #[test]
    fn duplicate_siblings_align_by_rank() {
        // Two verbatim-identical methods per variant must merge pairwise,
        // not fan out into three or four platform nodes.
        let source = "class A { void m() { tick(); } void m() { tick(); } }";
        let a = graph("a", source);
        let b = graph("b", source);
        let platform = integrate(&[a.clone(), b.clone()]);
        let class = &platform.root.children[0];
        assert_eq!(class.children.len(), 2);
        assert!(class.children.iter().all(|c| c.contents.len() == 2));
        assert!(platform.derive_variant("b").unwrap().root().content_eq(b.root()));
    }

    #[test]
    fn renamed_methods_merge_through_the_abstracted_tier() {
        let a = graph("a", "class A { void m(int x) { buf = buf + x; idx = idx + 1; } }");
        let b = graph("b", "class A { void m(int y) { out = out + y; pos = pos + 1; } }");
        let platform = integrate(&[a.clone(), b.clone()]);
        assert_eq!(platform.root.walk().count(), a.node_count());
        assert!(platform.derive_variant("a").unwrap().root().content_eq(a.root()));
        assert!(platform.derive_variant("b").unwrap().root().content_eq(b.root()));
    }

    #[test]
    fn classes_with_equal_names_merge_through_the_label_tier() {
        // Bodies differ beyond renaming, but the class name pins them
        // together; the statements inside split per variant.
        let a = graph("a", "class Store { void put(int k) { table[k] = k; } }");
        let b = graph(
            "b",
            "class Store { void get() { fetch(index, cache); report(hits, misses, total); } }",
        );
        let platform = integrate(&[a.clone(), b.clone()]);
        let classes: Vec<&PlatformNode> = platform
            .root
            .walk()
            .filter(|n| n.node_type == NodeType::Class)
            .collect();
        assert_eq!(classes.len(), 1);
        assert_eq!(classes[0].contents.len(), 2);
        assert!(platform.derive_variant("a").unwrap().root().content_eq(a.root()));
        assert!(platform.derive_variant("b").unwrap().root().content_eq(b.root()));
    }

    #[test]
    fn near_identical_statements_merge_through_the_similarity_tier() {
        let a = graph("a", "class A { void m() { total = total + price + tax; } }");
        let b = graph("b", "class A { void m() { total = total + price; } }");
        let platform = integrate(&[a.clone(), b.clone()]);
        let statements: Vec<&PlatformNode> = platform
            .root
            .walk()
            .filter(|n| n.node_type == NodeType::Statement)
            .collect();
        assert_eq!(statements.len(), 1);
        assert_eq!(statements[0].contents.len(), 2);
        assert!(platform.derive_variant("a").unwrap().root().content_eq(a.root()));
        assert!(platform.derive_variant("b").unwrap().root().content_eq(b.root()));
    }

    #[test]
    fn unmatched_children_open_new_subtrees() {
        let a = graph("a", "class A { void m() { x = 1; } }");
        let b = graph("b", "class A { void m() { x = 1; } void solo() { y = 2; } }");
        let platform = integrate(&[a, b]);
        let solo = platform
            .root
            .walk()
            .find(|n| n.contents.values().any(|c| c.label == "void solo()"))
            .expect("unmatched method lands in the platform");
        assert_eq!(solo.variant_set().into_iter().collect::<Vec<_>>(), vec!["b"]);
    }

    #[test]
    fn canonical_form_is_integration_order_invariant() {
        let sources = [
            ("a", "class A { void m() { x = 1; y = 2; } }"),
            ("b", "class A { void m() { x = 1; y = 3; } }"),
            ("c", "class A { void m() { x = 1; } void n() { k = 9; } }"),
        ];
        let graphs: Vec<ArtifactGraph> =
            sources.iter().map(|(v, s)| graph(v, s)).collect();
        let forward = integrate(&graphs);
        let mut reversed: Vec<ArtifactGraph> = graphs.clone();
        reversed.reverse();
        let backward = integrate(&reversed);
        assert_eq!(forward.canonical_form(), backward.canonical_form());
    }

    #[test]
    fn canonical_form_hides_pids_and_sorts_variants() {
        let a = graph("a", "class A { }");
        let b = graph("b", "class B { }");
        let platform = integrate(&[b, a]);
        let form = platform.canonical_form();
        assert!(!form.contains("pid"));
        let va = form.find("\"a\"").unwrap();
        let vb = form.find("\"b\"").unwrap();
        assert!(va < vb);
    }

    #[test]
    fn documents_round_trip() {
        let a = graph("a", "class A { void m() { x = 1; } }");
        let b = graph("b", "class A { void m() { x = 2; } }");
        let mut platform = integrate(&[a, b]);
        let features: BTreeSet<String> = ["F1".to_string()].into();
        let pid = platform
            .root
            .walk()
            .find(|n| n.node_type == NodeType::Statement)
            .unwrap()
            .pid;
        platform
            .annotate_feature(&[pid], &parse_condition("!F1").unwrap(), &features)
            .unwrap();
        let text = platform.to_document();
        let restored = IntegratedPlatform::from_document(&text).unwrap();
        assert_eq!(platform, restored);
        assert_eq!(text, restored.to_document());
    }

    #[test]
    fn malformed_documents_are_rejected() {
        assert!(matches!(
            IntegratedPlatform::from_document("{"),
            Err(Error::Parse { .. })
        ));
        let a = graph("a", "class A { }");
        let platform = IntegratedPlatform::from_variant(&a);
        let mut broken = platform.clone();
        broken.root.ordering.insert("ghost".into(), 0);
        let text = broken.to_document();
        assert!(IntegratedPlatform::from_document(&text).is_err());
    }

    #[test]
    fn deriving_an_unknown_variant_fails() {
        let a = graph("a", "class A { }");
        let platform = IntegratedPlatform::from_variant(&a);
        assert!(matches!(
            platform.derive_variant("nope"),
            Err(Error::UnknownVariant(_))
        ));
    }

    #[test]
    fn annotation_validates_nodes_and_names() {
        let a = graph("a", "class A { }");
        let mut platform = IntegratedPlatform::from_variant(&a);
        let features: BTreeSet<String> = ["F1".to_string()].into();
        let condition = parse_condition("F1").unwrap();
        assert!(matches!(
            platform.annotate_feature(&[NodeId(999)], &condition, &features),
            Err(Error::UnknownNode(999))
        ));
        let unknown = parse_condition("F9").unwrap();
        assert!(matches!(
            platform.annotate_feature(&[platform.root.pid], &unknown, &features),
            Err(Error::UnknownFeature(_))
        ));
    }

    #[test]
    fn refactored_variants_round_trip_through_the_platform() {
        let sources = [
            (
                "a",
                "class A {
                    void load(int n) { buf = buf + n; idx = idx + 1; }
                    void save(int m) { out = out + m; pos = pos + 1; }
                 }",
            ),
            (
                "b",
                "class A {
                    void load(int n) { buf = buf + n; idx = idx + 1; }
                    void stat() { report(hits, misses); }
                 }",
            ),
        ];
        let originals: Vec<ArtifactGraph> =
            sources.iter().map(|(v, s)| graph(v, s)).collect();
        let mut refactored = Vec::new();
        let mut components = BTreeMap::new();
        for original in &originals {
            let report = detect_clones(original, &DetectionConfig::default()).unwrap();
            let outcome = refactor_graph(original, &report).unwrap();
            components.extend(outcome.components.clone());
            refactored.push(outcome.graph);
        }
        let platform =
            integrate_all(&refactored, components, THETA, IntegrationOrder::Given).unwrap();
        for original in &originals {
            let derived = platform.derive_variant(original.variant_id()).unwrap();
            assert!(
                derived.root().content_eq(original.root()),
                "{:?}",
                derived.root().first_difference(original.root())
            );
        }
    }

    #[test]
    fn taxonomy_order_integrates_most_similar_first() {
        let a = graph("a", "class A { void m() { x = 1; y = 2; z = 3; } }");
        let b = graph("b", "class A { void m() { x = 1; y = 2; z = 9; } }");
        let c = graph("c", "class A { void m() { q = 7; } void n() { r = 8; } }");
        let given = integrate_all(
            &[c.clone(), a.clone(), b.clone()],
            BTreeMap::new(),
            THETA,
            IntegrationOrder::Taxonomy,
        )
        .unwrap();
        assert_eq!(given.variants[0], "a");
        assert_eq!(given.variants[1], "b");
        for g in [&a, &b, &c] {
            assert!(given
                .derive_variant(g.variant_id())
                .unwrap()
                .root()
                .content_eq(g.root()));
        }
    }

    #[test]
    fn instance_refs_only_merge_within_their_component() {
        use crate::components::{instance_ref_node, Binding};
        // Two variants, each with an INSTANCE_REF leaf bound to a different
        // component: the platform must keep them apart even though their
        // abstracted digests coincide.
        let mut binding = Binding::default();
        binding.parameters.insert("P1".into(), "x".into());
        let mut leaf_a = instance_ref_node("Caaaaaaaaaaaa", &binding);
        let mut leaf_b = instance_ref_node("Cbbbbbbbbbbbb", &binding);
        let make = |leaf: &mut ArtifactNode, variant: &str| -> ArtifactGraph {
            leaf.id = NodeId(0);
            let block = ArtifactNode::inner(NodeType::Block, "", vec![leaf.clone()]);
            let method = ArtifactNode::inner(NodeType::Method, "void m()", vec![block]);
            let class = ArtifactNode::inner(NodeType::Class, "A", vec![method]);
            let system = ArtifactNode::inner(NodeType::System, "", vec![class]);
            ArtifactGraph::with_preorder_ids(variant, system).unwrap()
        };
        let a = make(&mut leaf_a, "a");
        let b = make(&mut leaf_b, "b");
        let platform = integrate(&[a, b]);
        let refs: Vec<&PlatformNode> = platform
            .root
            .walk()
            .filter(|n| n.node_type == NodeType::InstanceRef)
            .collect();
        assert_eq!(refs.len(), 2);
        assert!(refs.iter().all(|r| r.contents.len() == 1));
    }
}
