//! Configurable components: folding a clone class into one parameterized
//! template, and expanding instances back out.
//!
//! The members of a clone class are folded into the representative's subtree
//! one by one. Children align with an order-preserving DP alignment (exact
//! duplicates preferred, then slot-compatible pairs); nodes only some members
//! have become *optional* nodes, and token positions where members disagree
//! become *parameter slots* written as `$P<k>` tokens. Identifier slots are
//! shared across the subtree when every member renames them consistently
//! (one slot per renamed name); literal slots are always per position.
//! Labels participate through their token forms, which is why labels must be
//! renderer-stable before they can host a slot.
//!
//! Every member is then representable as the template plus a binding
//! (parameter values + optional-node switches), and extraction verifies that
//! by expanding each binding and comparing against the original subtree.
//! Component ids are derived from template content, so equal extractions
//! from different variants collide on purpose and merge during integration.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::clones::{CloneClass, CloneReport};
use crate::error::{Error, Result};
use crate::graph::{ArtifactGraph, ArtifactNode, NodeId, NodeType};
use crate::hash::{canonical_hash, Abstraction, Digest};
use crate::lex::{classify, render_tokens, renderer_stable, tokenize_text, TokenClass};

/// A parameterized, reusable subtree extracted from a clone class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigurableComponent {
    /// Content-derived id: `C` + 12 hex digits.
    pub component_id: String,
    /// Template tree with `$P<k>` slot markers; ids are pre-order.
    pub template: ArtifactNode,
    /// Slot names in introduction order: `P1`, `P2`, ...
    pub parameters: Vec<String>,
    /// Template node ids that at least one member omits.
    pub optional_nodes: BTreeSet<NodeId>,
    /// The representative's binding; used when a derivation does not pick
    /// values itself.
    pub canonical: Binding,
}

/// Values for one expansion of a component.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Binding {
    /// Slot name to token value.
    pub parameters: BTreeMap<String, String>,
    /// Optional template node id to include/exclude decision.
    pub optionals: BTreeMap<NodeId, bool>,
}

/// Where a component instance came from and how to rebuild it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentInstance {
    pub component_id: String,
    /// The clone-class member this instance replaced.
    pub member: NodeId,
    pub binding: Binding,
}

/// Result of refactoring one variant: the graph with clone members replaced
/// by INSTANCE_REF leaves, plus the component library and instance list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefactoredVariant {
    pub graph: ArtifactGraph,
    pub components: BTreeMap<String, ConfigurableComponent>,
    pub instances: Vec<ComponentInstance>,
}

const COMPONENT_KEY: &str = "component";
const PARAM_PREFIX: &str = "param.";
const OPT_PREFIX: &str = "opt.";

/// Marker token for slot `name` (e.g. `$P3`).
fn marker(name: &str) -> String {
    format!("${name}")
}

fn parse_marker(token: &str) -> Option<&str> {
    token.strip_prefix('$').filter(|rest| {
        rest.starts_with('P') && rest[1..].chars().all(|c| c.is_ascii_digit()) && rest.len() > 1
    })
}

// ---------------------------------------------------------------------------
// Template folding
// ---------------------------------------------------------------------------

/// Mutable template node during folding. `label_tokens` is the tokenized
/// base label; overrides map member index -> differing token, keyed by
/// position.
struct TNode {
    node_type: NodeType,
    attributes: BTreeMap<String, String>,
    label_tokens: Vec<String>,
    label_raw: String,
    tokens: Vec<String>,
    label_overrides: Vec<BTreeMap<usize, String>>,
    token_overrides: Vec<BTreeMap<usize, String>>,
    presence: Vec<bool>,
    children: Vec<TNode>,
}

impl TNode {
    fn from_member(node: &ArtifactNode, member_count: usize, member_index: usize) -> TNode {
        let label_tokens = tokenize_text(&node.label);
        let mut presence = vec![false; member_count];
        presence[member_index] = true;
        TNode {
            node_type: node.node_type,
            attributes: node.attributes.clone(),
            label_overrides: vec![BTreeMap::new(); label_tokens.len()],
            label_tokens,
            label_raw: node.label.clone(),
            token_overrides: vec![BTreeMap::new(); node.tokens.len()],
            tokens: node.tokens.clone(),
            presence,
            children: node
                .children
                .iter()
                .map(|c| TNode::from_member(c, member_count, member_index))
                .collect(),
        }
    }
}

/// Checks whether `member` can fold onto template node `t`: same type, same
/// attributes, token-for-token compatible (differences only at identifier or
/// literal positions of matching class), and labels either equal or token
/// compatible with both sides renderer-stable.
fn compatible(t: &TNode, m: &ArtifactNode) -> bool {
    if t.node_type != m.node_type || t.attributes != m.attributes {
        return false;
    }
    if !tokens_compatible(&t.tokens, &m.tokens) {
        return false;
    }
    if t.label_raw == m.label {
        return true;
    }
    renderer_stable(&t.label_raw)
        && renderer_stable(&m.label)
        && tokens_compatible(&t.label_tokens, &tokenize_text(&m.label))
}

fn tokens_compatible(a: &[String], b: &[String]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x == y
                || matches!(
                    (classify(x), classify(y)),
                    (TokenClass::Identifier, TokenClass::Identifier)
                        | (TokenClass::Literal, TokenClass::Literal)
                )
        })
}

/// Order-preserving alignment of template children against member children.
/// Returns matched index pairs, ascending on both sides. Exact-duplicate
/// pairs outweigh two compatible pairs so a verbatim copy never loses its
/// twin to a chain of merely compatible neighbors; a swapped pair therefore
/// degrades into one exact match plus an optional insertion instead of a
/// fully parameterized mismatch.
fn align_children(t_children: &[TNode], m_children: &[ArtifactNode]) -> Vec<(usize, usize)> {
    let n = t_children.len();
    let m = m_children.len();
    if n == 0 || m == 0 {
        return Vec::new();
    }
    let m_digests: Vec<Digest> = m_children
        .iter()
        .map(|c| canonical_hash(c, Abstraction::Exact))
        .collect();
    let weight = |i: usize, j: usize| -> u32 {
        if !compatible(&t_children[i], &m_children[j]) {
            return 0;
        }
        if tnode_exact_digest(&t_children[i]) == m_digests[j] {
            3
        } else {
            1
        }
    };
    let mut dp = vec![vec![0u32; m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            let mut best = dp[i - 1][j].max(dp[i][j - 1]);
            let w = weight(i - 1, j - 1);
            if w > 0 {
                best = best.max(dp[i - 1][j - 1] + w);
            }
            dp[i][j] = best;
        }
    }
    let mut pairs = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        let w = weight(i - 1, j - 1);
        if w > 0 && dp[i][j] == dp[i - 1][j - 1] + w {
            pairs.push((i - 1, j - 1));
            i -= 1;
            j -= 1;
        } else if dp[i][j] == dp[i - 1][j] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    pairs.reverse();
    pairs
}

/// EXACT digest of a template node's base content (ignoring overrides), used
/// only to prefer verbatim matches during alignment.
fn tnode_exact_digest(t: &TNode) -> Digest {
    fn to_node(t: &TNode) -> ArtifactNode {
        ArtifactNode {
            id: NodeId(0),
            node_type: t.node_type,
            label: t.label_raw.clone(),
            tokens: t.tokens.clone(),
            attributes: t.attributes.clone(),
            children: t.children.iter().map(to_node).collect(),
        }
    }
    canonical_hash(&to_node(t), Abstraction::Exact)
}

fn fold_member(t: &mut TNode, m: &ArtifactNode, member_count: usize, mi: usize) {
    t.presence[mi] = true;
    for (pos, token) in m.tokens.iter().enumerate() {
        if *token != t.tokens[pos] {
            t.token_overrides[pos].insert(mi, token.clone());
        }
    }
    if m.label != t.label_raw {
        let m_label_tokens = tokenize_text(&m.label);
        for (pos, token) in m_label_tokens.iter().enumerate() {
            if *token != t.label_tokens[pos] {
                t.label_overrides[pos].insert(mi, token.clone());
            }
        }
    }

    let pairs = align_children(&t.children, &m.children);
    // Rebuild the child list, inserting member-only children right before
    // the next matched template child (template-only children first in each
    // gap). Matched pairs fold recursively.
    let mut old_children: Vec<Option<TNode>> = std::mem::take(&mut t.children)
        .into_iter()
        .map(Some)
        .collect();
    let mut rebuilt: Vec<TNode> = Vec::with_capacity(old_children.len());
    let (mut ti, mut mj) = (0usize, 0usize);
    for &(pi, pj) in &pairs {
        while ti < pi {
            rebuilt.push(old_children[ti].take().expect("child taken once"));
            ti += 1;
        }
        while mj < pj {
            rebuilt.push(TNode::from_member(&m.children[mj], member_count, mi));
            mj += 1;
        }
        let mut matched = old_children[ti].take().expect("child taken once");
        fold_member(&mut matched, &m.children[pj], member_count, mi);
        rebuilt.push(matched);
        ti += 1;
        mj = pj + 1;
    }
    while ti < old_children.len() {
        rebuilt.push(old_children[ti].take().expect("child taken once"));
        ti += 1;
    }
    while mj < m.children.len() {
        rebuilt.push(TNode::from_member(&m.children[mj], member_count, mi));
        mj += 1;
    }
    t.children = rebuilt;
}

// ---------------------------------------------------------------------------
// Slot assignment
// ---------------------------------------------------------------------------

/// A token position inside the finished template, in traversal order (label
/// tokens before body tokens, then children).
#[derive(Clone, Copy)]
struct SlotPosition {
    node: usize,
    in_label: bool,
    pos: usize,
}

struct SlotPlan {
    /// Slot name per parameter, introduction order.
    parameters: Vec<String>,
    /// position -> slot index, applied during template rendering.
    assignments: Vec<(SlotPosition, usize)>,
    /// member index -> slot index -> value (base value when absent).
    values: Vec<Vec<String>>,
}

fn plan_slots(root: &TNode, member_count: usize) -> SlotPlan {
    // Flatten nodes pre-order so positions can reference them by index.
    fn flatten<'a>(t: &'a TNode, out: &mut Vec<&'a TNode>) {
        out.push(t);
        for c in &t.children {
            flatten(c, out);
        }
    }
    let mut nodes = Vec::new();
    flatten(root, &mut nodes);

    struct Candidate {
        position: SlotPosition,
        base: String,
        class: TokenClass,
    }
    let mut candidates: Vec<Candidate> = Vec::new();
    for (ni, node) in nodes.iter().enumerate() {
        for (pos, overrides) in node.label_overrides.iter().enumerate() {
            if !overrides.is_empty() {
                candidates.push(Candidate {
                    position: SlotPosition {
                        node: ni,
                        in_label: true,
                        pos,
                    },
                    base: node.label_tokens[pos].clone(),
                    class: classify(&node.label_tokens[pos]),
                });
            }
        }
        for (pos, overrides) in node.token_overrides.iter().enumerate() {
            if !overrides.is_empty() {
                candidates.push(Candidate {
                    position: SlotPosition {
                        node: ni,
                        in_label: false,
                        pos,
                    },
                    base: node.tokens[pos].clone(),
                    class: classify(&node.tokens[pos]),
                });
            }
        }
    }

    let value_at = |c: &Candidate, mi: usize| -> Option<String> {
        let node = nodes[c.position.node];
        if !node.presence[mi] {
            return None;
        }
        let overrides = if c.position.in_label {
            &node.label_overrides[c.position.pos]
        } else {
            &node.token_overrides[c.position.pos]
        };
        Some(overrides.get(&mi).cloned().unwrap_or_else(|| c.base.clone()))
    };

    // Identifier candidates sharing a base name form one slot if every
    // member binds all of them to one value; otherwise that name splits into
    // per-position slots. Literal candidates are always per-position.
    let mut grouped: Vec<Vec<usize>> = Vec::new();
    let mut ident_groups: BTreeMap<String, usize> = BTreeMap::new();
    for (ci, c) in candidates.iter().enumerate() {
        if c.class == TokenClass::Identifier {
            if let Some(&gi) = ident_groups.get(&c.base) {
                grouped[gi].push(ci);
                continue;
            }
            ident_groups.insert(c.base.clone(), grouped.len());
        }
        grouped.push(vec![ci]);
    }
    let mut final_groups: Vec<Vec<usize>> = Vec::new();
    for group in grouped {
        if group.len() > 1 {
            let consistent = (0..member_count).all(|mi| {
                let mut seen: Option<String> = None;
                group.iter().all(|&ci| match value_at(&candidates[ci], mi) {
                    None => true,
                    Some(v) => match &seen {
                        None => {
                            seen = Some(v);
                            true
                        }
                        Some(prev) => *prev == v,
                    },
                })
            });
            if !consistent {
                for &ci in &group {
                    final_groups.push(vec![ci]);
                }
                continue;
            }
        }
        final_groups.push(group);
    }
    // Positions were collected in traversal order; keep slot numbering by
    // each group's first position.
    final_groups.sort_by_key(|g| g[0]);

    let mut parameters = Vec::with_capacity(final_groups.len());
    let mut assignments = Vec::new();
    let mut values = vec![Vec::with_capacity(final_groups.len()); member_count];
    for (si, group) in final_groups.iter().enumerate() {
        parameters.push(format!("P{}", si + 1));
        for &ci in group {
            assignments.push((candidates[ci].position, si));
        }
        for (mi, member_values) in values.iter_mut().enumerate() {
            let value = group
                .iter()
                .find_map(|&ci| value_at(&candidates[ci], mi))
                .unwrap_or_else(|| candidates[group[0]].base.clone());
            member_values.push(value);
        }
    }
    SlotPlan {
        parameters,
        assignments,
        values,
    }
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

/// Folds the members of `class` into a configurable component plus one
/// instance (binding) per member. Members fold in ascending EXACT-digest
/// order, the representative first.
pub fn extract_component(
    graph: &ArtifactGraph,
    class: &CloneClass,
) -> Result<(ConfigurableComponent, Vec<ComponentInstance>)> {
    if class.members.len() < 2 {
        return Err(Error::InvalidParameter(
            "component extraction needs at least two members".into(),
        ));
    }
    let mut ordered: Vec<(Digest, NodeId)> = Vec::with_capacity(class.members.len());
    for &m in &class.members {
        let node = graph.require_node(m)?;
        ordered.push((canonical_hash(node, Abstraction::Exact), m));
    }
    ordered.sort();
    let member_count = ordered.len();

    let rep_node = graph.require_node(ordered[0].1)?;
    let mut template = TNode::from_member(rep_node, member_count, 0);
    for (mi, &(_, member)) in ordered.iter().enumerate().skip(1) {
        let node = graph.require_node(member)?;
        if !compatible(&template, node) {
            return Err(Error::Extraction {
                member: member.0,
                message: format!(
                    "member root is not slot-compatible with the representative \
                     (labels {:?} vs {:?})",
                    node.label, template.label_raw
                ),
            });
        }
        fold_member(&mut template, node, member_count, mi);
    }

    let plan = plan_slots(&template, member_count);

    // Render the template: apply slot markers, rebuild labels, collect
    // optional nodes, assign pre-order ids.
    let mut slot_map: HashMap<(usize, bool, usize), usize> = HashMap::new();
    for &(position, si) in &plan.assignments {
        slot_map.insert((position.node, position.in_label, position.pos), si);
    }
    struct Renderer<'a> {
        plan: &'a SlotPlan,
        slot_map: &'a HashMap<(usize, bool, usize), usize>,
        next_flat: usize,
        next_id: u32,
        optional: BTreeSet<NodeId>,
        optional_presence: Vec<(NodeId, usize)>,
    }
    impl Renderer<'_> {
        fn render(&mut self, t: &TNode, member_count: usize) -> ArtifactNode {
            let flat = self.next_flat;
            self.next_flat += 1;
            let id = NodeId(self.next_id);
            self.next_id += 1;
            if t.presence.iter().any(|&p| !p) {
                self.optional.insert(id);
                self.optional_presence.push((id, flat));
            }
            let label = if t.label_overrides.iter().any(|o| !o.is_empty()) {
                let tokens: Vec<String> = t
                    .label_tokens
                    .iter()
                    .enumerate()
                    .map(|(pos, tok)| match self.slot_map.get(&(flat, true, pos)) {
                        Some(&si) => marker(&self.plan.parameters[si]),
                        None => tok.clone(),
                    })
                    .collect();
                render_tokens(&tokens)
            } else {
                t.label_raw.clone()
            };
            let tokens: Vec<String> = t
                .tokens
                .iter()
                .enumerate()
                .map(|(pos, tok)| match self.slot_map.get(&(flat, false, pos)) {
                    Some(&si) => marker(&self.plan.parameters[si]),
                    None => tok.clone(),
                })
                .collect();
            let children = t
                .children
                .iter()
                .map(|c| self.render(c, member_count))
                .collect();
            ArtifactNode {
                id,
                node_type: t.node_type,
                label,
                tokens,
                attributes: t.attributes.clone(),
                children,
            }
        }
    }
    let mut renderer = Renderer {
        plan: &plan,
        slot_map: &slot_map,
        next_flat: 0,
        next_id: 0,
        optional: BTreeSet::new(),
        optional_presence: Vec::new(),
    };
    let template_node = renderer.render(&template, member_count);
    let (optional_nodes, optional_presence) = (renderer.optional, renderer.optional_presence);

    // Presence per optional node and member, read back off the flat index.
    fn flatten<'a>(t: &'a TNode, out: &mut Vec<&'a TNode>) {
        out.push(t);
        for c in &t.children {
            flatten(c, out);
        }
    }
    let mut flat_nodes = Vec::new();
    flatten(&template, &mut flat_nodes);

    let mut bindings: Vec<Binding> = Vec::with_capacity(member_count);
    for mi in 0..member_count {
        let mut binding = Binding::default();
        for (si, name) in plan.parameters.iter().enumerate() {
            binding
                .parameters
                .insert(name.clone(), plan.values[mi][si].clone());
        }
        for &(id, flat) in &optional_presence {
            binding.optionals.insert(id, flat_nodes[flat].presence[mi]);
        }
        bindings.push(binding);
    }

    let component_id = component_id_for(&template_node, &plan.parameters, &optional_nodes);
    let component = ConfigurableComponent {
        component_id: component_id.clone(),
        template: template_node,
        parameters: plan.parameters,
        optional_nodes,
        canonical: bindings[0].clone(),
    };

    let mut instances = Vec::with_capacity(member_count);
    for (mi, &(_, member)) in ordered.iter().enumerate() {
        let expanded = expand_instance(&component, &bindings[mi])?;
        let original = graph.require_node(member)?;
        if !expanded.content_eq(original) {
            let diff = expanded
                .first_difference(original)
                .unwrap_or_else(|| "unknown difference".into());
            return Err(Error::Extraction {
                member: member.0,
                message: format!("expansion does not reproduce the member: {diff}"),
            });
        }
        instances.push(ComponentInstance {
            component_id: component_id.clone(),
            member,
            binding: bindings[mi].clone(),
        });
    }
    Ok((component, instances))
}

fn component_id_for(
    template: &ArtifactNode,
    parameters: &[String],
    optional: &BTreeSet<NodeId>,
) -> String {
    let mut hasher = Sha256::new();
    hasher.update(canonical_hash(template, Abstraction::Exact).0);
    hasher.update((parameters.len() as u32).to_le_bytes());
    for p in parameters {
        hasher.update((p.len() as u32).to_le_bytes());
        hasher.update(p.as_bytes());
    }
    hasher.update((optional.len() as u32).to_le_bytes());
    for id in optional {
        hasher.update(id.0.to_le_bytes());
    }
    let digest: [u8; 32] = hasher.finalize().into();
    format!("C{}", hex::encode(&digest[..6]))
}

// ---------------------------------------------------------------------------
// Expansion
// ---------------------------------------------------------------------------

/// Expands a component under a binding into a fresh subtree with pre-order
/// ids starting at 0. The binding must cover every parameter and every
/// optional node.
pub fn expand_instance(component: &ConfigurableComponent, binding: &Binding) -> Result<ArtifactNode> {
    for name in &component.parameters {
        if !binding.parameters.contains_key(name) {
            return Err(Error::Binding(format!(
                "missing value for parameter {name} of {}",
                component.component_id
            )));
        }
    }
    for name in binding.parameters.keys() {
        if !component.parameters.contains(name) {
            return Err(Error::Binding(format!(
                "{} has no parameter {name}",
                component.component_id
            )));
        }
    }
    for id in &component.optional_nodes {
        if !binding.optionals.contains_key(id) {
            return Err(Error::Binding(format!(
                "missing include/exclude decision for optional node {id} of {}",
                component.component_id
            )));
        }
    }
    for id in binding.optionals.keys() {
        if !component.optional_nodes.contains(id) {
            return Err(Error::Binding(format!(
                "{} has no optional node {id}",
                component.component_id
            )));
        }
    }

    fn substitute(token: &str, binding: &Binding) -> String {
        match parse_marker(token) {
            Some(name) => binding.parameters[name].clone(),
            None => token.to_string(),
        }
    }
    fn build(node: &ArtifactNode, component: &ConfigurableComponent, binding: &Binding) -> Option<ArtifactNode> {
        if component.optional_nodes.contains(&node.id) && !binding.optionals[&node.id] {
            return None;
        }
        let label = if node.label.contains('$') {
            let tokens: Vec<String> = tokenize_text(&node.label)
                .iter()
                .map(|t| substitute(t, binding))
                .collect();
            render_tokens(&tokens)
        } else {
            node.label.clone()
        };
        let tokens = node.tokens.iter().map(|t| substitute(t, binding)).collect();
        let children = node
            .children
            .iter()
            .filter_map(|c| build(c, component, binding))
            .collect();
        Some(ArtifactNode {
            id: node.id,
            node_type: node.node_type,
            label,
            tokens,
            attributes: node.attributes.clone(),
            children,
        })
    }
    let mut expanded = build(&component.template, component, binding).ok_or_else(|| {
        Error::Binding(format!(
            "the template root of {} cannot be excluded",
            component.component_id
        ))
    })?;
    expanded.renumber_preorder(0);
    Ok(expanded)
}

// ---------------------------------------------------------------------------
// INSTANCE_REF encoding
// ---------------------------------------------------------------------------

/// Builds the INSTANCE_REF leaf that stands in for an expanded instance.
/// The structured binding lives in `attributes`; `tokens` mirrors it so that
/// canonical hashing (which ignores attributes) still distinguishes and
/// unifies instances by component and binding.
pub fn instance_ref_node(component_id: &str, binding: &Binding) -> ArtifactNode {
    let mut tokens = vec![component_id.to_string()];
    let mut attributes = BTreeMap::new();
    attributes.insert(COMPONENT_KEY.to_string(), component_id.to_string());
    for (name, value) in &binding.parameters {
        tokens.push(name.clone());
        tokens.push(value.clone());
        attributes.insert(format!("{PARAM_PREFIX}{name}"), value.clone());
    }
    for (&id, &included) in &binding.optionals {
        tokens.push(format!("O{id}"));
        tokens.push(if included { "1" } else { "0" }.to_string());
        attributes.insert(
            format!("{OPT_PREFIX}{id}"),
            if included { "true" } else { "false" }.to_string(),
        );
    }
    ArtifactNode {
        id: NodeId(0),
        node_type: NodeType::InstanceRef,
        label: component_id.to_string(),
        tokens,
        attributes,
        children: Vec::new(),
    }
}

/// Reads the component id and binding back out of an INSTANCE_REF node.
pub fn decode_instance_ref(node: &ArtifactNode) -> Result<(String, Binding)> {
    if node.node_type != NodeType::InstanceRef {
        return Err(Error::structure(node.id.0, "not an INSTANCE_REF node"));
    }
    let component_id = node
        .attributes
        .get(COMPONENT_KEY)
        .ok_or_else(|| Error::Binding(format!("node {} has no component attribute", node.id)))?
        .clone();
    let mut binding = Binding::default();
    for (key, value) in &node.attributes {
        if let Some(name) = key.strip_prefix(PARAM_PREFIX) {
            binding.parameters.insert(name.to_string(), value.clone());
        } else if let Some(id_text) = key.strip_prefix(OPT_PREFIX) {
            let id: u32 = id_text.parse().map_err(|_| {
                Error::Binding(format!("malformed optional key {key:?} on node {}", node.id))
            })?;
            let included = match value.as_str() {
                "true" => true,
                "false" => false,
                other => {
                    return Err(Error::Binding(format!(
                        "optional {key} must be true or false, got {other:?}"
                    )))
                }
            };
            binding.optionals.insert(NodeId(id), included);
        }
    }
    Ok((component_id, binding))
}

// ---------------------------------------------------------------------------
// Graph-level refactoring
// ---------------------------------------------------------------------------

/// Replaces every clone-class member in `report` with an INSTANCE_REF leaf
/// bound to its extracted component. Classes must be pairwise disjoint and
/// non-nested, which [`crate::clones::detect_clones`] guarantees.
pub fn refactor_graph(graph: &ArtifactGraph, report: &CloneReport) -> Result<RefactoredVariant> {
    let mut all_members: Vec<NodeId> = Vec::new();
    for class in &report.classes {
        all_members.extend(&class.members);
    }
    let mut sorted = all_members.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != all_members.len() {
        return Err(Error::OverlappingClasses(
            "a node appears in more than one clone class".into(),
        ));
    }
    for &a in &sorted {
        let mut parent = graph.parent_of(a);
        while let Some(p) = parent {
            if sorted.binary_search(&p).is_ok() {
                return Err(Error::OverlappingClasses(format!(
                    "member {a} is nested inside member {p}"
                )));
            }
            parent = graph.parent_of(p);
        }
    }

    let mut next_id = graph.nodes().map(|n| n.id.0).max().unwrap_or(0) + 1;
    let mut components: BTreeMap<String, ConfigurableComponent> = BTreeMap::new();
    let mut instances = Vec::new();
    let mut replacements: HashMap<NodeId, Option<ArtifactNode>> = HashMap::new();
    for class in &report.classes {
        let (component, class_instances) = extract_component(graph, class)?;
        for instance in &class_instances {
            let mut leaf = instance_ref_node(&component.component_id, &instance.binding);
            leaf.id = NodeId(next_id);
            next_id += 1;
            replacements.insert(instance.member, Some(leaf));
        }
        components
            .entry(component.component_id.clone())
            .or_insert(component);
        instances.extend(class_instances);
    }
    let graph = graph.replace_subtrees(&replacements)?;
    Ok(RefactoredVariant {
        graph,
        components,
        instances,
    })
}

/// Expands every INSTANCE_REF in `graph` using `components`, repeating until
/// none remain (refactoring passes can stack). The result is renumbered in
/// pre-order.
pub fn expand_all(
    graph: &ArtifactGraph,
    components: &BTreeMap<String, ConfigurableComponent>,
) -> Result<ArtifactGraph> {
    const MAX_ROUNDS: usize = 64;
    let mut current = graph.clone();
    for _ in 0..MAX_ROUNDS {
        let refs: Vec<NodeId> = current
            .nodes()
            .filter(|n| n.node_type == NodeType::InstanceRef)
            .map(|n| n.id)
            .collect();
        if refs.is_empty() {
            let mut root = current.into_root();
            root.renumber_preorder(0);
            return ArtifactGraph::new(graph.variant_id(), root);
        }
        let mut next_id = current.nodes().map(|n| n.id.0).max().unwrap_or(0) + 1;
        let mut replacements: HashMap<NodeId, Option<ArtifactNode>> = HashMap::new();
        for id in refs {
            let node = current.require_node(id)?;
            let (component_id, binding) = decode_instance_ref(node)?;
            let component = components.get(&component_id).ok_or_else(|| {
                Error::Binding(format!("unknown component {component_id} on node {id}"))
            })?;
            let mut expanded = expand_instance(component, &binding)?;
            next_id = expanded.renumber_preorder(next_id);
            replacements.insert(id, Some(expanded));
        }
        current = current.replace_subtrees(&replacements)?;
    }
    Err(Error::LimitExceeded(format!(
        "instance expansion did not terminate after {MAX_ROUNDS} rounds"
    )))
}
