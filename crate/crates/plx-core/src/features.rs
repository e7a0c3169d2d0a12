//! Feature synthesis over the integrated platform, configuration
//! validation, and configuration-based derivation.
//!
//! Platform nodes sharing one presence signature (the exact set of variants
//! they appear in) form a *block*; every block becomes one feature. Features
//! nest by signature containment, mandatory when a block spans its parent's
//! whole signature, and sibling groups refine to XOR or OR when the sibling
//! signatures partition or cover the parent's. Cross-tree containment and
//! disjointness mine REQUIRES and EXCLUDES constraints.
//!
//! INSTANCE_REF platform nodes additionally get one *instance feature* each,
//! tied to a per-component *layer model*: parameters become XOR groups over
//! their observed values and optional template nodes become optional
//! features. A full configuration therefore selects system features plus,
//! per selected instance, a valid layer selection; [`derive_configuration`]
//! turns that into a concrete artifact tree.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::components::{decode_instance_ref, instance_ref_node, Binding};
use crate::error::{Error, Result};
use crate::graph::{ArtifactGraph, ArtifactNode, NodeId, NodeType};
use crate::platform::{IntegratedPlatform, PlatformNode};

/// A maximal set of platform nodes sharing one presence signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    /// The variants every node of the block appears in.
    pub signature: BTreeSet<String>,
    /// Member pids, ascending.
    pub pids: Vec<NodeId>,
}

/// Groups platform nodes into blocks, ordered by signature.
pub fn compute_blocks(platform: &IntegratedPlatform) -> Vec<Block> {
    let mut by_signature: BTreeMap<BTreeSet<String>, Vec<NodeId>> = BTreeMap::new();
    for node in platform.root.walk() {
        let signature: BTreeSet<String> =
            node.contents.keys().cloned().collect();
        by_signature.entry(signature).or_default().push(node.pid);
    }
    by_signature
        .into_iter()
        .map(|(signature, mut pids)| {
            pids.sort_unstable();
            Block { signature, pids }
        })
        .collect()
}

/// How a feature varies under its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variability {
    Root,
    Mandatory,
    Optional,
    /// Variability is carried by the sibling group the feature belongs to.
    Grouped,
}

impl fmt::Display for Variability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self {
            Variability::Root => "root",
            Variability::Mandatory => "mandatory",
            Variability::Optional => "optional",
            Variability::Grouped => "grouped",
        };
        write!(f, "{text}")
    }
}

/// What selecting a layer feature contributes to a component binding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binds {
    Parameter { name: String, value: String },
    Optional { node: NodeId },
}

/// One feature of the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    /// Parent feature name; `None` only for the root.
    pub parent: Option<String>,
    pub variability: Variability,
    /// Variants in which the underlying block (or observation) is present.
    pub signature: BTreeSet<String>,
    /// For instance features: the component whose layer model applies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_ref: Option<String>,
    /// For layer features: the binding contribution when selected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binds: Option<Binds>,
}

/// Kind of a sibling group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Xor,
    Or,
}

/// An alternative (XOR) or covering (OR) group under one parent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub parent: String,
    pub kind: GroupKind,
    pub members: Vec<String>,
}

/// Kind of a cross-tree constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Requires,
    Excludes,
}

/// A mined cross-tree constraint between two features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub from: String,
    pub to: String,
}

/// The feature tree of one component's parameters and optional nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerModel {
    pub component_id: String,
    /// Pre-order: the component root first.
    pub features: Vec<Feature>,
    pub groups: Vec<Group>,
}

/// The synthesized feature model: the system tree, its groups and
/// constraints, plus one layer model per instantiated component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureModel {
    /// All variant ids, sorted.
    pub variants: Vec<String>,
    /// Pre-order: ROOT first, block features by block order, instance
    /// features after their blocks.
    pub features: Vec<Feature>,
    pub groups: Vec<Group>,
    pub constraints: Vec<Constraint>,
    pub layers: BTreeMap<String, LayerModel>,
}

/// The name of the synthetic root feature.
pub const ROOT_FEATURE: &str = "ROOT";

impl FeatureModel {
    /// Looks a system feature up by name.
    pub fn feature(&self, name: &str) -> Option<&Feature> {
        self.features.iter().find(|f| f.name == name)
    }

    /// Block features only: everything except ROOT and instance features.
    pub fn block_features(&self) -> impl Iterator<Item = &Feature> {
        self.features
            .iter()
            .filter(|f| f.name != ROOT_FEATURE && f.layer_ref.is_none())
    }
}

/// Builds the instance feature name for an INSTANCE_REF platform node.
fn instance_feature_name(pid: NodeId, component_id: &str) -> String {
    format!("I{}_{}", pid.0, component_id)
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

/// Synthesizes the feature model of an integrated platform.
pub fn synthesize_features(platform: &IntegratedPlatform) -> Result<FeatureModel> {
    let variants: Vec<String> = {
        let mut v = platform.variants.clone();
        v.sort_unstable();
        v
    };
    let full: BTreeSet<String> = variants.iter().cloned().collect();
    let blocks = compute_blocks(platform);

    // One feature per block, F1.. in block order.
    let mut features: Vec<Feature> = vec![Feature {
        name: ROOT_FEATURE.to_string(),
        parent: None,
        variability: Variability::Root,
        signature: full.clone(),
        layer_ref: None,
        binds: None,
    }];
    let block_names: Vec<String> = (1..=blocks.len()).map(|i| format!("F{i}")).collect();
    let name_of: BTreeMap<&BTreeSet<String>, &str> = blocks
        .iter()
        .zip(&block_names)
        .map(|(b, n)| (&b.signature, n.as_str()))
        .collect();

    for (bi, block) in blocks.iter().enumerate() {
        // Parent: the smallest proper superset signature, ties broken by
        // signature order; the root otherwise.
        let parent = blocks
            .iter()
            .filter(|other| {
                other.signature.len() > block.signature.len()
                    && block.signature.is_subset(&other.signature)
            })
            .min_by(|a, b| {
                a.signature
                    .len()
                    .cmp(&b.signature.len())
                    .then_with(|| a.signature.cmp(&b.signature))
            });
        let (parent_name, parent_signature) = match parent {
            Some(p) => (name_of[&p.signature].to_string(), &p.signature),
            None => (ROOT_FEATURE.to_string(), &full),
        };
        let variability = if block.signature == *parent_signature {
            Variability::Mandatory
        } else {
            Variability::Optional
        };
        features.push(Feature {
            name: block_names[bi].clone(),
            parent: Some(parent_name),
            variability,
            signature: block.signature.clone(),
            layer_ref: None,
            binds: None,
        });
    }

    // Sibling groups: optional children whose signatures partition the
    // parent's signature form XOR -- unless each child claims a single
    // variant, where plain optionality explains the data just as well.
    // Children that all overlap pairwise and still cover the parent form OR.
    let mut groups: Vec<Group> = Vec::new();
    let parents: Vec<String> = features.iter().map(|f| f.name.clone()).collect();
    for parent_name in parents {
        let parent_signature = features
            .iter()
            .find(|f| f.name == parent_name)
            .map(|f| f.signature.clone())
            .expect("iterating existing features");
        let member_idx: Vec<usize> = features
            .iter()
            .enumerate()
            .filter(|(_, f)| {
                f.parent.as_deref() == Some(parent_name.as_str())
                    && f.variability == Variability::Optional
            })
            .map(|(i, _)| i)
            .collect();
        if member_idx.len() < 2 {
            continue;
        }
        let signatures: Vec<&BTreeSet<String>> =
            member_idx.iter().map(|&i| &features[i].signature).collect();
        let union: BTreeSet<String> = signatures
            .iter()
            .flat_map(|s| s.iter().cloned())
            .collect();
        if union != parent_signature {
            continue;
        }
        let disjoint = signatures
            .iter()
            .enumerate()
            .all(|(i, a)| signatures[i + 1..].iter().all(|b| a.is_disjoint(b)));
        let overlapping = signatures
            .iter()
            .enumerate()
            .all(|(i, a)| signatures[i + 1..].iter().all(|b| !a.is_disjoint(b)));
        let kind = if disjoint && member_idx.len() < parent_signature.len() {
            GroupKind::Xor
        } else if overlapping {
            GroupKind::Or
        } else {
            continue;
        };
        for &i in &member_idx {
            features[i].variability = Variability::Grouped;
        }
        groups.push(Group {
            parent: parent_name,
            kind,
            members: member_idx
                .iter()
                .map(|&i| features[i].name.clone())
                .collect(),
        });
    }

    // Instance features: one per INSTANCE_REF node, mandatory under the
    // block feature of the node's signature.
    let mut instance_nodes: Vec<&PlatformNode> = platform
        .root
        .walk()
        .filter(|n| n.node_type == NodeType::InstanceRef)
        .collect();
    instance_nodes.sort_by_key(|n| n.pid);
    let mut observations: BTreeMap<String, Vec<(&PlatformNode, String, Binding)>> =
        BTreeMap::new();
    for node in instance_nodes {
        let signature: BTreeSet<String> = node.contents.keys().cloned().collect();
        let block_feature = name_of
            .get(&signature)
            .map(|n| n.to_string())
            .expect("every platform node belongs to a block");
        let mut component_id = None;
        for (variant, content) in &node.contents {
            let as_node = ArtifactNode {
                id: node.pid,
                node_type: NodeType::InstanceRef,
                label: content.label.clone(),
                tokens: content.tokens.clone(),
                attributes: content.attributes.clone(),
                children: Vec::new(),
            };
            let (cid, binding) = decode_instance_ref(&as_node)?;
            observations
                .entry(cid.clone())
                .or_default()
                .push((node, variant.clone(), binding));
            component_id = Some(cid);
        }
        let component_id = component_id.expect("instance nodes have content");
        features.push(Feature {
            name: instance_feature_name(node.pid, &component_id),
            parent: Some(block_feature),
            variability: Variability::Mandatory,
            signature,
            layer_ref: Some(component_id),
            binds: None,
        });
    }

    // Layer models: parameters as XOR groups over observed values, optional
    // template nodes as optional features.
    let mut layers: BTreeMap<String, LayerModel> = BTreeMap::new();
    for (component_id, obs) in &observations {
        let component = platform.components.get(component_id).ok_or_else(|| {
            Error::Binding(format!(
                "platform references unknown component {component_id}"
            ))
        })?;
        let root_signature: BTreeSet<String> =
            obs.iter().map(|(_, v, _)| v.clone()).collect();
        let mut layer_features = vec![Feature {
            name: component_id.clone(),
            parent: None,
            variability: Variability::Root,
            signature: root_signature.clone(),
            layer_ref: None,
            binds: None,
        }];
        let mut layer_groups = Vec::new();
        for parameter in &component.parameters {
            let feature_name = format!("{component_id}_{parameter}");
            layer_features.push(Feature {
                name: feature_name.clone(),
                parent: Some(component_id.clone()),
                variability: Variability::Mandatory,
                signature: root_signature.clone(),
                layer_ref: None,
                binds: None,
            });
            let mut value_variants: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
            for (_, variant, binding) in obs {
                let value = binding.parameters[parameter].as_str();
                value_variants
                    .entry(value)
                    .or_default()
                    .insert(variant.clone());
            }
            let single = value_variants.len() == 1;
            let mut members = Vec::new();
            for (value, signature) in value_variants {
                let value_name =
                    format!("{feature_name}_v{}", percent_encode(value));
                members.push(value_name.clone());
                layer_features.push(Feature {
                    name: value_name,
                    parent: Some(feature_name.clone()),
                    variability: if single {
                        Variability::Mandatory
                    } else {
                        Variability::Grouped
                    },
                    signature,
                    layer_ref: None,
                    binds: Some(Binds::Parameter {
                        name: parameter.clone(),
                        value: value.to_string(),
                    }),
                });
            }
            if !single {
                layer_groups.push(Group {
                    parent: feature_name,
                    kind: GroupKind::Xor,
                    members,
                });
            }
        }
        for &optional in &component.optional_nodes {
            let signature: BTreeSet<String> = obs
                .iter()
                .filter(|(_, _, binding)| binding.optionals[&optional])
                .map(|(_, v, _)| v.clone())
                .collect();
            layer_features.push(Feature {
                name: format!("{component_id}_O{}", optional.0),
                parent: Some(component_id.clone()),
                variability: Variability::Optional,
                signature,
                layer_ref: None,
                binds: Some(Binds::Optional { node: optional }),
            });
        }
        layers.insert(
            component_id.clone(),
            LayerModel {
                component_id: component_id.clone(),
                features: layer_features,
                groups: layer_groups,
            },
        );
    }

    let constraints = mine_constraints(&features, &groups);
    Ok(FeatureModel {
        variants,
        features,
        groups,
        constraints,
        layers,
    })
}

/// Mines REQUIRES (signature containment off the parent chain, transitively
/// reduced) and EXCLUDES (disjoint signatures outside XOR groups, which
/// already forbid co-selection).
fn mine_constraints(features: &[Feature], groups: &[Group]) -> Vec<Constraint> {
    let block: Vec<&Feature> = features
        .iter()
        .filter(|f| f.name != ROOT_FEATURE && f.layer_ref.is_none())
        .collect();
    let mut parent_of: BTreeMap<&str, &str> = BTreeMap::new();
    for f in features {
        if let Some(p) = f.parent.as_deref() {
            parent_of.insert(f.name.as_str(), p);
        }
    }
    fn is_ancestor<'a>(parent_of: &BTreeMap<&'a str, &'a str>, anc: &str, start: &'a str) -> bool {
        let mut name = start;
        while let Some(&p) = parent_of.get(name) {
            if p == anc {
                return true;
            }
            name = p;
        }
        false
    }

    // Candidate requires edges.
    let mut requires: Vec<(usize, usize)> = Vec::new();
    for (i, a) in block.iter().enumerate() {
        for (j, b) in block.iter().enumerate() {
            if i != j
                && a.signature.len() < b.signature.len()
                && a.signature.is_subset(&b.signature)
                && !is_ancestor(&parent_of, &b.name, &a.name)
            {
                requires.push((i, j));
            }
        }
    }
    // Transitive reduction over the union of parent edges and requires
    // edges. Signatures order the graph, so the reduction is unique.
    let index_of: BTreeMap<&str, usize> = block
        .iter()
        .enumerate()
        .map(|(i, f)| (f.name.as_str(), i))
        .collect();
    let mut successors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); block.len()];
    for &(i, j) in &requires {
        successors[i].insert(j);
    }
    for (i, f) in block.iter().enumerate() {
        if let Some(p) = f.parent.as_deref() {
            if let Some(&pi) = index_of.get(p) {
                successors[i].insert(pi);
            }
        }
    }
    let reachable_without = |from: usize, to: usize, skip: (usize, usize)| -> bool {
        let mut seen = BTreeSet::from([from]);
        let mut queue = vec![from];
        while let Some(n) = queue.pop() {
            for &next in &successors[n] {
                if (n, next) == skip || !seen.insert(next) {
                    continue;
                }
                if next == to {
                    return true;
                }
                queue.push(next);
            }
        }
        false
    };
    let mut constraints: Vec<Constraint> = requires
        .iter()
        .filter(|&&(i, j)| !reachable_without(i, j, (i, j)))
        .map(|&(i, j)| Constraint {
            kind: ConstraintKind::Requires,
            from: block[i].name.clone(),
            to: block[j].name.clone(),
        })
        .collect();

    // Excludes: disjoint signatures, one edge per unordered pair, skipping
    // pairs already separated by a shared XOR group.
    let same_xor = |a: &str, b: &str| -> bool {
        groups.iter().any(|g| {
            g.kind == GroupKind::Xor
                && g.members.iter().any(|m| m == a)
                && g.members.iter().any(|m| m == b)
        })
    };
    for (i, a) in block.iter().enumerate() {
        for b in block.iter().skip(i + 1) {
            if a.signature.is_disjoint(&b.signature) && !same_xor(&a.name, &b.name) {
                constraints.push(Constraint {
                    kind: ConstraintKind::Excludes,
                    from: a.name.clone(),
                    to: b.name.clone(),
                });
            }
        }
    }
    constraints
}

// ---------------------------------------------------------------------------
// Configuration validation and enumeration
// ---------------------------------------------------------------------------

/// A configuration: selected system features plus, per selected instance
/// feature, the selected features of its component's layer model.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Configuration {
    pub selected: BTreeSet<String>,
    /// Instance feature name to selected layer feature names.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bindings: BTreeMap<String, BTreeSet<String>>,
}

/// One rule broken by a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    RootNotSelected { root: String },
    UnknownFeature { name: String },
    ParentNotSelected { feature: String, parent: String },
    MandatoryChildMissing { parent: String, child: String },
    XorNotExactlyOne { parent: String, selected: usize },
    OrNoneSelected { parent: String },
    RequiresViolated { from: String, to: String },
    ExcludesViolated { from: String, to: String },
    BindingMissing { instance: String },
    BindingUnexpected { instance: String },
    LayerViolation { instance: String, violation: Box<Violation> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RootNotSelected { root } => write!(f, "root feature {root} is not selected"),
            Violation::UnknownFeature { name } => write!(f, "unknown feature {name}"),
            Violation::ParentNotSelected { feature, parent } => {
                write!(f, "{feature} is selected but its parent {parent} is not")
            }
            Violation::MandatoryChildMissing { parent, child } => {
                write!(f, "mandatory {child} is missing under selected {parent}")
            }
            Violation::XorNotExactlyOne { parent, selected } => {
                write!(f, "group under {parent} needs exactly one member, got {selected}")
            }
            Violation::OrNoneSelected { parent } => {
                write!(f, "group under {parent} needs at least one member")
            }
            Violation::RequiresViolated { from, to } => {
                write!(f, "{from} requires {to}")
            }
            Violation::ExcludesViolated { from, to } => {
                write!(f, "{from} excludes {to}")
            }
            Violation::BindingMissing { instance } => {
                write!(f, "selected instance {instance} has no layer selection")
            }
            Violation::BindingUnexpected { instance } => {
                write!(f, "layer selection given for unselected instance {instance}")
            }
            Violation::LayerViolation { instance, violation } => {
                write!(f, "in layer of {instance}: {violation}")
            }
        }
    }
}

/// Checks one feature tree (system or layer) against a selection.
fn validate_tree(
    features: &[Feature],
    groups: &[Group],
    root: &str,
    selected: &BTreeSet<String>,
) -> Vec<Violation> {
    let mut violations = Vec::new();
    let by_name: BTreeMap<&str, &Feature> =
        features.iter().map(|f| (f.name.as_str(), f)).collect();
    if !selected.contains(root) {
        violations.push(Violation::RootNotSelected {
            root: root.to_string(),
        });
    }
    for name in selected {
        match by_name.get(name.as_str()) {
            None => violations.push(Violation::UnknownFeature { name: name.clone() }),
            Some(feature) => {
                if let Some(parent) = &feature.parent {
                    if !selected.contains(parent) {
                        violations.push(Violation::ParentNotSelected {
                            feature: name.clone(),
                            parent: parent.clone(),
                        });
                    }
                }
            }
        }
    }
    for feature in features {
        if feature.variability == Variability::Mandatory {
            let parent = feature.parent.as_deref().unwrap_or(root);
            if selected.contains(parent) && !selected.contains(&feature.name) {
                violations.push(Violation::MandatoryChildMissing {
                    parent: parent.to_string(),
                    child: feature.name.clone(),
                });
            }
        }
    }
    for group in groups {
        if !selected.contains(&group.parent) {
            continue;
        }
        let count = group
            .members
            .iter()
            .filter(|m| selected.contains(*m))
            .count();
        match group.kind {
            GroupKind::Xor if count != 1 => violations.push(Violation::XorNotExactlyOne {
                parent: group.parent.clone(),
                selected: count,
            }),
            GroupKind::Or if count == 0 => violations.push(Violation::OrNoneSelected {
                parent: group.parent.clone(),
            }),
            _ => {}
        }
    }
    violations
}

fn validate_system(model: &FeatureModel, selected: &BTreeSet<String>) -> Vec<Violation> {
    let mut violations = validate_tree(&model.features, &model.groups, ROOT_FEATURE, selected);
    for constraint in &model.constraints {
        let from = selected.contains(&constraint.from);
        let to = selected.contains(&constraint.to);
        match constraint.kind {
            ConstraintKind::Requires if from && !to => {
                violations.push(Violation::RequiresViolated {
                    from: constraint.from.clone(),
                    to: constraint.to.clone(),
                })
            }
            ConstraintKind::Excludes if from && to => {
                violations.push(Violation::ExcludesViolated {
                    from: constraint.from.clone(),
                    to: constraint.to.clone(),
                })
            }
            _ => {}
        }
    }
    violations
}

/// Checks a configuration against the model. An empty result means the
/// configuration is valid.
pub fn validate_configuration(model: &FeatureModel, config: &Configuration) -> Vec<Violation> {
    let mut violations = validate_system(model, &config.selected);
    for feature in &model.features {
        let Some(layer_ref) = &feature.layer_ref else {
            continue;
        };
        let is_selected = config.selected.contains(&feature.name);
        let binding = config.bindings.get(&feature.name);
        match (is_selected, binding) {
            (true, None) => violations.push(Violation::BindingMissing {
                instance: feature.name.clone(),
            }),
            (false, Some(_)) => violations.push(Violation::BindingUnexpected {
                instance: feature.name.clone(),
            }),
            (true, Some(layer_selected)) => {
                if let Some(layer) = model.layers.get(layer_ref) {
                    for violation in validate_tree(
                        &layer.features,
                        &layer.groups,
                        &layer.component_id,
                        layer_selected,
                    ) {
                        violations.push(Violation::LayerViolation {
                            instance: feature.name.clone(),
                            violation: Box::new(violation),
                        });
                    }
                } else {
                    violations.push(Violation::UnknownFeature {
                        name: layer_ref.clone(),
                    });
                }
            }
            (false, None) => {}
        }
    }
    for instance in config.bindings.keys() {
        if model.feature(instance).is_none() {
            violations.push(Violation::UnknownFeature {
                name: instance.clone(),
            });
        }
    }
    violations
}

/// Enumerates all valid system-layer selections (layer bindings are not
/// expanded). Guarded to small models.
pub fn enumerate_configurations(model: &FeatureModel) -> Result<Vec<BTreeSet<String>>> {
    const MAX_FEATURES: usize = 20;
    let optional: Vec<&str> = model
        .features
        .iter()
        .filter(|f| f.name != ROOT_FEATURE)
        .map(|f| f.name.as_str())
        .collect();
    if optional.len() > MAX_FEATURES {
        return Err(Error::LimitExceeded(format!(
            "enumeration over {} features exceeds the bound of {MAX_FEATURES}",
            optional.len()
        )));
    }
    let mut valid = Vec::new();
    for mask in 0u64..(1u64 << optional.len()) {
        let mut selected: BTreeSet<String> = BTreeSet::from([ROOT_FEATURE.to_string()]);
        for (bit, name) in optional.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                selected.insert(name.to_string());
            }
        }
        if validate_system(model, &selected).is_empty() {
            valid.push(selected);
        }
    }
    Ok(valid)
}

/// The layer features a concrete binding selects: the layer root, every
/// parameter feature, the value feature matching each bound value, and the
/// optional features whose template node the binding includes.
pub fn layer_selection(layer: &LayerModel, binding: &Binding) -> BTreeSet<String> {
    layer
        .features
        .iter()
        .filter(|f| match &f.binds {
            None => true,
            Some(Binds::Parameter { name, value }) => {
                binding.parameters.get(name) == Some(value)
            }
            Some(Binds::Optional { node }) => {
                binding.optionals.get(node).copied().unwrap_or(false)
            }
        })
        .map(|f| f.name.clone())
        .collect()
}

/// Builds the configuration that reproduces `variant`: every feature whose
/// signature contains the variant is selected, and each selected instance
/// feature carries the layer selection encoded by that variant's
/// INSTANCE_REF binding.
pub fn variant_configuration(
    platform: &IntegratedPlatform,
    model: &FeatureModel,
    variant: &str,
) -> Result<Configuration> {
    if !model.variants.iter().any(|v| v == variant) {
        return Err(Error::InvalidParameter(format!(
            "variant {variant} is not part of the model"
        )));
    }
    let selected: BTreeSet<String> = model
        .features
        .iter()
        .filter(|f| f.signature.contains(variant))
        .map(|f| f.name.clone())
        .collect();
    let mut bindings = BTreeMap::new();
    for node in platform.root.walk() {
        if node.node_type != NodeType::InstanceRef {
            continue;
        }
        let Some(content) = node.contents.get(variant) else {
            continue;
        };
        let as_node = ArtifactNode {
            id: node.pid,
            node_type: NodeType::InstanceRef,
            label: content.label.clone(),
            tokens: content.tokens.clone(),
            attributes: content.attributes.clone(),
            children: Vec::new(),
        };
        let (component_id, binding) = decode_instance_ref(&as_node)?;
        let layer = model.layers.get(&component_id).ok_or_else(|| {
            Error::Binding(format!("model has no layer for component {component_id}"))
        })?;
        bindings.insert(
            instance_feature_name(node.pid, &component_id),
            layer_selection(layer, &binding),
        );
    }
    Ok(Configuration { selected, bindings })
}

/// Completes a bare feature selection into a full configuration: every
/// selected instance feature receives the layer selection of its
/// component's canonical binding. Useful when a caller picks system
/// features without caring about parameter values.
pub fn with_canonical_bindings(
    platform: &IntegratedPlatform,
    model: &FeatureModel,
    selected: BTreeSet<String>,
) -> Result<Configuration> {
    let mut bindings = BTreeMap::new();
    for feature in &model.features {
        let Some(layer_ref) = &feature.layer_ref else {
            continue;
        };
        if !selected.contains(&feature.name) {
            continue;
        }
        let layer = model.layers.get(layer_ref).ok_or_else(|| {
            Error::Binding(format!("model has no layer for component {layer_ref}"))
        })?;
        let component = platform.components.get(layer_ref).ok_or_else(|| {
            Error::Binding(format!("platform has no component {layer_ref}"))
        })?;
        bindings.insert(
            feature.name.clone(),
            layer_selection(layer, &component.canonical),
        );
    }
    Ok(Configuration { selected, bindings })
}

// ---------------------------------------------------------------------------
// Configuration-based derivation
// ---------------------------------------------------------------------------

/// Derives the artifact tree a configuration describes: platform nodes are
/// included when their presence condition (or, without one, their block
/// feature) holds, siblings order by their average position across variants,
/// contents resolve to the smallest entry, and selected layer features
/// override instance bindings before expansion.
pub fn derive_configuration(
    platform: &IntegratedPlatform,
    model: &FeatureModel,
    config: &Configuration,
) -> Result<ArtifactGraph> {
    let violations = validate_configuration(model, config);
    if let Some(first) = violations.first() {
        return Err(Error::InvalidParameter(format!(
            "configuration breaks {} rule(s); first: {first}",
            violations.len()
        )));
    }
    let feature_of_signature: HashMap<&BTreeSet<String>, &str> = model
        .block_features()
        .map(|f| (&f.signature, f.name.as_str()))
        .collect();

    let root = build_node(
        &platform.root,
        platform,
        model,
        config,
        &feature_of_signature,
    )?
    .ok_or_else(|| {
        Error::InvalidParameter("the configuration excludes the platform root".into())
    })?;
    let graph = ArtifactGraph::with_preorder_ids("derived", root)?;
    crate::components::expand_all(&graph, &platform.components)
}

fn build_node(
    node: &PlatformNode,
    platform: &IntegratedPlatform,
    model: &FeatureModel,
    config: &Configuration,
    feature_of_signature: &HashMap<&BTreeSet<String>, &str>,
) -> Result<Option<ArtifactNode>> {
    let included = match &node.condition {
        Some(condition) => condition.eval(&|name| config.selected.contains(name)),
        None => {
            let signature: BTreeSet<String> = node.contents.keys().cloned().collect();
            feature_of_signature
                .get(&signature)
                .is_some_and(|name| config.selected.contains(*name))
        }
    };
    if !included {
        return Ok(None);
    }

    // Smallest content entry is the canonical representative.
    let content = node
        .contents
        .values()
        .min_by(|a, b| {
            (&a.label, &a.tokens, &a.attributes).cmp(&(&b.label, &b.tokens, &b.attributes))
        })
        .expect("platform nodes carry content");

    let mut built = ArtifactNode {
        id: NodeId(0),
        node_type: node.node_type,
        label: content.label.clone(),
        tokens: content.tokens.clone(),
        attributes: content.attributes.clone(),
        children: Vec::new(),
    };

    // Layer selections override the canonical instance binding.
    if node.node_type == NodeType::InstanceRef {
        let (component_id, canonical) = decode_instance_ref(&built)?;
        let instance = instance_feature_name(node.pid, &component_id);
        if let Some(layer_selected) = config.bindings.get(&instance) {
            let layer = model.layers.get(&component_id).ok_or_else(|| {
                Error::Binding(format!("no layer model for component {component_id}"))
            })?;
            let component = platform.components.get(&component_id).ok_or_else(|| {
                Error::Binding(format!("unknown component {component_id}"))
            })?;
            let mut binding = Binding::default();
            for optional in &component.optional_nodes {
                binding.optionals.insert(*optional, false);
            }
            for feature in &layer.features {
                if !layer_selected.contains(&feature.name) {
                    continue;
                }
                match &feature.binds {
                    Some(Binds::Parameter { name, value }) => {
                        binding.parameters.insert(name.clone(), value.clone());
                    }
                    Some(Binds::Optional { node }) => {
                        binding.optionals.insert(*node, true);
                    }
                    None => {}
                }
            }
            let _ = canonical;
            let replacement = instance_ref_node(&component_id, &binding);
            built.label = replacement.label;
            built.tokens = replacement.tokens;
            built.attributes = replacement.attributes;
        }
        return Ok(Some(built));
    }

    // Children order by mean position over the variants that know them.
    let mut ordered: Vec<(f64, usize)> = Vec::new();
    for (i, child) in node.children.iter().enumerate() {
        let keys: Vec<u32> = child.ordering.values().copied().collect();
        let mean = keys.iter().map(|&k| k as f64).sum::<f64>() / keys.len().max(1) as f64;
        ordered.push((mean, i));
    }
    ordered.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    for (_, i) in ordered {
        if let Some(child) = build_node(
            &node.children[i],
            platform,
            model,
            config,
            feature_of_signature,
        )? {
            built.children.push(child);
        }
    }
    Ok(Some(built))
}

// ---------------------------------------------------------------------------
// Percent encoding for values embedded in names and the textual format
// ---------------------------------------------------------------------------

fn plain_value_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-')
}

/// Encodes arbitrary text into the name-safe alphabet.
pub fn percent_encode(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if plain_value_char(c) {
            out.push(c);
        } else {
            let mut buf = [0u8; 4];
            for byte in c.encode_utf8(&mut buf).bytes() {
                out.push_str(&format!("%{byte:02X}"));
            }
        }
    }
    out
}

/// Reverses [`percent_encode`].
pub fn percent_decode(text: &str) -> Result<String> {
    let bytes = text.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = bytes
                .get(i + 1..i + 3)
                .and_then(|h| std::str::from_utf8(h).ok())
                .and_then(|h| u8::from_str_radix(h, 16).ok())
                .ok_or_else(|| {
                    Error::InvalidParameter(format!("malformed percent escape in {text:?}"))
                })?;
            out.push(hex);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out)
        .map_err(|_| Error::InvalidParameter(format!("percent escapes in {text:?} are not UTF-8")))
}

// ---------------------------------------------------------------------------
// Textual format
// ---------------------------------------------------------------------------

/// Renders the model in the line-oriented textual format.
pub fn print_feature_model(model: &FeatureModel) -> String {
    let mut out = String::new();
    out.push_str(&format!("variants {}\n", model.variants.join(",")));
    print_tree(&model.features, &mut out, 0);
    for group in &model.groups {
        print_group(group, &mut out, 0);
    }
    for constraint in &model.constraints {
        let verb = match constraint.kind {
            ConstraintKind::Requires => "requires",
            ConstraintKind::Excludes => "excludes",
        };
        out.push_str(&format!(
            "constraint {} {verb} {}\n",
            constraint.from, constraint.to
        ));
    }
    for layer in model.layers.values() {
        out.push_str(&format!("layer {}\n", layer.component_id));
        print_tree(&layer.features, &mut out, 1);
        for group in &layer.groups {
            print_group(group, &mut out, 1);
        }
        out.push_str("end\n");
    }
    out
}

fn print_group(group: &Group, out: &mut String, base: usize) {
    let kind = match group.kind {
        GroupKind::Xor => "xor",
        GroupKind::Or => "or",
    };
    out.push_str(&format!(
        "{}group {} {kind}: {}\n",
        "  ".repeat(base),
        group.parent,
        group.members.join(" ")
    ));
}

fn print_tree(features: &[Feature], out: &mut String, base: usize) {
    // Depth of each feature via its parent chain.
    let index: BTreeMap<&str, usize> = features
        .iter()
        .enumerate()
        .map(|(i, f)| (f.name.as_str(), i))
        .collect();
    let depth_of = |name: &str| -> usize {
        let mut current = &features[index[name]];
        let mut depth = 0;
        while let Some(parent) = current.parent.as_deref() {
            current = &features[index[parent]];
            depth += 1;
        }
        depth
    };
    // Emit in tree order: children directly after their parent.
    fn emit(
        name: &str,
        features: &[Feature],
        index: &BTreeMap<&str, usize>,
        depth: usize,
        base: usize,
        out: &mut String,
    ) {
        let feature = &features[index[name]];
        let mut line = format!(
            "{}feature {} {} sig={}",
            "  ".repeat(base + depth),
            feature.name,
            feature.variability,
            feature
                .signature
                .iter()
                .cloned()
                .collect::<Vec<_>>()
                .join(",")
        );
        if let Some(layer) = &feature.layer_ref {
            line.push_str(&format!(" layer={layer}"));
        }
        match &feature.binds {
            Some(Binds::Parameter { name, value }) => {
                line.push_str(&format!(" binds=param:{name}={}", percent_encode(value)));
            }
            Some(Binds::Optional { node }) => {
                line.push_str(&format!(" binds=opt:{}", node.0));
            }
            None => {}
        }
        line.push('\n');
        out.push_str(&line);
        for child in features.iter().filter(|f| f.parent.as_deref() == Some(name)) {
            emit(&child.name, features, index, depth + 1, base, out);
        }
    }
    for feature in features.iter().filter(|f| f.parent.is_none()) {
        emit(&feature.name, features, &index, depth_of(&feature.name), base, out);
    }
}

/// Parses the textual feature-model format.
pub fn parse_feature_model(text: &str) -> Result<FeatureModel> {
    let mut model = FeatureModel {
        variants: Vec::new(),
        features: Vec::new(),
        groups: Vec::new(),
        constraints: Vec::new(),
        layers: BTreeMap::new(),
    };
    let mut saw_variants = false;
    // (indent, name) stack for parents; rebuilt per tree section.
    let mut stack: Vec<(usize, String)> = Vec::new();
    let mut current_layer: Option<LayerModel> = None;

    for (line_no, raw) in text.lines().enumerate() {
        let line_no = line_no + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let indent = raw.len() - raw.trim_start().len();
        if indent % 2 != 0 {
            return Err(Error::parse(line_no, indent + 1, "odd indentation"));
        }
        let line = raw.trim_start();
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or_default();
        match keyword {
            "variants" => {
                if saw_variants {
                    return Err(Error::parse(line_no, 1, "duplicate variants line"));
                }
                saw_variants = true;
                let rest = line["variants".len()..].trim();
                if rest.is_empty() {
                    return Err(Error::parse(line_no, 1, "variants line lists no variants"));
                }
                model.variants = rest.split(',').map(|v| v.trim().to_string()).collect();
            }
            "feature" => {
                if !saw_variants {
                    return Err(Error::parse(line_no, 1, "feature before variants line"));
                }
                let feature = parse_feature_line(line, line_no)?;
                while stack.last().is_some_and(|&(d, _)| d >= indent) {
                    stack.pop();
                }
                let mut feature = feature;
                feature.parent = stack.last().map(|(_, name)| name.clone());
                if feature.parent.is_none() && feature.variability != Variability::Root {
                    return Err(Error::parse(
                        line_no,
                        1,
                        "top-level feature must be declared root",
                    ));
                }
                stack.push((indent, feature.name.clone()));
                match &mut current_layer {
                    Some(layer) => layer.features.push(feature),
                    None => model.features.push(feature),
                }
            }
            "group" => {
                let group = parse_group_line(line, line_no)?;
                match &mut current_layer {
                    Some(layer) => layer.groups.push(group),
                    None => model.groups.push(group),
                }
            }
            "constraint" => {
                if current_layer.is_some() {
                    return Err(Error::parse(line_no, 1, "constraints belong to the system layer"));
                }
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != 4 {
                    return Err(Error::parse(
                        line_no,
                        1,
                        "expected: constraint <from> requires|excludes <to>",
                    ));
                }
                let kind = match parts[2] {
                    "requires" => ConstraintKind::Requires,
                    "excludes" => ConstraintKind::Excludes,
                    other => {
                        return Err(Error::parse(
                            line_no,
                            1,
                            format!("unknown constraint kind {other:?}"),
                        ))
                    }
                };
                model.constraints.push(Constraint {
                    kind,
                    from: parts[1].to_string(),
                    to: parts[3].to_string(),
                });
            }
            "layer" => {
                if current_layer.is_some() {
                    return Err(Error::parse(line_no, 1, "layers do not nest"));
                }
                let id = words
                    .next()
                    .ok_or_else(|| Error::parse(line_no, 1, "layer line misses a component id"))?;
                current_layer = Some(LayerModel {
                    component_id: id.to_string(),
                    features: Vec::new(),
                    groups: Vec::new(),
                });
                stack.clear();
            }
            "end" => {
                let layer = current_layer
                    .take()
                    .ok_or_else(|| Error::parse(line_no, 1, "end without an open layer"))?;
                model.layers.insert(layer.component_id.clone(), layer);
                stack.clear();
            }
            other => {
                return Err(Error::parse(
                    line_no,
                    1,
                    format!("unknown directive {other:?}"),
                ))
            }
        }
    }
    if let Some(layer) = current_layer {
        return Err(Error::parse(
            text.lines().count(),
            1,
            format!("layer {} is not closed with end", layer.component_id),
        ));
    }
    if !saw_variants {
        return Err(Error::parse(1, 1, "missing variants line"));
    }
    validate_model(&model)?;
    Ok(model)
}

fn parse_feature_line(line: &str, line_no: usize) -> Result<Feature> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() < 4 {
        return Err(Error::parse(
            line_no,
            1,
            "expected: feature <name> <variability> sig=<variants> [layer=..] [binds=..]",
        ));
    }
    let name = parts[1].to_string();
    let variability = match parts[2] {
        "root" => Variability::Root,
        "mandatory" => Variability::Mandatory,
        "optional" => Variability::Optional,
        "grouped" => Variability::Grouped,
        other => {
            return Err(Error::parse(
                line_no,
                1,
                format!("unknown variability {other:?}"),
            ))
        }
    };
    let mut signature = BTreeSet::new();
    let mut layer_ref = None;
    let mut binds = None;
    let mut saw_sig = false;
    for part in &parts[3..] {
        if let Some(list) = part.strip_prefix("sig=") {
            saw_sig = true;
            for v in list.split(',').filter(|v| !v.is_empty()) {
                signature.insert(v.to_string());
            }
        } else if let Some(layer) = part.strip_prefix("layer=") {
            layer_ref = Some(layer.to_string());
        } else if let Some(spec) = part.strip_prefix("binds=") {
            binds = Some(parse_binds(spec, line_no)?);
        } else {
            return Err(Error::parse(
                line_no,
                1,
                format!("unknown feature attribute {part:?}"),
            ));
        }
    }
    if !saw_sig {
        return Err(Error::parse(line_no, 1, "feature line misses sig="));
    }
    Ok(Feature {
        name,
        parent: None,
        variability,
        signature,
        layer_ref,
        binds,
    })
}

fn parse_binds(spec: &str, line_no: usize) -> Result<Binds> {
    if let Some(rest) = spec.strip_prefix("param:") {
        let (name, value) = rest.split_once('=').ok_or_else(|| {
            Error::parse(line_no, 1, "binds=param needs the form param:<name>=<value>")
        })?;
        Ok(Binds::Parameter {
            name: name.to_string(),
            value: percent_decode(value)?,
        })
    } else if let Some(node) = spec.strip_prefix("opt:") {
        let id: u32 = node
            .parse()
            .map_err(|_| Error::parse(line_no, 1, format!("malformed node id {node:?}")))?;
        Ok(Binds::Optional { node: NodeId(id) })
    } else {
        Err(Error::parse(
            line_no,
            1,
            format!("unknown binds target {spec:?}"),
        ))
    }
}

fn parse_group_line(line: &str, line_no: usize) -> Result<Group> {
    // group <parent> <kind>: <members...>
    let rest = line.strip_prefix("group").unwrap_or(line).trim();
    let (head, members) = rest.split_once(':').ok_or_else(|| {
        Error::parse(line_no, 1, "expected: group <parent> xor|or: <members>")
    })?;
    let head_parts: Vec<&str> = head.split_whitespace().collect();
    if head_parts.len() != 2 {
        return Err(Error::parse(
            line_no,
            1,
            "expected: group <parent> xor|or: <members>",
        ));
    }
    let kind = match head_parts[1] {
        "xor" => GroupKind::Xor,
        "or" => GroupKind::Or,
        other => {
            return Err(Error::parse(
                line_no,
                1,
                format!("unknown group kind {other:?}"),
            ))
        }
    };
    let members: Vec<String> = members
        .split_whitespace()
        .map(|m| m.to_string())
        .collect();
    if members.len() < 2 {
        return Err(Error::parse(line_no, 1, "groups need at least two members"));
    }
    Ok(Group {
        parent: head_parts[0].to_string(),
        kind,
        members,
    })
}

/// Cross-checks names, parents, signatures and group members of a parsed
/// model.
fn validate_model(model: &FeatureModel) -> Result<()> {
    let variants: BTreeSet<&str> = model.variants.iter().map(|v| v.as_str()).collect();
    let check_tree = |features: &[Feature], groups: &[Group]| -> Result<()> {
        let mut names = BTreeSet::new();
        for f in features {
            if !names.insert(f.name.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate feature {}",
                    f.name
                )));
            }
            for v in &f.signature {
                if !variants.contains(v.as_str()) {
                    return Err(Error::UnknownVariant(v.clone()));
                }
            }
        }
        for f in features {
            if let Some(p) = &f.parent {
                if !names.contains(p.as_str()) {
                    return Err(Error::UnknownFeature(p.clone()));
                }
            }
        }
        for g in groups {
            if !names.contains(g.parent.as_str()) {
                return Err(Error::UnknownFeature(g.parent.clone()));
            }
            for m in &g.members {
                if !names.contains(m.as_str()) {
                    return Err(Error::UnknownFeature(m.clone()));
                }
            }
        }
        Ok(())
    };
    check_tree(&model.features, &model.groups)?;
    for layer in model.layers.values() {
        check_tree(&layer.features, &layer.groups)?;
    }
    for c in &model.constraints {
        for name in [&c.from, &c.to] {
            if model.feature(name).is_none() {
                return Err(Error::UnknownFeature(name.clone()));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clones::{detect_clones, DetectionConfig};
    use crate::components::refactor_graph;
    use crate::java::parse_source;
    use crate::platform::{integrate_all, IntegrationOrder};

    fn graph(variant: &str, source: &str) -> ArtifactGraph {
        parse_source(source, variant).unwrap()
    }

    fn platform_of(sources: &[(&str, &str)]) -> IntegratedPlatform {
        let graphs: Vec<ArtifactGraph> =
            sources.iter().map(|(v, s)| graph(v, s)).collect();
        integrate_all(&graphs, BTreeMap::new(), 0.75, IntegrationOrder::Given).unwrap()
    }

    fn select(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|n| n.to_string()).collect()
    }

    #[test]
    fn blocks_partition_the_platform_by_signature() {
        let platform = platform_of(&[
            ("a", "class A { void m() { x = 1; } void only() { y = 2; } }"),
            ("b", "class A { void m() { x = 1; } }"),
        ]);
        let blocks = compute_blocks(&platform);
        assert_eq!(blocks.len(), 2);
        let total: usize = blocks.iter().map(|b| b.pids.len()).sum();
        assert_eq!(total, platform.root.walk().count());
        assert!(blocks[0].signature.len() < blocks[1].signature.len());
    }

    #[test]
    fn shared_core_becomes_a_mandatory_feature() {
        let platform = platform_of(&[
            ("a", "class A { void m() { x = 1; } void only() { y = 2; } }"),
            ("b", "class A { void m() { x = 1; } }"),
        ]);
        let model = synthesize_features(&platform).unwrap();
        let root = model.feature(ROOT_FEATURE).unwrap();
        assert_eq!(root.variability, Variability::Root);
        let mandatory: Vec<&Feature> = model
            .block_features()
            .filter(|f| f.variability == Variability::Mandatory)
            .collect();
        assert_eq!(mandatory.len(), 1);
        assert_eq!(mandatory[0].signature, select(&["a", "b"]));
        let optional: Vec<&Feature> = model
            .block_features()
            .filter(|f| f.variability == Variability::Optional)
            .collect();
        assert_eq!(optional.len(), 1);
        assert_eq!(optional[0].signature, select(&["a"]));
    }

    #[test]
    fn partitioning_children_form_an_xor_group() {
        // Three variants: v1 keeps a method spanning v2+v3 out; the
        // remainder splits {v1} vs {v2,v3} under the shared core. The two
        // methods differ structurally so no integration tier merges them.
        let platform = platform_of(&[
            ("v1", "class A { void core() { c = 0; } void solo() { s = 1; } }"),
            ("v2", "class A { void core() { c = 0; } void pair() { p = 2; p = p + 1; } }"),
            ("v3", "class A { void core() { c = 0; } void pair() { p = 2; p = p + 1; } }"),
        ]);
        let model = synthesize_features(&platform).unwrap();
        assert_eq!(model.groups.len(), 1);
        let group = &model.groups[0];
        assert_eq!(group.kind, GroupKind::Xor);
        assert_eq!(group.members.len(), 2);
        for member in &group.members {
            assert_eq!(
                model.feature(member).unwrap().variability,
                Variability::Grouped
            );
        }
    }

    #[test]
    fn two_singleton_children_stay_optional() {
        let platform = platform_of(&[
            ("a", "class A { void core() { c = 0; } void m() { x = 1; } }"),
            ("b", "class A { void core() { c = 0; } void n() { y = 2; z = y + 4; } }"),
        ]);
        let model = synthesize_features(&platform).unwrap();
        assert!(model.groups.is_empty());
        assert!(model
            .block_features()
            .filter(|f| f.signature.len() == 1)
            .all(|f| f.variability == Variability::Optional));
    }

    #[test]
    fn overlapping_covering_children_form_an_or_group() {
        let platform = platform_of(&[
            ("a", "class A { void core() { c = 0; } void m() { x = 1; } }"),
            ("b", "class A { void core() { c = 0; } void m() { x = 1; } void n() { y = 2; } }"),
            ("c", "class A { void core() { c = 0; } void n() { y = 2; } }"),
        ]);
        let model = synthesize_features(&platform).unwrap();
        let or_groups: Vec<&Group> = model
            .groups
            .iter()
            .filter(|g| g.kind == GroupKind::Or)
            .collect();
        assert_eq!(or_groups.len(), 1);
        assert_eq!(or_groups[0].members.len(), 2);
    }

    #[test]
    fn containment_off_the_parent_chain_mines_requires() {
        // Method sigs: z in {a,c}, y in {b,c}, x in {c}. The parent of the
        // {c} feature is the {a,c} one (smaller signature wins the tie), so
        // {c} ⊂ {b,c} has to surface as a requires constraint.
        let platform = platform_of(&[
            ("a", "class A { void core() { k = 0; } void z() { z1 = 1; z2 = 2; z3 = 3; } }"),
            ("b", "class A { void core() { k = 0; } void y() { y1 = 1; y2 = 2; } }"),
            ("c", "class A { void core() { k = 0; } void z() { z1 = 1; z2 = 2; z3 = 3; } \
                    void y() { y1 = 1; y2 = 2; } void x() { x1 = 1; x2 = 2; x3 = 3; x4 = 4; } }"),
        ]);
        let model = synthesize_features(&platform).unwrap();
        let f_c = model
            .block_features()
            .find(|f| f.signature == select(&["c"]))
            .unwrap();
        let f_ac = model
            .block_features()
            .find(|f| f.signature == select(&["a", "c"]))
            .unwrap();
        let f_bc = model
            .block_features()
            .find(|f| f.signature == select(&["b", "c"]))
            .unwrap();
        assert_eq!(f_c.parent.as_deref(), Some(f_ac.name.as_str()));
        assert!(model.constraints.iter().any(|c| c.kind
            == ConstraintKind::Requires
            && c.from == f_c.name
            && c.to == f_bc.name));
    }

    #[test]
    fn transitive_requires_are_reduced() {
        // Method sigs: m_ad {a,d}, m_cd {c,d}, m_bcd {b,c,d}, m_d {d}. The
        // {d} feature parents under {a,d}, so both {d} ⊂ {c,d} and
        // {d} ⊂ {b,c,d} are off its chain; the second follows through
        // {c,d}'s parent edge and must be reduced away.
        let platform = platform_of(&[
            ("a", "class A { void core() { k = 0; } void m_ad() { a1 = 1; a2 = 2; } }"),
            ("b", "class A { void core() { k = 0; } void m_bcd() { b1 = 1; b2 = 2; b3 = 3; } }"),
            ("c", "class A { void core() { k = 0; } void m_bcd() { b1 = 1; b2 = 2; b3 = 3; } \
                    void m_cd() { c1 = 1; c2 = 2; c3 = 3; c4 = 4; } }"),
            ("d", "class A { void core() { k = 0; } void m_ad() { a1 = 1; a2 = 2; } \
                    void m_bcd() { b1 = 1; b2 = 2; b3 = 3; } \
                    void m_cd() { c1 = 1; c2 = 2; c3 = 3; c4 = 4; } \
                    void m_d() { d1 = 1; d2 = 2; d3 = 3; d4 = 4; d5 = 5; } }"),
        ]);
        let model = synthesize_features(&platform).unwrap();
        let f_d = model
            .block_features()
            .find(|f| f.signature == select(&["d"]))
            .unwrap();
        let f_ad = model
            .block_features()
            .find(|f| f.signature == select(&["a", "d"]))
            .unwrap();
        let f_cd = model
            .block_features()
            .find(|f| f.signature == select(&["c", "d"]))
            .unwrap();
        assert_eq!(f_d.parent.as_deref(), Some(f_ad.name.as_str()));
        let from_d: Vec<&Constraint> = model
            .constraints
            .iter()
            .filter(|c| c.kind == ConstraintKind::Requires && c.from == f_d.name)
            .collect();
        assert_eq!(from_d.len(), 1);
        assert_eq!(from_d[0].to, f_cd.name);
    }

    #[test]
    fn disjoint_features_exclude_each_other() {
        let platform = platform_of(&[
            ("a", "class A { void core() { c = 0; } void m() { x = 1; } }"),
            ("b", "class A { void core() { c = 0; } void n() { y = 2; z = 3; } }"),
        ]);
        let model = synthesize_features(&platform).unwrap();
        let excludes: Vec<&Constraint> = model
            .constraints
            .iter()
            .filter(|c| c.kind == ConstraintKind::Excludes)
            .collect();
        assert_eq!(excludes.len(), 1);
    }

    #[test]
    fn valid_and_invalid_selections_are_told_apart() {
        let platform = platform_of(&[
            ("a", "class A { void core() { c = 0; } void m() { x = 1; } }"),
            ("b", "class A { void core() { c = 0; } }"),
        ]);
        let model = synthesize_features(&platform).unwrap();
        let core = model
            .block_features()
            .find(|f| f.signature.len() == 2)
            .unwrap()
            .name
            .clone();
        let extra = model
            .block_features()
            .find(|f| f.signature.len() == 1)
            .unwrap()
            .name
            .clone();

        let ok = Configuration {
            selected: select(&[ROOT_FEATURE, &core, &extra]),
            bindings: BTreeMap::new(),
        };
        assert!(validate_configuration(&model, &ok).is_empty());

        let missing_root = Configuration {
            selected: select(&[&core]),
            bindings: BTreeMap::new(),
        };
        let violations = validate_configuration(&model, &missing_root);
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::RootNotSelected { .. })));

        let unknown = Configuration {
            selected: select(&[ROOT_FEATURE, &core, "F99"]),
            bindings: BTreeMap::new(),
        };
        assert!(validate_configuration(&model, &unknown)
            .iter()
            .any(|v| matches!(v, Violation::UnknownFeature { .. })));

        let orphan = Configuration {
            selected: select(&[ROOT_FEATURE, &extra]),
            bindings: BTreeMap::new(),
        };
        let violations = validate_configuration(&model, &orphan);
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::MandatoryChildMissing { .. })));
    }

    #[test]
    fn enumeration_matches_validation() {
        let platform = platform_of(&[
            ("v1", "class A { void core() { c = 0; } void solo() { s = 1; } }"),
            ("v2", "class A { void core() { c = 0; } void pair() { p = 2; p = p + 1; } }"),
            ("v3", "class A { void core() { c = 0; } void pair() { p = 2; p = p + 1; } }"),
        ]);
        let model = synthesize_features(&platform).unwrap();
        let configurations = enumerate_configurations(&model).unwrap();
        assert!(!configurations.is_empty());
        for selected in &configurations {
            assert!(validate_system(&model, selected).is_empty());
        }
        // The XOR group forbids selecting both members.
        let group = &model.groups[0];
        assert!(!configurations.iter().any(|c| group
            .members
            .iter()
            .all(|m| c.contains(m))));
    }

    #[test]
    fn every_variant_signature_is_a_valid_configuration() {
        let platform = platform_of(&[
            ("v1", "class A { void core() { c = 0; } void solo() { s = 1; } }"),
            ("v2", "class A { void core() { c = 0; } void pair() { p = 2; p = p + 1; } }"),
            ("v3", "class A { void core() { c = 0; } void pair() { p = 2; p = p + 1; } }"),
        ]);
        let model = synthesize_features(&platform).unwrap();
        for variant in &model.variants {
            let selected: BTreeSet<String> = model
                .features
                .iter()
                .filter(|f| f.layer_ref.is_none() && f.signature.contains(variant))
                .map(|f| f.name.clone())
                .collect();
            assert!(
                validate_system(&model, &selected).is_empty(),
                "variant {variant} selection is invalid: {:?}",
                validate_system(&model, &selected)
            );
        }
    }

    #[test]
    fn derive_configuration_reproduces_a_variant_selection() {
        let platform = platform_of(&[
            ("a", "class A { void core() { c = 0; } void m() { x = 1; } }"),
            ("b", "class A { void core() { c = 0; } }"),
        ]);
        let model = synthesize_features(&platform).unwrap();
        let for_b: BTreeSet<String> = model
            .features
            .iter()
            .filter(|f| f.layer_ref.is_none() && f.signature.contains("b"))
            .map(|f| f.name.clone())
            .collect();
        let derived = derive_configuration(
            &platform,
            &model,
            &Configuration {
                selected: for_b,
                bindings: BTreeMap::new(),
            },
        )
        .unwrap();
        let original = platform.derive_variant("b").unwrap();
        assert!(derived.root().content_eq(original.root()));
        assert_eq!(derived.variant_id(), "derived");
    }

    #[test]
    fn derive_configuration_rejects_invalid_selections() {
        let platform = platform_of(&[
            ("a", "class A { void core() { c = 0; } void m() { x = 1; } }"),
            ("b", "class A { void core() { c = 0; } }"),
        ]);
        let model = synthesize_features(&platform).unwrap();
        let err = derive_configuration(&platform, &model, &Configuration::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    fn refactored_platform() -> (IntegratedPlatform, Vec<ArtifactGraph>) {
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
                    void save(int m) { out = out + m; pos = pos + 1; }
                    void extra() { ping(host, port); }
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
            integrate_all(&refactored, components, 0.75, IntegrationOrder::Given).unwrap();
        (platform, originals)
    }

    #[test]
    fn instance_features_tie_blocks_to_layer_models() {
        let (platform, _) = refactored_platform();
        let model = synthesize_features(&platform).unwrap();
        let instances: Vec<&Feature> = model
            .features
            .iter()
            .filter(|f| f.layer_ref.is_some())
            .collect();
        assert_eq!(instances.len(), 2);
        for instance in &instances {
            assert_eq!(instance.variability, Variability::Mandatory);
            let layer = &model.layers[instance.layer_ref.as_ref().unwrap()];
            assert_eq!(layer.features[0].variability, Variability::Root);
            // Each parameter owns an XOR group over its observed values.
            for group in &layer.groups {
                assert_eq!(group.kind, GroupKind::Xor);
            }
        }
        assert_eq!(model.layers.len(), 1);
    }

    #[test]
    fn variant_configuration_is_valid_and_reproduces_the_variant() {
        let (platform, originals) = refactored_platform();
        let model = synthesize_features(&platform).unwrap();
        for original in &originals {
            let config =
                variant_configuration(&platform, &model, original.variant_id()).unwrap();
            let violations = validate_configuration(&model, &config);
            assert!(violations.is_empty(), "{violations:?}");
            let derived = derive_configuration(&platform, &model, &config).unwrap();
            assert!(
                derived.root().content_eq(original.root()),
                "derived tree for {} differs: {:?}",
                original.variant_id(),
                derived.root().first_difference(original.root())
            );
        }
    }

    #[test]
    fn variant_configuration_rejects_unknown_variants() {
        let (platform, _) = refactored_platform();
        let model = synthesize_features(&platform).unwrap();
        assert!(variant_configuration(&platform, &model, "nope").is_err());
    }

    #[test]
    fn canonical_bindings_complete_any_valid_selection() {
        let (platform, _) = refactored_platform();
        let model = synthesize_features(&platform).unwrap();
        for selected in enumerate_configurations(&model).unwrap() {
            let config = with_canonical_bindings(&platform, &model, selected).unwrap();
            let violations = validate_configuration(&model, &config);
            assert!(violations.is_empty(), "{violations:?}");
            derive_configuration(&platform, &model, &config).unwrap();
        }
    }

    #[test]
    fn layer_selection_overrides_the_instance_binding() {
        let (platform, originals) = refactored_platform();
        let model = synthesize_features(&platform).unwrap();
        // Select exactly variant a's features, but flip one instance's
        // parameter values to the other member's: the derived tree must
        // contain the other method body.
        let instance = model
            .features
            .iter()
            .find(|f| f.layer_ref.is_some() && f.signature.contains("a"))
            .unwrap();
        let layer = &model.layers[instance.layer_ref.as_ref().unwrap()];
        let selected: BTreeSet<String> = model
            .features
            .iter()
            .filter(|f| f.layer_ref.is_none() && f.signature.contains("a"))
            .map(|f| f.name.clone())
            .chain(
                model
                    .features
                    .iter()
                    .filter(|f| f.layer_ref.is_some() && f.signature.contains("a"))
                    .map(|f| f.name.clone()),
            )
            .collect();

        // Pick, per parameter, the value observed in the save() member.
        let mut layer_selected: BTreeSet<String> =
            BTreeSet::from([layer.component_id.clone()]);
        for feature in &layer.features {
            match (&feature.variability, &feature.binds) {
                (Variability::Mandatory, None) => {
                    layer_selected.insert(feature.name.clone());
                }
                _ => {}
            }
        }
        let save_values = ["save", "out", "pos", "m"];
        for feature in &layer.features {
            if let Some(Binds::Parameter { value, .. }) = &feature.binds {
                if save_values.contains(&value.as_str()) {
                    layer_selected.insert(feature.name.clone());
                }
            }
        }

        let mut bindings = BTreeMap::new();
        for f in model.features.iter().filter(|f| f.layer_ref.is_some()) {
            if selected.contains(&f.name) {
                bindings.insert(f.name.clone(), layer_selected.clone());
            }
        }
        let config = Configuration {
            selected,
            bindings,
        };
        let violations = validate_configuration(&model, &config);
        assert!(violations.is_empty(), "{violations:?}");
        let derived = derive_configuration(&platform, &model, &config).unwrap();
        // Both instances now expand to the save() body.
        let labels: Vec<&str> = derived
            .nodes()
            .filter(|n| n.node_type == NodeType::Method)
            .map(|n| n.label.as_str())
            .collect();
        assert_eq!(labels.iter().filter(|l| l.contains("save")).count(), 2);
        let _ = originals;
    }

    #[test]
    fn textual_format_round_trips() {
        let (platform, _) = refactored_platform();
        let model = synthesize_features(&platform).unwrap();
        let text = print_feature_model(&model);
        let reparsed = parse_feature_model(&text).unwrap();
        assert_eq!(model, reparsed);
        assert_eq!(print_feature_model(&reparsed), text);
    }

    #[test]
    fn textual_format_errors_name_their_line() {
        assert!(matches!(
            parse_feature_model("feature F1 optional sig=a\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        match parse_feature_model("variants a,b\nfeature ROOT root sig=a,b\nnonsense\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_feature_model("variants a\nfeature ROOT root sig=a\nlayer C1\n").is_err());
    }

    #[test]
    fn percent_encoding_round_trips() {
        for value in ["plain", "\"a b\"", "x%y", "emoji \u{1F600}", "1+2=3"] {
            let encoded = percent_encode(value);
            assert!(encoded
                .chars()
                .all(|c| plain_value_char(c) || c == '%'));
            assert_eq!(percent_decode(&encoded).unwrap(), value);
        }
        assert!(percent_decode("%GZ").is_err());
        assert!(percent_decode("%2").is_err());
    }

    #[test]
    fn enumeration_respects_the_feature_bound() {
        let mut model = FeatureModel {
            variants: vec!["a".into()],
            features: vec![Feature {
                name: ROOT_FEATURE.into(),
                parent: None,
                variability: Variability::Root,
                signature: select(&["a"]),
                layer_ref: None,
                binds: None,
            }],
            groups: Vec::new(),
            constraints: Vec::new(),
            layers: BTreeMap::new(),
        };
        for i in 0..25 {
            model.features.push(Feature {
                name: format!("F{i}"),
                parent: Some(ROOT_FEATURE.into()),
                variability: Variability::Optional,
                signature: select(&["a"]),
                layer_ref: None,
                binds: None,
            });
        }
        assert!(matches!(
            enumerate_configurations(&model),
            Err(Error::LimitExceeded(_))
        ));
    }
}
