//! Artifact trees: the typed, ordered, rooted trees that represent one
//! product variant at every granularity from whole system down to single
//! statement.
//!
//! A tree is plain data (`ArtifactNode`); a validated tree with a variant
//! identity and an id index is an `ArtifactGraph`. All algorithms in the
//! crate take graphs, so structural invariants are checked exactly once, at
//! construction.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Granularity of an artifact node, coarsest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeType {
    System,
    Package,
    Class,
    Method,
    Block,
    Statement,
    InstanceRef,
}

impl NodeType {
    /// Node types that may appear as children of `self`. `InstanceRef` is a
    /// valid child of every container because a reference can stand in for
    /// any extracted subtree, wherever that subtree sat.
    pub fn allowed_children(self) -> &'static [NodeType] {
        use NodeType::*;
        match self {
            System => &[Package, Class, InstanceRef],
            Package => &[Package, Class, InstanceRef],
            Class => &[Method, InstanceRef],
            Method => &[Block, Statement, InstanceRef],
            Block => &[Block, Statement, InstanceRef],
            Statement => &[],
            InstanceRef => &[],
        }
    }

    /// Leaf node types: the only ones that carry tokens.
    pub fn is_leaf_kind(self) -> bool {
        matches!(self, NodeType::Statement | NodeType::InstanceRef)
    }

    /// Node types that must carry a non-empty label.
    pub fn requires_label(self) -> bool {
        matches!(self, NodeType::Class | NodeType::Method)
    }

    /// All node types, coarsest first.
    pub fn all() -> &'static [NodeType] {
        use NodeType::*;
        &[System, Package, Class, Method, Block, Statement, InstanceRef]
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            NodeType::System => "SYSTEM",
            NodeType::Package => "PACKAGE",
            NodeType::Class => "CLASS",
            NodeType::Method => "METHOD",
            NodeType::Block => "BLOCK",
            NodeType::Statement => "STATEMENT",
            NodeType::InstanceRef => "INSTANCE_REF",
        };
        f.write_str(name)
    }
}

/// Identifier of a node within one graph. Ids are unique per graph and
/// assigned in pre-order by the parsers; algorithms only require uniqueness.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One node of an artifact tree. `tokens` is populated only on leaves
/// (statements and instance references); `attributes` carries open key/value
/// metadata that content comparison honors but canonical hashing ignores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactNode {
    pub id: NodeId,
    pub node_type: NodeType,
    pub label: String,
    pub tokens: Vec<String>,
    pub attributes: BTreeMap<String, String>,
    pub children: Vec<ArtifactNode>,
}

impl ArtifactNode {
    /// Creates an inner node with a label and children. The id is assigned
    /// later by [`ArtifactGraph::with_preorder_ids`] or by the caller.
    pub fn inner(node_type: NodeType, label: impl Into<String>, children: Vec<ArtifactNode>) -> Self {
        ArtifactNode {
            id: NodeId(0),
            node_type,
            label: label.into(),
            tokens: Vec::new(),
            attributes: BTreeMap::new(),
            children,
        }
    }

    /// Creates a statement leaf from its tokens.
    pub fn statement<S: Into<String>>(tokens: Vec<S>) -> Self {
        ArtifactNode {
            id: NodeId(0),
            node_type: NodeType::Statement,
            label: String::new(),
            tokens: tokens.into_iter().map(Into::into).collect(),
            attributes: BTreeMap::new(),
            children: Vec::new(),
        }
    }

    /// Pre-order iteration over the subtree rooted here.
    pub fn walk(&self) -> impl Iterator<Item = &ArtifactNode> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let node = stack.pop()?;
            for child in node.children.iter().rev() {
                stack.push(child);
            }
            Some(node)
        })
    }

    /// Number of nodes in the subtree rooted here.
    pub fn node_count(&self) -> usize {
        self.walk().count()
    }

    /// Total number of tokens in the subtree rooted here. Used as the size
    /// gate for clone candidates.
    pub fn token_mass(&self) -> usize {
        self.walk().map(|n| n.tokens.len()).sum()
    }

    /// Structural and textual equality that ignores node ids. Attributes
    /// participate: two nodes that differ only in metadata are not equal
    /// content.
    pub fn content_eq(&self, other: &ArtifactNode) -> bool {
        self.node_type == other.node_type
            && self.label == other.label
            && self.tokens == other.tokens
            && self.attributes == other.attributes
            && self.children.len() == other.children.len()
            && self
                .children
                .iter()
                .zip(&other.children)
                .all(|(a, b)| a.content_eq(b))
    }

    /// Path to the first content difference against `other`, for diagnostics.
    /// `None` when the subtrees are content-equal.
    pub fn first_difference(&self, other: &ArtifactNode) -> Option<String> {
        fn rec(a: &ArtifactNode, b: &ArtifactNode, path: &str) -> Option<String> {
            if a.node_type != b.node_type {
                return Some(format!("{path}: node type {} vs {}", a.node_type, b.node_type));
            }
            if a.label != b.label {
                return Some(format!("{path}: label {:?} vs {:?}", a.label, b.label));
            }
            if a.tokens != b.tokens {
                return Some(format!("{path}: tokens {:?} vs {:?}", a.tokens, b.tokens));
            }
            if a.attributes != b.attributes {
                return Some(format!(
                    "{path}: attributes {:?} vs {:?}",
                    a.attributes, b.attributes
                ));
            }
            if a.children.len() != b.children.len() {
                return Some(format!(
                    "{path}: child count {} vs {}",
                    a.children.len(),
                    b.children.len()
                ));
            }
            for (i, (ca, cb)) in a.children.iter().zip(&b.children).enumerate() {
                let sub = format!("{path}/{}[{}]", ca.node_type, i);
                if let Some(diff) = rec(ca, cb, &sub) {
                    return Some(diff);
                }
            }
            None
        }
        rec(self, other, "root")
    }

    /// Reassigns ids across the subtree in pre-order starting from `next`.
    /// Returns the first id not handed out.
    pub fn renumber_preorder(&mut self, mut next: u32) -> u32 {
        self.id = NodeId(next);
        next += 1;
        for child in &mut self.children {
            next = child.renumber_preorder(next);
        }
        next
    }

    fn validate(&self) -> Result<()> {
        if self.node_type.requires_label() && self.label.is_empty() {
            return Err(Error::structure(
                self.id.0,
                format!("{} nodes require a non-empty label", self.node_type),
            ));
        }
        if !self.node_type.is_leaf_kind() && !self.tokens.is_empty() {
            return Err(Error::structure(
                self.id.0,
                format!("{} nodes must not carry tokens", self.node_type),
            ));
        }
        if self.node_type == NodeType::InstanceRef && self.tokens.is_empty() {
            return Err(Error::structure(
                self.id.0,
                "INSTANCE_REF nodes must carry their binding tokens",
            ));
        }
        if self.node_type.is_leaf_kind() && !self.children.is_empty() {
            return Err(Error::structure(
                self.id.0,
                format!("{} nodes must be leaves", self.node_type),
            ));
        }
        let allowed = self.node_type.allowed_children();
        for child in &self.children {
            if !allowed.contains(&child.node_type) {
                return Err(Error::structure(
                    child.id.0,
                    format!(
                        "{} is not a valid child of {}",
                        child.node_type, self.node_type
                    ),
                ));
            }
            child.validate()?;
        }
        Ok(())
    }
}

/// Returns true when `id` is a well-formed variant id. Ids are embedded in
/// comma- and line-oriented document formats, so the alphabet is restricted.
pub fn valid_variant_id(id: &str) -> bool {
    let mut chars = id.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphanumeric() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

/// A validated artifact tree for one variant. Construction checks the root
/// type, the nesting rules, token placement, and id uniqueness; lookups by id
/// are O(depth) through a path index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactGraph {
    variant_id: String,
    root: ArtifactNode,
    #[serde(skip)]
    index: HashMap<NodeId, Vec<u32>>,
}

impl ArtifactGraph {
    /// Validates `root` and builds the graph. Node ids must already be
    /// unique; use [`ArtifactGraph::with_preorder_ids`] when they are not.
    pub fn new(variant_id: impl Into<String>, root: ArtifactNode) -> Result<Self> {
        let variant_id = variant_id.into();
        if !valid_variant_id(&variant_id) {
            return Err(Error::InvalidParameter(format!(
                "variant id {variant_id:?} must match [A-Za-z0-9_][A-Za-z0-9_.-]*"
            )));
        }
        if root.node_type != NodeType::System {
            return Err(Error::structure(
                root.id.0,
                format!("root must be a SYSTEM node, found {}", root.node_type),
            ));
        }
        root.validate()?;
        let index = build_index(&root)?;
        Ok(ArtifactGraph {
            variant_id,
            root,
            index,
        })
    }

    /// Renumbers ids in pre-order, then validates and builds the graph.
    pub fn with_preorder_ids(variant_id: impl Into<String>, mut root: ArtifactNode) -> Result<Self> {
        root.renumber_preorder(0);
        ArtifactGraph::new(variant_id, root)
    }

    pub fn variant_id(&self) -> &str {
        &self.variant_id
    }

    pub fn root(&self) -> &ArtifactNode {
        &self.root
    }

    /// Consumes the graph, returning the tree.
    pub fn into_root(self) -> ArtifactNode {
        self.root
    }

    /// Total node count.
    pub fn node_count(&self) -> usize {
        self.index.len()
    }

    /// Looks a node up by id.
    pub fn node(&self, id: NodeId) -> Option<&ArtifactNode> {
        let path = self.index.get(&id)?;
        let mut node = &self.root;
        for &step in path {
            node = node.children.get(step as usize)?;
        }
        Some(node)
    }

    /// Like [`ArtifactGraph::node`] but failing with [`Error::UnknownNode`].
    pub fn require_node(&self, id: NodeId) -> Result<&ArtifactNode> {
        self.node(id).ok_or(Error::UnknownNode(id.0))
    }

    /// Id of the parent of `id`, or `None` for the root.
    pub fn parent_of(&self, id: NodeId) -> Option<NodeId> {
        let path = self.index.get(&id)?;
        if path.is_empty() {
            return None;
        }
        let mut node = &self.root;
        for &step in &path[..path.len() - 1] {
            node = node.children.get(step as usize)?;
        }
        Some(node.id)
    }

    /// Depth of `id` below the root (root is 0).
    pub fn depth_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).map(|p| p.len())
    }

    /// True when `ancestor` lies strictly above `id`.
    pub fn is_strict_ancestor(&self, ancestor: NodeId, id: NodeId) -> bool {
        if ancestor == id {
            return false;
        }
        let (Some(pa), Some(pb)) = (self.index.get(&ancestor), self.index.get(&id)) else {
            return false;
        };
        pa.len() < pb.len() && pb[..pa.len()] == pa[..]
    }

    /// Pre-order iteration over all nodes.
    pub fn nodes(&self) -> impl Iterator<Item = &ArtifactNode> {
        self.root.walk()
    }

    /// Rebuilds the graph with a set of subtree replacements applied. Each
    /// map entry replaces the node with that id (and its whole subtree);
    /// `None` removes the node. Replacement roots must carry fresh unique
    /// ids; validation reruns on the result.
    pub fn replace_subtrees(
        &self,
        replacements: &HashMap<NodeId, Option<ArtifactNode>>,
    ) -> Result<ArtifactGraph> {
        for id in replacements.keys() {
            self.require_node(*id)?;
        }
        fn rebuild(
            node: &ArtifactNode,
            replacements: &HashMap<NodeId, Option<ArtifactNode>>,
        ) -> Option<ArtifactNode> {
            if let Some(replacement) = replacements.get(&node.id) {
                return replacement.clone();
            }
            let mut copy = node.clone();
            copy.children = node
                .children
                .iter()
                .filter_map(|c| rebuild(c, replacements))
                .collect();
            Some(copy)
        }
        let root = rebuild(&self.root, replacements).ok_or_else(|| {
            Error::structure(self.root.id.0, "the root node cannot be removed")
        })?;
        ArtifactGraph::new(self.variant_id.clone(), root)
    }
}

fn build_index(root: &ArtifactNode) -> Result<HashMap<NodeId, Vec<u32>>> {
    let mut index = HashMap::new();
    fn rec(
        node: &ArtifactNode,
        path: &mut Vec<u32>,
        index: &mut HashMap<NodeId, Vec<u32>>,
    ) -> Result<()> {
        if index.insert(node.id, path.clone()).is_some() {
            return Err(Error::structure(node.id.0, "duplicate node id"));
        }
        for (i, child) in node.children.iter().enumerate() {
            path.push(i as u32);
            rec(child, path, index)?;
            path.pop();
        }
        Ok(())
    }
    rec(root, &mut Vec::new(), &mut index)?;
    Ok(index)
}
