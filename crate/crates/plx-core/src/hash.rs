//! Canonical subtree hashing in two modes.
//!
//! EXACT digests cover a node's type, label, tokens, and the digests of its
//! children in order. ABSTRACTED digests first rewrite the subtree under a
//! consistent renaming that starts fresh at the subtree root: identifier
//! tokens become ID1, ID2, ... in first-occurrence order, literal tokens
//! collapse to LIT, and operators pass through. Labels participate in the
//! same renaming (via their token forms), so a consistently renamed method
//! keeps its abstracted digest. Attributes never contribute to either mode.
//!
//! The renaming is purely lexical. Keywords are identifiers like any other;
//! nothing in the hash knows the source language.

use std::collections::HashMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use crate::graph::{ArtifactNode, NodeId, NodeType};
use crate::lex::{classify, tokenize_text, TokenClass};

/// Which canonical form a digest was computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Abstraction {
    Exact,
    Abstracted,
}

/// A 32-byte canonical digest. Ordering is bytewise and serialization is
/// lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First 12 hex characters, used where digests become identifiers.
    pub fn short_hex(&self) -> String {
        hex::encode(&self.0[..6])
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        let bytes = hex::decode(&text).map_err(D::Error::custom)?;
        let array: [u8; 32] = bytes
            .try_into()
            .map_err(|_| D::Error::custom("digest must be 32 bytes of hex"))?;
        Ok(Digest(array))
    }
}

pub(crate) fn type_tag(node_type: NodeType) -> u8 {
    match node_type {
        NodeType::System => 0,
        NodeType::Package => 1,
        NodeType::Class => 2,
        NodeType::Method => 3,
        NodeType::Block => 4,
        NodeType::Statement => 5,
        NodeType::InstanceRef => 6,
    }
}

fn feed_str(hasher: &mut Sha256, text: &str) {
    hasher.update((text.len() as u32).to_le_bytes());
    hasher.update(text.as_bytes());
}

fn feed_items(hasher: &mut Sha256, items: &[String]) {
    hasher.update((items.len() as u32).to_le_bytes());
    for item in items {
        feed_str(hasher, item);
    }
}

fn exact_digest(node: &ArtifactNode) -> Digest {
    let mut hasher = Sha256::new();
    hasher.update([b'E', type_tag(node.node_type)]);
    feed_str(&mut hasher, &node.label);
    feed_items(&mut hasher, &node.tokens);
    hasher.update((node.children.len() as u32).to_le_bytes());
    for child in &node.children {
        hasher.update(exact_digest(child).0);
    }
    Digest(hasher.finalize().into())
}

struct Renamer {
    map: HashMap<String, String>,
    next: usize,
}

impl Renamer {
    fn new() -> Self {
        Renamer {
            map: HashMap::new(),
            next: 1,
        }
    }

    fn rewrite(&mut self, token: &str) -> String {
        match classify(token) {
            TokenClass::Identifier => {
                if let Some(name) = self.map.get(token) {
                    return name.clone();
                }
                let name = format!("ID{}", self.next);
                self.next += 1;
                self.map.insert(token.to_string(), name.clone());
                name
            }
            TokenClass::Literal => "LIT".to_string(),
            TokenClass::Operator => token.to_string(),
        }
    }
}

fn abstracted_digest_with(node: &ArtifactNode, renamer: &mut Renamer) -> Digest {
    let label_tokens: Vec<String> = tokenize_text(&node.label)
        .iter()
        .map(|t| renamer.rewrite(t))
        .collect();
    let tokens: Vec<String> = node.tokens.iter().map(|t| renamer.rewrite(t)).collect();
    let mut child_digests = Vec::with_capacity(node.children.len());
    for child in &node.children {
        child_digests.push(abstracted_digest_with(child, renamer));
    }
    let mut hasher = Sha256::new();
    hasher.update([b'A', type_tag(node.node_type)]);
    feed_items(&mut hasher, &label_tokens);
    feed_items(&mut hasher, &tokens);
    hasher.update((child_digests.len() as u32).to_le_bytes());
    for digest in child_digests {
        hasher.update(digest.0);
    }
    Digest(hasher.finalize().into())
}

/// Canonical digest of the subtree rooted at `node`. ABSTRACTED digests open
/// a fresh renaming at `node`, so the abstracted digest of a node is not a
/// function of its children's standalone abstracted digests.
pub fn canonical_hash(node: &ArtifactNode, abstraction: Abstraction) -> Digest {
    match abstraction {
        Abstraction::Exact => exact_digest(node),
        Abstraction::Abstracted => abstracted_digest_with(node, &mut Renamer::new()),
    }
}

/// EXACT digests for every subtree of `root`, computed bottom-up in one pass.
pub fn exact_hash_map(root: &ArtifactNode) -> HashMap<NodeId, Digest> {
    fn rec(node: &ArtifactNode, out: &mut HashMap<NodeId, Digest>) -> Digest {
        let mut hasher = Sha256::new();
        hasher.update([b'E', type_tag(node.node_type)]);
        feed_str(&mut hasher, &node.label);
        feed_items(&mut hasher, &node.tokens);
        hasher.update((node.children.len() as u32).to_le_bytes());
        let mut child_digests = Vec::with_capacity(node.children.len());
        for child in &node.children {
            child_digests.push(rec(child, out));
        }
        for digest in &child_digests {
            hasher.update(digest.0);
        }
        let digest = Digest(hasher.finalize().into());
        out.insert(node.id, digest);
        digest
    }
    let mut out = HashMap::new();
    rec(root, &mut out);
    out
}

/// ABSTRACTED digests for every subtree of `root`. Each node opens its own
/// renaming, so this costs one full walk per node.
pub fn abstracted_hash_map(root: &ArtifactNode) -> HashMap<NodeId, Digest> {
    root.walk()
        .map(|node| (node.id, canonical_hash(node, Abstraction::Abstracted)))
        .collect()
}
