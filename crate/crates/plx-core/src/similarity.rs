//! Token- and tree-level similarity.
//!
//! `token_similarity` is the normalized longest-common-subsequence measure
//! `2 * |LCS(a, b)| / (|a| + |b|)`. `node_similarity` lifts it to subtrees:
//! leaves compare their token sequences, inner nodes blend label similarity
//! (weight 0.3) with a child similarity obtained by greedily pairing children
//! in descending similarity order. Scores are always in [0, 1]; nodes of
//! different types score 0.
//!
//! `similarity_upper_bound` is an admissible estimate (never below the true
//! score) used by clone detection to skip hopeless comparisons cheaply.

use std::cell::RefCell;
use std::collections::HashMap;

use crate::graph::{ArtifactNode, NodeId};
use crate::hash::Digest;
use crate::lex::tokenize_text;

/// Weight of the label term in inner-node similarity; children carry the
/// remaining 0.7.
pub const LABEL_WEIGHT: f64 = 0.3;

/// Length of the longest common subsequence, O(|a|*|b|) with two rows.
fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for item_a in a {
        for (j, item_b) in b.iter().enumerate() {
            curr[j + 1] = if item_a == item_b {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Normalized LCS similarity over token sequences. Two empty sequences are
/// identical (1.0).
pub fn token_similarity<S: PartialEq>(a: &[S], b: &[S]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * lcs_len(a, b) as f64 / (a.len() + b.len()) as f64
}

fn label_similarity(a: &str, b: &str) -> f64 {
    if a == b {
        return 1.0;
    }
    token_similarity(&tokenize_text(a), &tokenize_text(b))
}

/// A greedy child pairing: all cross pairs sorted by descending similarity,
/// ties broken by the unordered pair of EXACT digests and finally by index,
/// consumed into a one-to-one matching. The digest tie-break keeps the result
/// independent of which side is "left" and of sibling order.
pub(crate) fn greedy_child_pairs(
    left: &[ArtifactNode],
    right: &[ArtifactNode],
    cutoff: Option<f64>,
) -> Vec<(usize, usize, f64)> {
    if left.is_empty() || right.is_empty() {
        return Vec::new();
    }
    let digest_of = |node: &ArtifactNode| -> Digest {
        crate::hash::canonical_hash(node, crate::hash::Abstraction::Exact)
    };
    let left_digests: Vec<Digest> = left.iter().map(digest_of).collect();
    let right_digests: Vec<Digest> = right.iter().map(digest_of).collect();

    let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(left.len() * right.len());
    for (i, a) in left.iter().enumerate() {
        for (j, b) in right.iter().enumerate() {
            let sim = node_similarity(a, b);
            if sim <= 0.0 {
                continue;
            }
            if let Some(theta) = cutoff {
                if sim < theta {
                    continue;
                }
            }
            pairs.push((i, j, sim));
        }
    }
    pairs.sort_by(|x, y| {
        y.2.partial_cmp(&x.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                let kx = ordered_digest_pair(left_digests[x.0], right_digests[x.1]);
                let ky = ordered_digest_pair(left_digests[y.0], right_digests[y.1]);
                kx.cmp(&ky)
            })
            .then_with(|| (x.0, x.1).cmp(&(y.0, y.1)))
    });

    let mut used_left = vec![false; left.len()];
    let mut used_right = vec![false; right.len()];
    let mut matched = Vec::new();
    for (i, j, sim) in pairs {
        if used_left[i] || used_right[j] {
            continue;
        }
        used_left[i] = true;
        used_right[j] = true;
        matched.push((i, j, sim));
    }
    matched
}

fn ordered_digest_pair(a: Digest, b: Digest) -> (Digest, Digest) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Structural similarity of two subtrees in [0, 1].
pub fn node_similarity(a: &ArtifactNode, b: &ArtifactNode) -> f64 {
    if a.node_type != b.node_type {
        return 0.0;
    }
    if a.node_type.is_leaf_kind() {
        return token_similarity(&a.tokens, &b.tokens);
    }
    let label_sim = label_similarity(&a.label, &b.label);
    let child_sim = if a.children.is_empty() && b.children.is_empty() {
        1.0
    } else {
        let matched = greedy_child_pairs(&a.children, &b.children, None);
        let total: f64 = matched.iter().map(|&(_, _, s)| s).sum();
        2.0 * total / (a.children.len() + b.children.len()) as f64
    };
    LABEL_WEIGHT * label_sim + (1.0 - LABEL_WEIGHT) * child_sim
}

/// Precomputed token data for fast admissible bounds over subtrees of one
/// graph. Tokens are interned once so per-pair work runs on sorted integer
/// slices, and inner-node pair bounds are memoized so coarse granularities
/// reuse the bounds already computed at finer ones. Keys are node ids, so
/// every node fed to [`BoundContext::bound`] must come from the trees the
/// context was built over.
pub(crate) struct BoundContext {
    /// Sorted interned tokens per leaf node.
    leaf_tokens: HashMap<NodeId, Vec<u32>>,
    /// Interned label tokens, in order, per labelled inner node.
    label_tokens: HashMap<NodeId, Vec<u32>>,
    memo: RefCell<HashMap<(NodeId, NodeId), f64>>,
}

/// Sibling cross products larger than this fall back to the pure count
/// bound, capping the per-level cost of a bound computation.
const PAIR_LIMIT: usize = 256;

impl BoundContext {
    pub(crate) fn new(roots: &[&ArtifactNode]) -> BoundContext {
        fn intern(interner: &mut HashMap<String, u32>, token: &str) -> u32 {
            if let Some(&id) = interner.get(token) {
                return id;
            }
            let id = interner.len() as u32;
            interner.insert(token.to_string(), id);
            id
        }
        let mut interner: HashMap<String, u32> = HashMap::new();
        let mut leaf_tokens = HashMap::new();
        let mut label_tokens = HashMap::new();
        for root in roots {
            for node in root.walk() {
                if node.node_type.is_leaf_kind() {
                    let mut ids: Vec<u32> =
                        node.tokens.iter().map(|t| intern(&mut interner, t)).collect();
                    ids.sort_unstable();
                    leaf_tokens.insert(node.id, ids);
                } else if !node.label.is_empty() {
                    let ids: Vec<u32> = tokenize_text(&node.label)
                        .iter()
                        .map(|t| intern(&mut interner, t))
                        .collect();
                    label_tokens.insert(node.id, ids);
                }
            }
        }
        BoundContext { leaf_tokens, label_tokens, memo: RefCell::new(HashMap::new()) }
    }

    /// Admissible upper bound on [`node_similarity`] for two subtrees of
    /// the context's trees.
    pub(crate) fn bound(&self, a: &ArtifactNode, b: &ArtifactNode) -> f64 {
        if a.node_type != b.node_type {
            return 0.0;
        }
        if a.node_type.is_leaf_kind() {
            // An LCS match consumes one occurrence of a token from each
            // side, so LCS length never exceeds the multiset intersection.
            let (na, nb) = (a.tokens.len(), b.tokens.len());
            if na == 0 && nb == 0 {
                return 1.0;
            }
            let shared = sorted_intersection(&self.leaf_tokens[&a.id], &self.leaf_tokens[&b.id]);
            return 2.0 * shared as f64 / (na + nb) as f64;
        }
        let key = if a.id <= b.id { (a.id, b.id) } else { (b.id, a.id) };
        if let Some(&cached) = self.memo.borrow().get(&key) {
            return cached;
        }
        // Labels are short, so the label term is computed exactly.
        let label_sim = token_similarity(self.label_of(a.id), self.label_of(b.id));
        let (na, nb) = (a.children.len(), b.children.len());
        let child_bound = if na == 0 && nb == 0 {
            1.0
        } else if na == 0 || nb == 0 {
            0.0
        } else if na * nb > PAIR_LIMIT {
            2.0 * na.min(nb) as f64 / (na + nb) as f64
        } else {
            // Row-maximum relaxation: the true greedy matching cannot exceed
            // the sum of per-row maxima on either side, nor min(n, m).
            let mut row_max = vec![0.0f64; na];
            let mut col_max = vec![0.0f64; nb];
            for (i, ca) in a.children.iter().enumerate() {
                for (j, cb) in b.children.iter().enumerate() {
                    let bound = self.bound(ca, cb);
                    if bound > row_max[i] {
                        row_max[i] = bound;
                    }
                    if bound > col_max[j] {
                        col_max[j] = bound;
                    }
                }
            }
            let sum = row_max
                .iter()
                .sum::<f64>()
                .min(col_max.iter().sum::<f64>())
                .min(na.min(nb) as f64);
            2.0 * sum / (na + nb) as f64
        };
        let value = LABEL_WEIGHT * label_sim + (1.0 - LABEL_WEIGHT) * child_bound;
        self.memo.borrow_mut().insert(key, value);
        value
    }

    fn label_of(&self, id: NodeId) -> &[u32] {
        self.label_tokens.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Size of the multiset intersection of two sorted slices.
fn sorted_intersection(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut shared) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                shared += 1;
                i += 1;
                j += 1;
            }
        }
    }
    shared
}

/// Cheap admissible upper bound on [`node_similarity`].
///
/// Leaves bound LCS length by the token multiset intersection; inner nodes
/// use the exact label similarity (labels are short) and bound the child
/// term by the best fractional pairing of per-pair bounds, capped at
/// `min(n, m)` matched children. Detection holds a [`BoundContext`] per
/// graph to amortize the token work; this entry point builds a throwaway
/// context, renumbering ids first so subtrees from different graphs cannot
/// collide.
pub fn similarity_upper_bound(a: &ArtifactNode, b: &ArtifactNode) -> f64 {
    let mut ca = a.clone();
    let next = ca.renumber_preorder(0);
    let mut cb = b.clone();
    cb.renumber_preorder(next);
    let ctx = BoundContext::new(&[&ca, &cb]);
    ctx.bound(&ca, &cb)
}
