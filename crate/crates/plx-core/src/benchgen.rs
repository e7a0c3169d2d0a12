//! Seeded benchmark generator with ground-truth clone records.
//!
//! The generator starts from a synthetic seed system, derives a family of
//! variants by mutating copies of that seed, and then plants clone pairs of
//! known type and granularity inside each variant. Every planted pair is
//! recorded as a [`TruthRecord`], so detector output can be scored against
//! an exact answer key.
//!
//! Three properties make the corpus suitable for measurement:
//!
//! * **Determinism.** All randomness flows through a single ChaCha8 stream
//!   seeded from the configuration, so the same configuration always yields
//!   byte-identical variants and truth records.
//! * **Disjoint truth.** Clone sources and copies are claimed once planted;
//!   later injections may not reuse a claimed subtree, sit inside one, or
//!   contain one. Seed methods are built pairwise structurally distinct (and
//!   [`seed_graph`] rejects shapes too large to keep them so), and structural
//!   edits that would turn a subtree into a consistent rename of some
//!   unrelated one are reverted. Each truth class is therefore exactly its
//!   recorded pair, and a perfect detector can reach precision and recall
//!   1.0 when its candidate mass floor matches
//!   [`GeneratorConfig::min_clone_mass`].
//! * **Honest labels.** After mutation a pair is classified by the relation
//!   that actually holds (verbatim, consistent rename, or near-miss), not by
//!   the relation that was requested. Edits that collapse back into a
//!   consistent rename yield a TYPE2 record rather than a mislabelled TYPE3.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clones::{CloneType, DETECTABLE};
use crate::error::{Error, Result};
use crate::graph::{ArtifactGraph, ArtifactNode, NodeId, NodeType};
use crate::hash::{canonical_hash, Abstraction, Digest};
use crate::lex::{classify, render_tokens, tokenize_text, TokenClass};
use crate::similarity::node_similarity;

/// Copies planted as near-misses must stay at least this similar to their
/// source. Edits that would drop below the floor are reverted, keeping every
/// recorded pair detectable at the default similarity threshold of 0.75.
pub const TYPE3_SIMILARITY_FLOOR: f64 = 0.78;

/// Identifier tokens that keep their surface form when a copy is renamed.
/// Renaming them would not change any digest, but the output reads better
/// when structural words survive.
const KEYWORDS: &[&str] = &[
    "class", "void", "int", "return", "if", "else", "while", "for", "new",
];

/// Shape of the synthetic seed system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    /// Number of classes under the system root.
    pub classes: usize,
    /// Methods per class.
    pub methods_per_class: usize,
    /// Baseline statements per method body; individual methods add up to
    /// two more so that bodies differ in length as well as content.
    pub statements_per_method: usize,
}

/// Controls for [`generate_benchmark`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Number of variants to derive, named `v1`, `v2`, ...
    pub variant_count: usize,
    /// How many clone pairs of each type to plant in every variant.
    pub clones_per_variant: BTreeMap<CloneType, usize>,
    /// Upper bound on statement edits applied to a near-miss copy.
    pub type3_max_edits: usize,
    /// Probability that a given method site mutates when a variant is
    /// derived. The first variant is always the seed verbatim.
    pub variant_mutation_rate: f64,
    /// Node types eligible as clone sources; injections cycle through this
    /// set in order.
    pub clone_granularities: BTreeSet<NodeType>,
    /// Minimum token mass of a clone source. Keep this aligned with the
    /// detector's minimum so small duplicates are invisible to both sides.
    pub min_clone_mass: usize,
    /// Seed for the generator's random stream.
    pub rng_seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            variant_count: 3,
            clones_per_variant: BTreeMap::new(),
            type3_max_edits: 2,
            variant_mutation_rate: 0.2,
            clone_granularities: [NodeType::Class, NodeType::Method, NodeType::Block]
                .into_iter()
                .collect(),
            min_clone_mass: 8,
            rng_seed: 7,
        }
    }
}

/// One planted clone pair. `members` holds the source and copy ids in
/// ascending order; `edits` counts the statement edits that survived on a
/// near-miss copy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub variant_id: String,
    pub clone_type: CloneType,
    pub granularity: NodeType,
    pub members: Vec<NodeId>,
    pub edits: usize,
}

/// A generated corpus: the variant graphs, the answer key, and the
/// derivation ancestry (`None` marks the root of the family).
#[derive(Debug)]
pub struct Benchmark {
    pub variants: Vec<ArtifactGraph>,
    pub truth: Vec<TruthRecord>,
    pub genealogy: BTreeMap<String, Option<String>>,
}

/// Builds the synthetic seed system.
///
/// Every method receives its own identifiers and literals, and its body
/// follows a statement-shape pattern drawn from the base-4 digits of the
/// method's global index. Distinct methods therefore differ structurally,
/// which keeps their pairwise similarity below the default detection
/// threshold; planted clones are the only clones in the corpus.
///
/// A method's abstracted shape is determined by its statement count (three
/// possible values) and its base-4 digit vector, so at most
/// `3 * 4^statements_per_method` methods can be pairwise distinct. Specs
/// that ask for more are rejected: repeating shapes would make two seed
/// methods consistent renames of each other, silently corrupting any answer
/// key built on top.
pub fn seed_graph(spec: &SeedSpec) -> Result<ArtifactGraph> {
    if spec.classes == 0 || spec.methods_per_class == 0 || spec.statements_per_method == 0 {
        return Err(Error::InvalidParameter(
            "seed spec requires at least one class, method, and statement".into(),
        ));
    }
    let method_total = spec.classes.saturating_mul(spec.methods_per_class);
    let distinct_shapes = 4usize
        .checked_pow(spec.statements_per_method.min(32) as u32)
        .and_then(|p| p.checked_mul(3))
        .unwrap_or(usize::MAX);
    if method_total > distinct_shapes {
        return Err(Error::InvalidParameter(format!(
            "{method_total} methods exceed the {distinct_shapes} distinct shapes available at \
             {} statements per method; raise statements_per_method or shrink the system",
            spec.statements_per_method
        )));
    }
    let mut classes = Vec::with_capacity(spec.classes);
    for c in 0..spec.classes {
        let mut methods = Vec::with_capacity(spec.methods_per_class);
        for m in 0..spec.methods_per_class {
            let g = c * spec.methods_per_class + m;
            methods.push(seed_method(g, spec.statements_per_method));
        }
        let label = render_tokens(&["class", &format!("C{c}")]);
        classes.push(ArtifactNode::inner(NodeType::Class, label, methods));
    }
    let root = ArtifactNode::inner(NodeType::System, "app", classes);
    ArtifactGraph::with_preorder_ids("seed", root)
}

fn seed_method(g: usize, base_statements: usize) -> ArtifactNode {
    let count = base_statements + g % 3;
    let helper = format!("f{g}");
    let emitter = format!("e{g}");
    let mut statements = Vec::with_capacity(count);
    for j in 0..count {
        let var = format!("v{g}_{j}");
        let lit = format!("{}", 1000 * g + j);
        let shape = (g / 4usize.pow(j as u32)) % 4;
        let tokens: Vec<String> = match shape {
            0 => vec![var.clone(), "=".into(), var, "+".into(), lit, ";".into()],
            1 => vec![
                var.clone(),
                "=".into(),
                helper.clone(),
                "(".into(),
                var,
                ",".into(),
                lit,
                ")".into(),
                ";".into(),
            ],
            2 => vec![
                var.clone(),
                "=".into(),
                var.clone(),
                "*".into(),
                lit,
                "+".into(),
                var,
                ";".into(),
            ],
            _ => vec![emitter.clone(), "(".into(), var, ")".into(), ";".into()],
        };
        statements.push(ArtifactNode::statement(tokens));
    }
    let block = ArtifactNode::inner(NodeType::Block, "", statements);
    let label = render_tokens(&["void", &format!("m{g}"), "(", ")"]);
    ArtifactNode::inner(NodeType::Method, label, vec![block])
}

/// Derives a variant family from `seed` and plants clone pairs per the
/// configuration. Fails with [`Error::Capacity`] when a variant runs out of
/// unclaimed sources for a requested granularity.
pub fn generate_benchmark(seed: &ArtifactGraph, config: &GeneratorConfig) -> Result<Benchmark> {
    if config.variant_count == 0 {
        return Err(Error::InvalidParameter("variant_count must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&config.variant_mutation_rate) {
        return Err(Error::InvalidParameter(format!(
            "variant_mutation_rate {} is outside [0, 1]",
            config.variant_mutation_rate
        )));
    }
    let total_clones: usize = config.clones_per_variant.values().sum();
    if total_clones > 0 {
        if config.clone_granularities.is_empty() {
            return Err(Error::InvalidParameter(
                "clone injection requires a non-empty granularity set".into(),
            ));
        }
        for &granularity in &config.clone_granularities {
            if !matches!(
                granularity,
                NodeType::Package | NodeType::Class | NodeType::Method | NodeType::Block
            ) {
                return Err(Error::InvalidParameter(format!(
                    "{granularity:?} nodes cannot serve as clone sources"
                )));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut statement_registry: BTreeSet<String> = BTreeSet::new();
    let mut truth = Vec::new();
    let mut variants = Vec::with_capacity(config.variant_count);
    let mut genealogy = BTreeMap::new();

    for k in 1..=config.variant_count {
        let variant_id = format!("v{k}");
        let mut root = seed.root().clone();
        let mut claimed: Vec<NodeId> = Vec::new();
        if k > 1 {
            mutate_variant(
                &mut root,
                config,
                &mut rng,
                &mut statement_registry,
                &variant_id,
                &mut truth,
                &mut claimed,
            );
        }
        inject_clones(&mut root, config, &mut rng, &variant_id, &mut truth, &mut claimed)?;
        variants.push(ArtifactGraph::new(&variant_id, root)?);
        genealogy.insert(
            variant_id,
            if k == 1 { None } else { Some("v1".to_string()) },
        );
    }

    Ok(Benchmark { variants, truth, genealogy })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MutationOp {
    DeleteMethod,
    DeleteStatement,
    DuplicateRename,
    ModifyStatement,
}

/// Applies per-method mutations to a freshly copied seed tree.
///
/// Statement-level mutations (deleting or rewriting a statement) consult a
/// registry shared across the whole family: each method surrenders at most
/// one such mutation over all variants. Without the registry, two variants
/// could rewrite the same statement in different ways, and merging those
/// variants into a platform would then depend on integration order.
fn mutate_variant(
    root: &mut ArtifactNode,
    config: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
    statement_registry: &mut BTreeSet<String>,
    variant_id: &str,
    truth: &mut Vec<TruthRecord>,
    claimed: &mut Vec<NodeId>,
) {
    let sites: Vec<NodeId> = root
        .walk()
        .filter(|n| n.node_type == NodeType::Method)
        .map(|n| n.id)
        .collect();
    let mut next_id = max_node_id(root) + 1;
    let mut used_names = collect_identifiers(root);

    for method_id in sites {
        if rng.gen::<f64>() >= config.variant_mutation_rate {
            continue;
        }
        let Some(path) = path_of(root, method_id) else { continue };
        let method_label = node_at(root, &path).label.clone();

        let mut ops = Vec::new();
        let (parent_path, child_index) = (&path[..path.len() - 1], *path.last().unwrap());
        let parent = node_at(root, parent_path);
        if parent
            .children
            .iter()
            .filter(|c| c.node_type == NodeType::Method)
            .count()
            >= 2
        {
            ops.push(MutationOp::DeleteMethod);
        }
        let statement_budget_free = !statement_registry.contains(&method_label);
        let method = &parent.children[child_index];
        if statement_budget_free && block_with_spare_statement(method).is_some() {
            ops.push(MutationOp::DeleteStatement);
        }
        ops.push(MutationOp::DuplicateRename);
        if statement_budget_free && method.walk().any(|n| n.node_type == NodeType::Statement) {
            ops.push(MutationOp::ModifyStatement);
        }

        match ops[rng.gen_range(0..ops.len())] {
            MutationOp::DeleteMethod => {
                let parent = node_at_mut(root, parent_path);
                parent.children.remove(child_index);
            }
            MutationOp::DeleteStatement => {
                let forbidden =
                    foreign_digests(root, node_at(root, &path), config.min_clone_mass);
                let method = node_at_mut(root, &path);
                if delete_one_statement(method, &forbidden, config.min_clone_mass, rng) {
                    statement_registry.insert(method_label);
                }
            }
            MutationOp::DuplicateRename => {
                let method = node_at(root, &path);
                let source_id = method.id;
                let mass = method.token_mass();
                let mut copy = method.clone();
                next_id = copy.renumber_preorder(next_id);
                let copy_id = copy.id;
                let method_name = method_name_of(method);
                rename_subtree(
                    &mut copy,
                    rng,
                    &mut used_names,
                    method_name.as_deref(),
                    RenameStyle::Broad,
                );
                let record = classify_pair(node_at(root, &path), &copy);
                let parent = node_at_mut(root, parent_path);
                parent.children.insert(child_index + 1, copy);
                claimed.push(source_id);
                claimed.push(copy_id);
                if mass >= config.min_clone_mass {
                    truth.push(TruthRecord {
                        variant_id: variant_id.to_string(),
                        clone_type: record,
                        granularity: NodeType::Method,
                        members: sorted_pair(source_id, copy_id),
                        edits: 0,
                    });
                }
            }
            MutationOp::ModifyStatement => {
                let method = node_at_mut(root, &path);
                modify_one_statement(method, rng, &mut used_names);
                statement_registry.insert(method_label);
            }
        }
    }
}

/// Returns the path (relative to `method`) of a block that can lose a
/// statement while keeping at least one.
fn block_with_spare_statement(method: &ArtifactNode) -> Option<Vec<usize>> {
    let mut found = None;
    let mut path = Vec::new();
    fn rec(node: &ArtifactNode, path: &mut Vec<usize>, found: &mut Option<Vec<usize>>) {
        if found.is_some() {
            return;
        }
        if node.node_type == NodeType::Block
            && node
                .children
                .iter()
                .filter(|c| c.node_type == NodeType::Statement)
                .count()
                >= 2
        {
            *found = Some(path.clone());
            return;
        }
        for (i, child) in node.children.iter().enumerate() {
            path.push(i);
            rec(child, path, found);
            path.pop();
        }
    }
    rec(method, &mut path, &mut found);
    found
}

/// Deletes one statement from the method, reverting when the shortened
/// method turns into a consistent rename of some unrelated subtree (the
/// same hazard the near-miss edits guard against). Returns whether the
/// deletion stuck.
fn delete_one_statement(
    method: &mut ArtifactNode,
    forbidden: &BTreeSet<Digest>,
    min_mass: usize,
    rng: &mut ChaCha8Rng,
) -> bool {
    let Some(block_path) = block_with_spare_statement(method) else {
        return false;
    };
    let snapshot = method.clone();
    let block = node_at_mut(method, &block_path);
    let statement_indices: Vec<usize> = block
        .children
        .iter()
        .enumerate()
        .filter(|(_, c)| c.node_type == NodeType::Statement)
        .map(|(i, _)| i)
        .collect();
    let victim = statement_indices[rng.gen_range(0..statement_indices.len())];
    block.children.remove(victim);
    if subtree_collides(method, forbidden, min_mass) {
        *method = snapshot;
        return false;
    }
    true
}

/// Rewrites one statement without changing the method's abstracted digest:
/// either a consistent rename of an identifier whose occurrences are
/// confined to that statement, or a literal replacement. Cross-variant
/// merging by abstracted digest keeps working on the mutated method.
fn modify_one_statement(
    method: &mut ArtifactNode,
    rng: &mut ChaCha8Rng,
    used_names: &mut BTreeSet<String>,
) {
    let mut ident_counts: BTreeMap<String, usize> = BTreeMap::new();
    for node in method.walk() {
        for token in node.tokens.iter().chain(tokenize_text(&node.label).iter()) {
            if classify(token) == TokenClass::Identifier {
                *ident_counts.entry(token.clone()).or_insert(0) += 1;
            }
        }
    }

    let statement_ids: Vec<NodeId> = method
        .walk()
        .filter(|n| n.node_type == NodeType::Statement)
        .map(|n| n.id)
        .collect();
    if statement_ids.is_empty() {
        return;
    }
    let target = statement_ids[rng.gen_range(0..statement_ids.len())];
    let path = path_of(method, target).expect("statement listed by walk");
    let statement = node_at_mut(method, &path);

    let mut confined: Vec<String> = Vec::new();
    let mut literals: Vec<String> = Vec::new();
    for token in &statement.tokens {
        match classify(token) {
            TokenClass::Identifier => {
                let within: usize = statement.tokens.iter().filter(|t| *t == token).count();
                if ident_counts.get(token) == Some(&within) && !confined.contains(token) {
                    confined.push(token.clone());
                }
            }
            TokenClass::Literal => {
                if !literals.contains(token) {
                    literals.push(token.clone());
                }
            }
            _ => {}
        }
    }

    let rename_eligible = !confined.is_empty();
    let replace_eligible = !literals.is_empty();
    let do_rename = match (rename_eligible, replace_eligible) {
        (true, true) => rng.gen::<f64>() < 0.5,
        (true, false) => true,
        (false, true) => false,
        (false, false) => return,
    };
    if do_rename {
        let old = confined[rng.gen_range(0..confined.len())].clone();
        let fresh = fresh_identifier(rng, used_names);
        for token in &mut statement.tokens {
            if *token == old {
                *token = fresh.clone();
            }
        }
    } else {
        let old = literals[rng.gen_range(0..literals.len())].clone();
        let fresh = fresh_literal(rng);
        for token in &mut statement.tokens {
            if *token == old {
                *token = fresh.clone();
            }
        }
    }
}

/// Plants the configured clone pairs into one variant tree.
fn inject_clones(
    root: &mut ArtifactNode,
    config: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
    variant_id: &str,
    truth: &mut Vec<TruthRecord>,
    claimed: &mut Vec<NodeId>,
) -> Result<()> {
    let total: usize = config.clones_per_variant.values().sum();
    if total == 0 {
        return Ok(());
    }
    let granularities: Vec<NodeType> = config.clone_granularities.iter().copied().collect();
    let mut next_id = max_node_id(root) + 1;
    let mut used_names = collect_identifiers(root);
    let mut cycle = 0usize;

    for (&requested, &count) in &config.clones_per_variant {
        for _ in 0..count {
            let granularity = granularities[cycle % granularities.len()];
            cycle += 1;
            inject_one(
                root,
                requested,
                granularity,
                config,
                rng,
                variant_id,
                truth,
                claimed,
                &mut next_id,
                &mut used_names,
            )?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn inject_one(
    root: &mut ArtifactNode,
    requested: CloneType,
    granularity: NodeType,
    config: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
    variant_id: &str,
    truth: &mut Vec<TruthRecord>,
    claimed: &mut Vec<NodeId>,
    next_id: &mut u32,
    used_names: &mut BTreeSet<String>,
) -> Result<()> {
    let eligible = eligible_sources(root, granularity, config.min_clone_mass, claimed);
    if eligible.is_empty() {
        return Err(Error::Capacity(format!(
            "variant {variant_id}: no unclaimed {granularity:?} subtree with mass >= {} left \
             for a {requested} injection",
            config.min_clone_mass
        )));
    }
    let source_id = eligible[rng.gen_range(0..eligible.len())];
    let source_path = path_of(root, source_id).expect("eligible source is in the tree");
    let source = node_at(root, &source_path).clone();

    let mut copy = source.clone();
    *next_id = copy.renumber_preorder(*next_id);
    let copy_id = copy.id;

    let mut edits = 0;
    match requested {
        CloneType::Type1 => {}
        CloneType::Type2 => {
            rename_subtree(&mut copy, rng, used_names, None, RenameStyle::Broad);
        }
        CloneType::Type3 => {
            rename_subtree(&mut copy, rng, used_names, None, RenameStyle::Light);
            let forbidden = foreign_digests(root, &source, config.min_clone_mass);
            edits = apply_near_miss_edits(&mut copy, &source, &forbidden, config, rng, next_id);
        }
    }
    let actual = classify_pair(&source, &copy);

    let parent_path = &source_path[..source_path.len() - 1];
    let parent = node_at_mut(root, parent_path);
    let slot = rng.gen_range(0..=parent.children.len());
    parent.children.insert(slot, copy);

    claimed.push(source_id);
    claimed.push(copy_id);
    truth.push(TruthRecord {
        variant_id: variant_id.to_string(),
        clone_type: actual,
        granularity,
        members: sorted_pair(source_id, copy_id),
        edits,
    });
    Ok(())
}

/// Candidate sources: nodes of the requested type and mass that neither sit
/// inside a claimed subtree nor contain a claimed root. Both exclusions are
/// needed to keep truth classes disjoint; copying around a claimed region
/// would produce a third member for an already-recorded pair.
fn eligible_sources(
    root: &ArtifactNode,
    granularity: NodeType,
    min_mass: usize,
    claimed: &[NodeId],
) -> Vec<NodeId> {
    let claimed: BTreeSet<NodeId> = claimed.iter().copied().collect();
    let mut out = Vec::new();
    fn rec(
        node: &ArtifactNode,
        inside_claimed: bool,
        claimed: &BTreeSet<NodeId>,
        granularity: NodeType,
        min_mass: usize,
        out: &mut Vec<NodeId>,
    ) -> bool {
        let here = claimed.contains(&node.id);
        let inside = inside_claimed || here;
        let mut contains = here;
        for child in &node.children {
            contains |= rec(child, inside, claimed, granularity, min_mass, out);
        }
        if !inside
            && !contains
            && node.node_type == granularity
            && node.token_mass() >= min_mass
        {
            out.push(node.id);
        }
        contains
    }
    rec(root, false, &claimed, granularity, min_mass, &mut out);
    out
}

/// How aggressively [`rename_subtree`] rewrites a copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RenameStyle {
    /// Coin flip per identifier and per literal. Used for consistent-rename
    /// copies, where detection works on digests and similarity is free to
    /// drop.
    Broad,
    /// Exactly one identifier and at most one literal. Used for near-miss
    /// copies so the similarity budget is spent on structural edits instead
    /// of renames.
    Light,
}

/// Applies a consistent subtree-wide rename to a copy. At least one
/// identifier is always renamed (`force` names a mandatory victim), so the
/// copy is never verbatim; the result stays abstracted-equal to the
/// original because the mapping is injective onto fresh names.
fn rename_subtree(
    node: &mut ArtifactNode,
    rng: &mut ChaCha8Rng,
    used_names: &mut BTreeSet<String>,
    force: Option<&str>,
    style: RenameStyle,
) {
    let mut identifiers: Vec<String> = Vec::new();
    let mut literals: Vec<String> = Vec::new();
    fn collect(node: &ArtifactNode, identifiers: &mut Vec<String>, literals: &mut Vec<String>) {
        for token in tokenize_text(&node.label).iter().chain(node.tokens.iter()) {
            match classify(token) {
                TokenClass::Identifier => {
                    if !KEYWORDS.contains(&token.as_str()) && !identifiers.contains(token) {
                        identifiers.push(token.clone());
                    }
                }
                TokenClass::Literal => {
                    if !literals.contains(token) {
                        literals.push(token.clone());
                    }
                }
                _ => {}
            }
        }
        for child in &node.children {
            collect(child, identifiers, literals);
        }
    }
    collect(node, &mut identifiers, &mut literals);

    let mut map: BTreeMap<String, String> = BTreeMap::new();
    match style {
        RenameStyle::Broad => {
            for ident in &identifiers {
                if rng.gen::<f64>() < 0.5 {
                    map.insert(ident.clone(), fresh_identifier(rng, used_names));
                }
            }
            for literal in &literals {
                if rng.gen::<f64>() < 0.5 {
                    map.insert(literal.clone(), fresh_literal(rng));
                }
            }
        }
        RenameStyle::Light => {
            if !identifiers.is_empty() {
                let victim = identifiers[rng.gen_range(0..identifiers.len())].clone();
                map.insert(victim, fresh_identifier(rng, used_names));
            }
            if !literals.is_empty() && rng.gen::<f64>() < 0.5 {
                let victim = literals[rng.gen_range(0..literals.len())].clone();
                map.insert(victim, fresh_literal(rng));
            }
        }
    }
    if let Some(name) = force {
        if !map.contains_key(name) && identifiers.iter().any(|i| i == name) {
            map.insert(name.to_string(), fresh_identifier(rng, used_names));
        }
    }
    if map.is_empty() && !identifiers.is_empty() {
        let victim = identifiers[rng.gen_range(0..identifiers.len())].clone();
        map.insert(victim, fresh_identifier(rng, used_names));
    }
    apply_token_map(node, &map);
}

fn apply_token_map(node: &mut ArtifactNode, map: &BTreeMap<String, String>) {
    if !node.label.is_empty() {
        let tokens: Vec<String> = tokenize_text(&node.label)
            .into_iter()
            .map(|t| map.get(&t).cloned().unwrap_or(t))
            .collect();
        node.label = render_tokens(&tokens);
    }
    for token in &mut node.tokens {
        if let Some(replacement) = map.get(token) {
            *token = replacement.clone();
        }
    }
    for child in &mut node.children {
        apply_token_map(child, map);
    }
}

/// Collects the abstracted digests a structural edit must not reproduce:
/// every detectable subtree elsewhere in the tree that carries enough mass
/// to become a clone candidate. An edit whose result matches one of these
/// would mint a clone pair the answer key knows nothing about.
///
/// Digest values that also occur inside `exclude` (the subtree being
/// copied or rewritten) are dropped. The copy shares those values with its
/// own source by construction, and the resulting classes are either the
/// planted pair itself or nested echoes of it, which the detector prunes
/// in favour of the enclosing class.
fn foreign_digests(
    root: &ArtifactNode,
    exclude: &ArtifactNode,
    min_mass: usize,
) -> BTreeSet<Digest> {
    let own: BTreeSet<Digest> = exclude
        .walk()
        .map(|n| canonical_hash(n, Abstraction::Abstracted))
        .collect();
    root.walk()
        .filter(|n| DETECTABLE.contains(&n.node_type) && n.token_mass() >= min_mass)
        .map(|n| canonical_hash(n, Abstraction::Abstracted))
        .filter(|d| !own.contains(d))
        .collect()
}

/// True when some detectable subtree of `node` with candidate mass carries
/// a forbidden abstracted digest.
fn subtree_collides(node: &ArtifactNode, forbidden: &BTreeSet<Digest>, min_mass: usize) -> bool {
    node.walk()
        .filter(|n| DETECTABLE.contains(&n.node_type) && n.token_mass() >= min_mass)
        .any(|n| forbidden.contains(&canonical_hash(n, Abstraction::Abstracted)))
}

/// Applies 1..=max statement edits (insert, delete, swap) to a near-miss
/// copy, checking similarity against the source after each step. An edit
/// is reverted and editing stops when it drops similarity below
/// [`TYPE3_SIMILARITY_FLOOR`], shrinks the copy below candidate mass, or
/// turns part of the copy into a consistent rename of some unrelated
/// subtree. Returns the number of edits that survived.
fn apply_near_miss_edits(
    copy: &mut ArtifactNode,
    source: &ArtifactNode,
    forbidden: &BTreeSet<Digest>,
    config: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
    next_id: &mut u32,
) -> usize {
    let max_edits = config.type3_max_edits.max(1);
    let target = rng.gen_range(1..=max_edits);
    let mut applied = 0;
    for _ in 0..target {
        let snapshot = copy.clone();
        if !apply_one_edit(copy, rng, next_id) {
            break;
        }
        if node_similarity(source, copy) < TYPE3_SIMILARITY_FLOOR
            || copy.token_mass() < config.min_clone_mass
            || subtree_collides(copy, forbidden, config.min_clone_mass)
        {
            *copy = snapshot;
            break;
        }
        applied += 1;
    }
    applied
}

/// Tries one statement edit inside `copy`, falling back through the other
/// edit kinds when the drawn one has no eligible site. Returns false when
/// no edit of any kind applies.
fn apply_one_edit(copy: &mut ArtifactNode, rng: &mut ChaCha8Rng, next_id: &mut u32) -> bool {
    let mut block_paths: Vec<Vec<usize>> = Vec::new();
    let mut path = Vec::new();
    fn collect_blocks(node: &ArtifactNode, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if node.node_type == NodeType::Block {
            out.push(path.clone());
        }
        for (i, child) in node.children.iter().enumerate() {
            path.push(i);
            collect_blocks(child, path, out);
            path.pop();
        }
    }
    collect_blocks(copy, &mut path, &mut block_paths);
    if block_paths.is_empty() {
        return false;
    }

    let first_choice = rng.gen_range(0..3u8);
    for attempt in 0..3u8 {
        let op = (first_choice + attempt) % 3;
        match op {
            // Duplicate an existing statement into a new position.
            0 => {
                let candidates: Vec<&Vec<usize>> = block_paths
                    .iter()
                    .filter(|p| statement_indices(node_at(copy, p)).len() >= 1)
                    .collect();
                if candidates.is_empty() {
                    continue;
                }
                let block_path = candidates[rng.gen_range(0..candidates.len())].clone();
                let block = node_at_mut(copy, &block_path);
                let indices = statement_indices(block);
                let mut duplicate = block.children[indices[rng.gen_range(0..indices.len())]].clone();
                duplicate.id = crate::graph::NodeId(*next_id);
                *next_id += 1;
                let slot = rng.gen_range(0..=block.children.len());
                block.children.insert(slot, duplicate);
                return true;
            }
            // Remove a statement, keeping at least one in the block.
            1 => {
                let candidates: Vec<&Vec<usize>> = block_paths
                    .iter()
                    .filter(|p| statement_indices(node_at(copy, p)).len() >= 2)
                    .collect();
                if candidates.is_empty() {
                    continue;
                }
                let block_path = candidates[rng.gen_range(0..candidates.len())].clone();
                let block = node_at_mut(copy, &block_path);
                let indices = statement_indices(block);
                let victim = indices[rng.gen_range(0..indices.len())];
                block.children.remove(victim);
                return true;
            }
            // Swap two adjacent statements.
            _ => {
                let candidates: Vec<&Vec<usize>> = block_paths
                    .iter()
                    .filter(|p| statement_indices(node_at(copy, p)).len() >= 2)
                    .collect();
                if candidates.is_empty() {
                    continue;
                }
                let block_path = candidates[rng.gen_range(0..candidates.len())].clone();
                let block = node_at_mut(copy, &block_path);
                let indices = statement_indices(block);
                let pick = rng.gen_range(0..indices.len() - 1);
                block.children.swap(indices[pick], indices[pick + 1]);
                return true;
            }
        }
    }
    false
}

fn statement_indices(block: &ArtifactNode) -> Vec<usize> {
    block
        .children
        .iter()
        .enumerate()
        .filter(|(_, c)| c.node_type == NodeType::Statement)
        .map(|(i, _)| i)
        .collect()
}

/// Classifies a planted pair by the relation that actually holds between
/// source and copy, mirroring how the detector labels its classes.
fn classify_pair(source: &ArtifactNode, copy: &ArtifactNode) -> CloneType {
    if canonical_hash(source, Abstraction::Exact) == canonical_hash(copy, Abstraction::Exact) {
        CloneType::Type1
    } else if canonical_hash(source, Abstraction::Abstracted)
        == canonical_hash(copy, Abstraction::Abstracted)
    {
        CloneType::Type2
    } else {
        CloneType::Type3
    }
}

fn method_name_of(method: &ArtifactNode) -> Option<String> {
    tokenize_text(&method.label)
        .into_iter()
        .find(|t| classify(t) == TokenClass::Identifier && !KEYWORDS.contains(&t.as_str()))
}

fn max_node_id(root: &ArtifactNode) -> u32 {
    root.walk().map(|n| n.id.0).max().unwrap_or(0)
}

fn collect_identifiers(root: &ArtifactNode) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for node in root.walk() {
        for token in tokenize_text(&node.label).iter().chain(node.tokens.iter()) {
            if classify(token) == TokenClass::Identifier {
                out.insert(token.clone());
            }
        }
    }
    out
}

fn fresh_identifier(rng: &mut ChaCha8Rng, used_names: &mut BTreeSet<String>) -> String {
    loop {
        let candidate = format!("r{}", rng.gen_range(0..100_000_000u32));
        if used_names.insert(candidate.clone()) {
            return candidate;
        }
    }
}

fn fresh_literal(rng: &mut ChaCha8Rng) -> String {
    format!("{}", rng.gen_range(0..100_000_000u32))
}

fn sorted_pair(a: NodeId, b: NodeId) -> Vec<NodeId> {
    let mut pair = vec![a, b];
    pair.sort_unstable();
    pair
}

fn path_of(root: &ArtifactNode, id: NodeId) -> Option<Vec<usize>> {
    fn rec(node: &ArtifactNode, id: NodeId, path: &mut Vec<usize>) -> bool {
        if node.id == id {
            return true;
        }
        for (i, child) in node.children.iter().enumerate() {
            path.push(i);
            if rec(child, id, path) {
                return true;
            }
            path.pop();
        }
        false
    }
    let mut path = Vec::new();
    rec(root, id, &mut path).then_some(path)
}

fn node_at<'a>(root: &'a ArtifactNode, path: &[usize]) -> &'a ArtifactNode {
    let mut current = root;
    for &index in path {
        current = &current.children[index];
    }
    current
}

fn node_at_mut<'a>(root: &'a mut ArtifactNode, path: &[usize]) -> &'a mut ArtifactNode {
    let mut current = root;
    for &index in path {
        current = &mut current.children[index];
    }
    current
}
