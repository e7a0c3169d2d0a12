//! Core library for mining product lines out of cloned program variants.
//!
//! The pipeline this crate implements: parse or generate artifact trees for
//! a set of related variants, detect clone classes inside each variant,
//! refactor the clones into parameterized components, integrate all variants
//! into a single platform representation, synthesize a feature model over it,
//! and derive any variant (or any valid feature configuration) back out.
//!
//! Modules follow the pipeline order:
//!
//! * [`graph`] — typed artifact trees and their invariants
//! * [`lex`] / [`java`] / [`interchange`] — token layer and the two frontends
//! * [`hash`] — canonical EXACT/ABSTRACTED subtree digests
//! * [`similarity`] — token- and tree-level similarity measures
//! * [`clones`] / [`components`] — clone detection and component extraction
//! * [`mining`] — cross-variant comparison and the variant taxonomy
//! * [`platform`] — the integrated multi-variant platform and derivation
//! * [`condition`] / [`features`] — presence conditions and feature models
//! * [`benchgen`] — seeded benchmark generator with ground truth
//! * [`eval`] — end-to-end pipeline evaluation and metrics

pub mod benchgen;
pub mod clones;
pub mod components;
pub mod condition;
pub mod error;
pub mod eval;
pub mod features;
pub mod graph;
pub mod hash;
pub mod interchange;
pub mod java;
pub mod lex;
pub mod mining;
pub mod platform;
pub mod similarity;

pub use benchgen::{generate_benchmark, seed_graph, Benchmark, GeneratorConfig, SeedSpec, TruthRecord};
pub use clones::{detect_clones, CloneClass, CloneReport, CloneType, DetectionConfig};
pub use components::{
    expand_all, expand_instance, extract_component, refactor_graph, Binding, ComponentInstance,
    ConfigurableComponent, RefactoredVariant,
};
pub use condition::{parse_condition, Condition};
pub use error::{Error, Result};
pub use eval::{
    evaluate_pipeline, match_clone_report, match_clone_report_at, CloneMetrics, EvalConfig,
    EvalReport, MetricCell, RoundTrip,
};
pub use features::{
    compute_blocks, derive_configuration, enumerate_configurations, layer_selection,
    parse_feature_model, print_feature_model, synthesize_features, validate_configuration,
    variant_configuration, with_canonical_bindings, Configuration, FeatureModel, Violation,
};
pub use graph::{ArtifactGraph, ArtifactNode, NodeId, NodeType};
pub use hash::{canonical_hash, Abstraction, Digest};
pub use mining::{compare_variants, mine_taxonomy, variant_similarity, Taxonomy, VariantComparison};
pub use platform::{integrate_all, IntegratedPlatform, IntegrationOrder, LocalContent, PlatformNode};
pub use similarity::{node_similarity, token_similarity};
