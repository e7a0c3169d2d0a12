//! Scoring against ground truth and end-to-end pipeline evaluation.
//!
//! [`match_clone_report`] compares detector output with an answer key and
//! fills a precision/recall table keyed by clone type and granularity.
//! [`evaluate_pipeline`] runs the whole chain on a variant family: detect,
//! fold clones into components, mine the taxonomy, integrate into a
//! platform, synthesize the feature model, then derive every variant back
//! out and compare it with the original. The report carries per-stage
//! runtimes and the process peak memory so performance can be tracked
//! alongside correctness.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::benchgen::TruthRecord;
use crate::clones::{detect_clones, CloneReport, CloneType, DetectionConfig};
use crate::components::{refactor_graph, ConfigurableComponent};
use crate::error::{Error, Result};
use crate::features::synthesize_features;
use crate::graph::{ArtifactGraph, NodeId, NodeType};
use crate::platform::{integrate_all, IntegrationOrder};

/// Reported and true pairs must share at least this member overlap
/// (intersection over union) to count as the same clone class.
pub const MATCH_OVERLAP: f64 = 0.7;

/// Confusion counts for one clone-type/granularity cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCell {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl MetricCell {
    /// Fraction of reported classes that were real. An empty report has
    /// nothing wrong in it, so the empty cell scores 1.0.
    pub fn precision(&self) -> f64 {
        let denominator = self.true_positives + self.false_positives;
        if denominator == 0 {
            1.0
        } else {
            self.true_positives as f64 / denominator as f64
        }
    }

    /// Fraction of true classes that were reported; 1.0 when there was
    /// nothing to find.
    pub fn recall(&self) -> f64 {
        let denominator = self.true_positives + self.false_negatives;
        if denominator == 0 {
            1.0
        } else {
            self.true_positives as f64 / denominator as f64
        }
    }

    fn absorb(&mut self, other: &MetricCell) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
    }
}

/// Precision/recall table for one or more scored reports. Cells are keyed
/// `"<type>/<granularity>"`, for example `"TYPE2/METHOD"`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CloneMetrics {
    pub cells: BTreeMap<String, MetricCell>,
    pub overall: MetricCell,
}

impl CloneMetrics {
    pub fn cell(&self, clone_type: CloneType, granularity: NodeType) -> MetricCell {
        self.cells
            .get(&cell_key(clone_type, granularity))
            .copied()
            .unwrap_or_default()
    }

    /// Merges another table into this one, cell by cell.
    pub fn absorb(&mut self, other: &CloneMetrics) {
        for (key, cell) in &other.cells {
            self.cells.entry(key.clone()).or_default().absorb(cell);
        }
        self.overall.absorb(&other.overall);
    }
}

fn cell_key(clone_type: CloneType, granularity: NodeType) -> String {
    format!("{clone_type}/{granularity}")
}

/// Scores one detection report against the answer key. Only truth records
/// for the report's variant participate.
///
/// Matching is greedy on descending member overlap: each reported class
/// pairs with at most one truth record and vice versa. A matched pair is a
/// true positive in the truth record's cell; leftovers count as false
/// positives under the reported label and false negatives under the true
/// label.
pub fn match_clone_report(report: &CloneReport, truth: &[TruthRecord]) -> CloneMetrics {
    match_clone_report_at(report, truth, MATCH_OVERLAP)
}

/// [`match_clone_report`] with an explicit overlap threshold in (0, 1].
pub fn match_clone_report_at(
    report: &CloneReport,
    truth: &[TruthRecord],
    overlap_threshold: f64,
) -> CloneMetrics {
    let relevant: Vec<&TruthRecord> = truth
        .iter()
        .filter(|t| t.variant_id == report.variant_id)
        .collect();

    struct Candidate {
        overlap: f64,
        reported_min: NodeId,
        truth_min: NodeId,
        reported: usize,
        truth: usize,
    }
    let mut candidates = Vec::new();
    for (r, class) in report.classes.iter().enumerate() {
        let reported: Vec<NodeId> = class.members.clone();
        for (t, record) in relevant.iter().enumerate() {
            let overlap = member_overlap(&reported, &record.members);
            if overlap >= overlap_threshold {
                candidates.push(Candidate {
                    overlap,
                    reported_min: reported.iter().copied().min().expect("non-empty class"),
                    truth_min: record.members.iter().copied().min().expect("non-empty record"),
                    reported: r,
                    truth: t,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.overlap
            .partial_cmp(&a.overlap)
            .expect("overlaps are finite")
            .then(a.reported_min.cmp(&b.reported_min))
            .then(a.truth_min.cmp(&b.truth_min))
    });

    let mut reported_used = vec![false; report.classes.len()];
    let mut truth_used = vec![false; relevant.len()];
    let mut metrics = CloneMetrics::default();
    for candidate in candidates {
        if reported_used[candidate.reported] || truth_used[candidate.truth] {
            continue;
        }
        reported_used[candidate.reported] = true;
        truth_used[candidate.truth] = true;
        let record = relevant[candidate.truth];
        let key = cell_key(record.clone_type, record.granularity);
        metrics.cells.entry(key).or_default().true_positives += 1;
        metrics.overall.true_positives += 1;
    }
    for (r, class) in report.classes.iter().enumerate() {
        if !reported_used[r] {
            let key = cell_key(class.clone_type, class.granularity);
            metrics.cells.entry(key).or_default().false_positives += 1;
            metrics.overall.false_positives += 1;
        }
    }
    for (t, record) in relevant.iter().enumerate() {
        if !truth_used[t] {
            let key = cell_key(record.clone_type, record.granularity);
            metrics.cells.entry(key).or_default().false_negatives += 1;
            metrics.overall.false_negatives += 1;
        }
    }
    metrics
}

fn member_overlap(a: &[NodeId], b: &[NodeId]) -> f64 {
    let left: std::collections::BTreeSet<NodeId> = a.iter().copied().collect();
    let right: std::collections::BTreeSet<NodeId> = b.iter().copied().collect();
    let intersection = left.intersection(&right).count();
    let union = left.union(&right).count();
    if union == 0 {
        1.0
    } else {
        intersection as f64 / union as f64
    }
}

/// Controls for [`evaluate_pipeline`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub detection: DetectionConfig,
    /// Member overlap a reported class needs to match a truth record.
    pub overlap: f64,
    /// Variant families up to this size are additionally integrated in
    /// every order to check that the canonical platform is order-invariant.
    pub invariance_limit: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            detection: DetectionConfig::default(),
            overlap: MATCH_OVERLAP,
            invariance_limit: 4,
        }
    }
}

/// Outcome of deriving one variant back from the platform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTrip {
    pub variant_id: String,
    pub matches: bool,
    /// Populated with the first structural divergence when the derived
    /// variant is not content-equal to the original.
    pub first_difference: Option<String>,
}

/// Everything [`evaluate_pipeline`] measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Detection quality; absent when no answer key was supplied.
    pub metrics: Option<CloneMetrics>,
    pub round_trips: Vec<RoundTrip>,
    /// True when every integration order produced a byte-identical
    /// canonical platform; absent when the family exceeded the limit.
    pub order_invariant: Option<bool>,
    pub variant_count: usize,
    pub variant_node_sum: usize,
    pub platform_node_count: usize,
    pub component_count: usize,
    pub feature_count: usize,
    /// Wall-clock seconds per pipeline stage.
    pub runtime_seconds: BTreeMap<String, f64>,
    /// Process peak resident set in bytes, when the platform exposes it.
    pub peak_memory_bytes: Option<u64>,
}

impl EvalReport {
    /// Serialization of the report with timing and memory wiped, so two
    /// runs of the same pipeline can be compared for determinism.
    pub fn stable_fingerprint(&self) -> String {
        let mut copy = self.clone();
        copy.runtime_seconds.clear();
        copy.peak_memory_bytes = None;
        serde_json::to_string(&copy).expect("report serializes")
    }
}

/// Runs the full pipeline over a variant family and measures every stage.
///
/// When `truth` is supplied, per-variant detection reports are scored
/// against it and the merged table lands in the report. Round trips always
/// compare the derived variant with the original input, so any information
/// loss in refactoring, integration, or expansion shows up as a mismatch.
pub fn evaluate_pipeline(
    variants: &[ArtifactGraph],
    truth: Option<&[TruthRecord]>,
    config: &EvalConfig,
) -> Result<EvalReport> {
    if variants.is_empty() {
        return Err(Error::InvalidParameter("evaluation needs at least one variant".into()));
    }
    let mut runtime_seconds = BTreeMap::new();

    let started = Instant::now();
    let reports: Vec<CloneReport> = variants
        .iter()
        .map(|graph| detect_clones(graph, &config.detection))
        .collect::<Result<_>>()?;
    runtime_seconds.insert("detect".to_string(), started.elapsed().as_secs_f64());

    let metrics = truth.map(|records| {
        let mut merged = CloneMetrics::default();
        for report in &reports {
            merged.absorb(&match_clone_report_at(report, records, config.overlap));
        }
        merged
    });

    let started = Instant::now();
    let mut refactored_graphs = Vec::with_capacity(variants.len());
    let mut components: BTreeMap<String, ConfigurableComponent> = BTreeMap::new();
    for (graph, report) in variants.iter().zip(&reports) {
        let refactored = refactor_graph(graph, report)?;
        components.extend(refactored.components);
        refactored_graphs.push(refactored.graph);
    }
    runtime_seconds.insert("refactor".to_string(), started.elapsed().as_secs_f64());

    let started = Instant::now();
    let platform = integrate_all(
        &refactored_graphs,
        components.clone(),
        config.detection.theta,
        IntegrationOrder::Taxonomy,
    )?;
    runtime_seconds.insert("integrate".to_string(), started.elapsed().as_secs_f64());

    let started = Instant::now();
    let model = synthesize_features(&platform)?;
    runtime_seconds.insert("synthesize".to_string(), started.elapsed().as_secs_f64());

    let started = Instant::now();
    let mut round_trips = Vec::with_capacity(variants.len());
    for original in variants {
        let derived = platform.derive_variant(original.variant_id())?;
        let matches = derived.root().content_eq(original.root());
        let first_difference = if matches {
            None
        } else {
            derived.root().first_difference(original.root())
        };
        round_trips.push(RoundTrip {
            variant_id: original.variant_id().to_string(),
            matches,
            first_difference,
        });
    }
    runtime_seconds.insert("derive".to_string(), started.elapsed().as_secs_f64());

    let order_invariant = if variants.len() <= config.invariance_limit {
        let started = Instant::now();
        let invariant = check_order_invariance(
            &refactored_graphs,
            &components,
            config.detection.theta,
            &platform.canonical_form(),
        )?;
        runtime_seconds.insert("invariance".to_string(), started.elapsed().as_secs_f64());
        Some(invariant)
    } else {
        None
    };

    Ok(EvalReport {
        metrics,
        round_trips,
        order_invariant,
        variant_count: variants.len(),
        variant_node_sum: variants.iter().map(|g| g.node_count()).sum(),
        platform_node_count: platform.root.walk().count(),
        component_count: platform.components.len(),
        feature_count: model.features.len(),
        runtime_seconds,
        peak_memory_bytes: peak_memory_bytes(),
    })
}

/// Integrates the family in every permutation of the supplied order and
/// compares canonical forms. All sequences must reproduce `expected`.
fn check_order_invariance(
    graphs: &[ArtifactGraph],
    components: &BTreeMap<String, ConfigurableComponent>,
    theta: f64,
    expected: &str,
) -> Result<bool> {
    let mut indices: Vec<usize> = (0..graphs.len()).collect();
    let mut orders = Vec::new();
    permute(&mut indices, 0, &mut orders);
    for order in orders {
        let sequence: Vec<ArtifactGraph> = order.iter().map(|&i| graphs[i].clone()).collect();
        let platform =
            integrate_all(&sequence, components.clone(), theta, IntegrationOrder::Given)?;
        if platform.canonical_form() != expected {
            return Ok(false);
        }
    }
    Ok(true)
}

fn permute(items: &mut Vec<usize>, start: usize, out: &mut Vec<Vec<usize>>) {
    if start == items.len() {
        out.push(items.clone());
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, out);
        items.swap(start, i);
    }
}

/// Reads the process peak resident set (VmHWM) from /proc, in bytes.
/// Returns None on platforms without procfs.
pub fn peak_memory_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: u64 = rest.trim().trim_end_matches("kB").trim().parse().ok()?;
            return Some(kb * 1024);
        }
    }
    None
}
