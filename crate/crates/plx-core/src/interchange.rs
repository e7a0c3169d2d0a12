//! JSON interchange format for artifact graphs.
//!
//! A document is `{"variant_id": ..., "root": {...}}` where every node is
//! `{"type", "label", "tokens", "attributes", "children"}`. `label`,
//! `tokens`, `attributes`, and `children` may be omitted when empty. Node ids
//! are not part of the format; parsing assigns fresh pre-order ids, so a
//! serialize/parse round trip preserves ids for graphs that were numbered in
//! pre-order (all graphs this crate produces are).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ArtifactGraph, ArtifactNode, NodeId, NodeType};

#[derive(Debug, Serialize, Deserialize)]
struct GraphDoc {
    variant_id: String,
    root: NodeDoc,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeDoc {
    #[serde(rename = "type")]
    node_type: NodeType,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    attributes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<NodeDoc>,
}

impl From<&ArtifactNode> for NodeDoc {
    fn from(node: &ArtifactNode) -> Self {
        NodeDoc {
            node_type: node.node_type,
            label: node.label.clone(),
            tokens: node.tokens.clone(),
            attributes: node.attributes.clone(),
            children: node.children.iter().map(NodeDoc::from).collect(),
        }
    }
}

impl From<NodeDoc> for ArtifactNode {
    fn from(doc: NodeDoc) -> Self {
        ArtifactNode {
            id: NodeId(0),
            node_type: doc.node_type,
            label: doc.label,
            tokens: doc.tokens,
            attributes: doc.attributes,
            children: doc.children.into_iter().map(ArtifactNode::from).collect(),
        }
    }
}

/// Parses a JSON artifact-graph document, assigning pre-order node ids and
/// validating all structural rules.
pub fn parse_graph(text: &str) -> Result<ArtifactGraph> {
    let doc: GraphDoc = serde_json::from_str(text)
        .map_err(|e| Error::parse(e.line(), e.column(), e.to_string()))?;
    ArtifactGraph::with_preorder_ids(doc.variant_id, ArtifactNode::from(doc.root))
}

/// Serializes a graph as a pretty-printed JSON document with a trailing
/// newline. Byte-deterministic for equal graphs.
pub fn serialize_graph(graph: &ArtifactGraph) -> String {
    let doc = GraphDoc {
        variant_id: graph.variant_id().to_string(),
        root: NodeDoc::from(graph.root()),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("graph documents always serialize");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "variant_id": "v1",
        "root": {
            "type": "SYSTEM",
            "children": [
                {
                    "type": "CLASS",
                    "label": "A",
                    "children": [
                        {
                            "type": "METHOD",
                            "label": "void m(int x)",
                            "children": [
                                {
                                    "type": "BLOCK",
                                    "children": [
                                        {"type": "STATEMENT", "tokens": ["x", "=", "1", ";"]}
                                    ]
                                }
                            ]
                        }
                    ]
                }
            ]
        }
    }"#;

    #[test]
    fn parses_and_assigns_preorder_ids() {
        let graph = parse_graph(SAMPLE).unwrap();
        assert_eq!(graph.variant_id(), "v1");
        assert_eq!(graph.node_count(), 5);
        let ids: Vec<u32> = graph.nodes().map(|n| n.id.0).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
        assert_eq!(graph.node(NodeId(4)).unwrap().tokens.len(), 4);
    }

    #[test]
    fn round_trip_preserves_content_and_bytes() {
        let graph = parse_graph(SAMPLE).unwrap();
        let text = serialize_graph(&graph);
        let again = parse_graph(&text).unwrap();
        assert_eq!(graph, again);
        assert_eq!(serialize_graph(&again), text);
    }

    #[test]
    fn malformed_json_reports_line_and_column() {
        let err = parse_graph("{\n  \"variant_id\": \"v1\",\n  oops\n}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn structural_violations_name_the_offending_node() {
        let text = r#"{
            "variant_id": "v1",
            "root": {
                "type": "SYSTEM",
                "children": [{"type": "STATEMENT", "tokens": ["x", ";"]}]
            }
        }"#;
        let err = parse_graph(text).unwrap_err();
        match err {
            Error::Structure { node, message } => {
                assert_eq!(node, "node 1");
                assert!(message.contains("STATEMENT"));
            }
            other => panic!("expected structure error, got {other}"),
        }
    }

    #[test]
    fn instance_refs_round_trip_with_attributes() {
        let text = r#"{
            "variant_id": "v1",
            "root": {
                "type": "SYSTEM",
                "children": [{
                    "type": "CLASS",
                    "label": "A",
                    "children": [{
                        "type": "INSTANCE_REF",
                        "label": "C0011aabbcc",
                        "tokens": ["C0011aabbcc", "P1", "x"],
                        "attributes": {"component": "C0011aabbcc", "param.P1": "x"}
                    }]
                }]
            }
        }"#;
        let graph = parse_graph(text).unwrap();
        let node = graph
            .nodes()
            .find(|n| n.node_type == NodeType::InstanceRef)
            .unwrap();
        assert_eq!(node.attributes["param.P1"], "x");
        let again = parse_graph(&serialize_graph(&graph)).unwrap();
        assert_eq!(graph, again);
    }
}
