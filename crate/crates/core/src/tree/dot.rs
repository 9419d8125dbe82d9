use std::fmt::Write;

use super::{DecisionTree, TreeNode};

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            c => out.push(c),
        }
    }
    out
}

/// Graphviz rendering of `t`.
///
/// `feature_labels[f]` describes feature `f` (typically a prompt excerpt and its verbalizer);
/// features without a label render as `feature f`. Leaves show the class name and histogram.
/// The edge to the bit-1 child is labeled `Yes`, the edge to the bit-0 child `No`.
pub fn export_dot(t: &DecisionTree, feature_labels: &[String], class_names: &[String]) -> String {
    let mut out = String::from("digraph tree {\n  node [shape=box, fontname=\"Helvetica\"];\n");
    for (i, node) in t.nodes.iter().enumerate() {
        let label = match node {
            TreeNode::Internal { feature, n_samples, .. } => {
                let name = feature_labels
                    .get(*feature)
                    .cloned()
                    .unwrap_or_else(|| format!("feature {feature}"));
                format!("{name}\nn = {n_samples}")
            }
            TreeNode::Leaf { class_index, class_histogram } => {
                let name = class_names
                    .get(*class_index)
                    .cloned()
                    .unwrap_or_else(|| format!("class {class_index}"));
                format!("{name}\n{class_histogram:?}")
            }
        };
        let style = if matches!(node, TreeNode::Leaf { .. }) { ", style=rounded" } else { "" };
        writeln!(out, "  n{i} [label=\"{}\"{style}];", escape(&label)).unwrap();
    }
    for (i, node) in t.nodes.iter().enumerate() {
        if let TreeNode::Internal { left, right, .. } = node {
            writeln!(out, "  n{i} -> n{left} [label=\"No\"];").unwrap();
            writeln!(out, "  n{i} -> n{right} [label=\"Yes\"];").unwrap();
        }
    }
    out.push_str("}\n");
    out
}
