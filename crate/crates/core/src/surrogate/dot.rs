use std::fmt::Write;

use super::{SurrogateTree, TreeNode};

/// Graphviz rendering: internal nodes read `feature k ≤ 0.5` (true = absent,
/// left), leaves show value, weight_sum and n_samples.
pub fn to_dot(tree: &SurrogateTree) -> String {
    let mut out = String::from(
        "digraph Tree {\nnode [shape=box, style=\"rounded\", fontname=\"helvetica\"] ;\n",
    );
    let mut next = 0usize;
    emit(&tree.root, None, &mut next, &mut out);
    out.push_str("}\n");
    out
}

fn emit(node: &TreeNode, parent: Option<(usize, bool)>, next: &mut usize, out: &mut String) {
    let id = *next;
    *next += 1;
    match node {
        TreeNode::Internal { feature, gain, .. } => {
            let _ = writeln!(
                out,
                "{id} [label=\"feature {feature} ≤ 0.5\\ngain = {gain:.4}\"] ;"
            );
        }
        TreeNode::Leaf {
            value,
            weight_sum,
            n_samples,
        } => {
            let _ = writeln!(
                out,
                "{id} [label=\"value = {value:.4}\\nweight_sum = {weight_sum:.4}\\nn_samples = {n_samples}\"] ;"
            );
        }
    }
    if let Some((parent, is_left)) = parent {
        let label = if is_left { "True" } else { "False" };
        let _ = writeln!(out, "{parent} -> {id} [headlabel=\"{label}\"] ;");
    }
    if let TreeNode::Internal { left, right, .. } = node {
        emit(left, Some((id, true)), next, out);
        emit(right, Some((id, false)), next, out);
    }
}
