//! Topological ordering of the recorded operation graph.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::Tensor;

enum Frame {
    Enter(Tensor),
    Exit(Tensor),
}

/// Depth-first post-order over the gradient-carrying subgraph rooted at
/// `root`: parents appear before consumers, every node exactly once.
pub(super) fn toposort(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited: BTreeSet<u64> = BTreeSet::new();
    let mut stack = alloc::vec![Frame::Enter(root.clone())];
    while let Some(frame) = stack.pop() {
        match frame {
            Frame::Enter(t) => {
                if !t.requires_grad() || !visited.insert(t.id()) {
                    continue;
                }
                stack.push(Frame::Exit(t.clone()));
                if let Some(op) = t.op() {
                    for p in op.parents() {
                        if p.requires_grad() && !visited.contains(&p.id()) {
                            stack.push(Frame::Enter(p.clone()));
                        }
                    }
                }
            }
            Frame::Exit(t) => order.push(t),
        }
    }
    order
}
