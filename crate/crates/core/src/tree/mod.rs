//! Decision trees with affine predicates and affine leaves, their exact
//! three-layer network encoding, and the annealed soft relaxation used to
//! train them with gradients.

mod model;
mod net;
mod schedule;

pub use model::DecisionTree;
pub use net::{infer_tree, tree_to_net, EntropyNet, SoftPass};
pub use schedule::AnnealSchedule;

/// Heap index of node `(depth, position)`.
#[inline]
pub fn heap_index(depth: usize, pos: usize) -> usize {
    (1usize << depth) + pos - 1
}
