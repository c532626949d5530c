use crate::graph::BipartiteInterbrainGraph;

/// Row-major flattening of the `n1 × n2` weight matrix. Deliberately tied
/// to node identity.
pub(crate) fn fc_vector(g: &BipartiteInterbrainGraph) -> Vec<f64> {
    g.weight_matrix().concat()
}
