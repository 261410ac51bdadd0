#pragma once

#include <string>
#include <vector>

#include "nbf/graph.hpp"
#include "nbf/model.hpp"

namespace nbf {

struct ImportanceGraph {
    const KnowledgeGraph* graph = nullptr;
    std::vector<double> importance;  // one value per edge id
};

struct PathInterpretation {
    std::vector<EdgeId> edges;  // chained head-to-tail, from u to v
    double weight = 0.0;        // sum of edge importances
};

/// Importance of every edge for the prediction p(u, q, v): the gradient of
/// the probability with respect to a multiplicative per-edge gate held at 1.
/// One gate per edge is shared across all layers. Edges that cannot reach v
/// within `layers` hops get importance exactly 0.
ImportanceGraph edge_importance(const KnowledgeGraph& graph, const ModelParams& params,
                                const ModelConfig& config, const Triplet& triplet);

/// Beam search for the k highest-importance simple paths of length <=
/// max_len from u to v. Per node and step, the beam keeps the best
/// `beam_width` partial paths; ties break lexicographically on edge ids.
/// An unbounded beam (SIZE_MAX) is exact.
std::vector<PathInterpretation> top_k_paths(const ImportanceGraph& importance, EntityId u,
                                            EntityId v, std::size_t k, std::size_t max_len,
                                            std::size_t beam_width);

/// "(h, r, t) ^ (h, r, t) ..." with names when a vocab is given; inverse
/// relations print with a ^-1 suffix.
std::string format_path(const KnowledgeGraph& graph, const PathInterpretation& path,
                        const Vocab* vocab = nullptr);

}  // namespace nbf
