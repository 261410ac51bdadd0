#include "nbf/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nbf {

ImportanceGraph edge_importance(const KnowledgeGraph& graph, const ModelParams& params,
                                const ModelConfig& config, const Triplet& triplet) {
    require(triplet.head < graph.num_entities() && triplet.tail < graph.num_entities(),
            "edge_importance: triplet entity out of range");

    Tensor gates = Tensor::constant({graph.num_edges(), 1}, 1.0);
    gates.set_requires_grad(true);

    Tensor prob;
    if (config.symmetrize) {
        PairField fwd = nbfnet_forward(graph, triplet.head, triplet.relation, config, params,
                                       nullptr, &gates);
        PairField bwd = nbfnet_forward(graph, triplet.tail, triplet.relation, config, params,
                                       nullptr, &gates);
        Tensor h_uv = slice_rows(fwd.values, triplet.tail, triplet.tail + 1);
        Tensor h_vu = slice_rows(bwd.values, triplet.head, triplet.head + 1);
        prob = score_symmetric(params, h_uv, h_vu);
    } else {
        PairField fwd = nbfnet_forward(graph, triplet.head, triplet.relation, config, params,
                                       nullptr, &gates);
        prob = score_field(params, slice_rows(fwd.values, triplet.tail, triplet.tail + 1));
    }
    backward(prob);

    ImportanceGraph out;
    out.graph = &graph;
    out.importance = gates.grad();
    return out;
}

namespace {

struct PartialPath {
    std::vector<EdgeId> edges;
    double weight = 0.0;
    std::uint64_t visited_mask = 0;  // nodes on the path, graphs <= 64 nodes use the fast path
    std::vector<std::uint8_t> visited_large;

    bool visited(EntityId v, std::size_t num_nodes) const {
        return num_nodes <= 64 ? (visited_mask >> v) & 1 : visited_large[v] != 0;
    }
    void visit(EntityId v, std::size_t num_nodes) {
        if (num_nodes <= 64) visited_mask |= std::uint64_t(1) << v;
        else visited_large[v] = 1;
    }
};

// descending weight, then lexicographic edge ids
bool path_before(const PartialPath& a, const PartialPath& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.edges < b.edges;
}

}  // namespace

std::vector<PathInterpretation> top_k_paths(const ImportanceGraph& importance, EntityId u,
                                            EntityId v, std::size_t k, std::size_t max_len,
                                            std::size_t beam_width) {
    require(k >= 1, "top_k_paths: k must be >= 1");
    require(beam_width >= k, "top_k_paths: beam width must be >= k");
    const KnowledgeGraph& graph = *importance.graph;
    require(u < graph.num_entities() && v < graph.num_entities(),
            "top_k_paths: endpoint out of range");
    if (importance.importance.size() != graph.num_edges())
        throw ArgumentError("top_k_paths: importance vector length != edge count");
    for (double w : importance.importance)
        if (!std::isfinite(w)) throw NumericError("top_k_paths: non-finite edge importance");

    const std::size_t n = graph.num_entities();

    PartialPath origin;
    if (n > 64) origin.visited_large.assign(n, 0);
    origin.visit(u, n);

    // beams[x] holds the best partial simple paths from u ending at x
    std::vector<std::vector<PartialPath>> beams(n);
    beams[u].push_back(origin);

    std::vector<PartialPath> complete;
    auto note_complete = [&](const PartialPath& p) {
        complete.push_back(p);
        std::sort(complete.begin(), complete.end(), path_before);
        if (complete.size() > k) complete.resize(k);
    };

    for (std::size_t step = 0; step < max_len; ++step) {
        std::vector<std::vector<PartialPath>> next(n);
        bool extended = false;
        for (EntityId x = 0; x < n; ++x) {
            for (const PartialPath& p : beams[x]) {
                for (EdgeId e : graph.outgoing(x)) {
                    const EntityId y = graph.edge(e).tail;
                    if (p.visited(y, n)) continue;  // simple paths only
                    PartialPath q = p;
                    q.edges.push_back(e);
                    q.weight += importance.importance[e];
                    q.visit(y, n);
                    if (y == v) {
                        note_complete(q);
                    } else {
                        next[y].push_back(std::move(q));
                        extended = true;
                    }
                }
            }
        }
        for (auto& bucket : next) {
            std::sort(bucket.begin(), bucket.end(), path_before);
            if (beam_width != SIZE_MAX && bucket.size() > beam_width) bucket.resize(beam_width);
        }
        beams = std::move(next);
        if (!extended) break;
    }

    std::vector<PathInterpretation> out;
    out.reserve(complete.size());
    for (const PartialPath& p : complete) out.push_back({p.edges, p.weight});
    return out;
}

std::string format_path(const KnowledgeGraph& graph, const PathInterpretation& path,
                        const Vocab* vocab) {
    std::ostringstream os;
    const std::size_t base = graph.base_relations();
    for (std::size_t i = 0; i < path.edges.size(); ++i) {
        const Edge& e = graph.edge(path.edges[i]);
        if (i) os << " ^ ";
        os << "(";
        if (vocab) os << vocab->entities.name(e.head);
        else os << e.head;
        os << ", ";
        const bool inverse = graph.inverse_augmented() && e.relation >= base &&
                             (!graph.self_loop_relation() || e.relation != *graph.self_loop_relation());
        const RelationId display_rel = inverse ? e.relation - static_cast<RelationId>(base)
                                               : e.relation;
        if (vocab && display_rel < vocab->relations.size())
            os << vocab->relations.name(display_rel);
        else os << display_rel;
        if (inverse) os << "^-1";
        os << ", ";
        if (vocab) os << vocab->entities.name(e.tail);
        else os << e.tail;
        os << ")";
    }
    return os.str();
}

}  // namespace nbf
