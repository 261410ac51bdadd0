#include "support/oracles.hpp"

#include <algorithm>
#include <limits>
#include <queue>

namespace nbf::testsupport {

std::vector<double> dijkstra(const KnowledgeGraph& graph, EntityId source) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(graph.num_entities(), inf);
    dist[source] = 0.0;
    using Item = std::pair<double, EntityId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> queue;
    queue.push({0.0, source});
    while (!queue.empty()) {
        auto [d, x] = queue.top();
        queue.pop();
        if (d > dist[x]) continue;
        for (EdgeId e : graph.outgoing(x)) {
            const double nd = dist[x] + graph.edge(e).weight;
            const EntityId y = graph.edge(e).tail;
            if (nd < dist[y]) {
                dist[y] = nd;
                queue.push({nd, y});
            }
        }
    }
    return dist;
}

namespace {

void dfs_paths(const KnowledgeGraph& graph, EntityId x, EntityId v, std::size_t budget,
               std::vector<EdgeId>& stack, std::vector<std::uint8_t>& visited,
               std::vector<std::vector<EdgeId>>& out) {
    if (budget == 0) return;
    for (EdgeId e : graph.outgoing(x)) {
        const EntityId y = graph.edge(e).tail;
        if (visited[y]) continue;
        stack.push_back(e);
        if (y == v) {
            out.push_back(stack);
        } else {
            visited[y] = 1;
            dfs_paths(graph, y, v, budget - 1, stack, visited, out);
            visited[y] = 0;
        }
        stack.pop_back();
    }
}

}  // namespace

std::vector<std::vector<EdgeId>> enumerate_simple_paths(const KnowledgeGraph& graph, EntityId u,
                                                        EntityId v, std::size_t max_len) {
    std::vector<std::vector<EdgeId>> out;
    if (u == v) return out;  // no simple path starts and ends at the same node
    std::vector<EdgeId> stack;
    std::vector<std::uint8_t> visited(graph.num_entities(), 0);
    visited[u] = 1;
    dfs_paths(graph, u, v, max_len, stack, visited, out);
    return out;
}

bool path_within(const KnowledgeGraph& graph, EntityId u, EntityId v, std::size_t max_len) {
    // BFS over undirected hops
    std::vector<std::size_t> depth(graph.num_entities(), SIZE_MAX);
    std::queue<EntityId> queue;
    depth[u] = 0;
    queue.push(u);
    while (!queue.empty()) {
        EntityId x = queue.front();
        queue.pop();
        if (x == v) return true;
        if (depth[x] >= max_len) continue;
        auto step = [&](EntityId y) {
            if (depth[y] == SIZE_MAX) {
                depth[y] = depth[x] + 1;
                queue.push(y);
            }
        };
        for (EdgeId e : graph.outgoing(x)) step(graph.edge(e).tail);
        for (EdgeId e : graph.incoming(x)) step(graph.edge(e).head);
    }
    return false;
}

RandomGraph random_graph(Rng& rng, const RandomGraphSpec& spec) {
    RandomGraph out;
    out.num_entities = 2 + rng.index(spec.max_nodes - 1);
    out.num_relations = spec.num_relations;
    const std::size_t edges = 1 + rng.index(spec.max_edges);
    for (std::size_t i = 0; i < edges; ++i) {
        Triplet t;
        t.head = static_cast<EntityId>(rng.index(out.num_entities));
        t.tail = static_cast<EntityId>(rng.index(out.num_entities));
        if (!spec.allow_self_loops && t.head == t.tail) continue;
        t.relation = static_cast<RelationId>(rng.index(out.num_relations));
        out.triplets.push_back(t);
        out.weights.push_back(rng.uniform(spec.min_weight, spec.max_weight));
    }
    if (out.triplets.empty()) {
        out.triplets.push_back({0, 0, 1});
        out.weights.push_back(rng.uniform(spec.min_weight, spec.max_weight));
    }
    out.graph = build_graph(out.triplets, out.num_entities, out.num_relations, {}, out.weights);
    return out;
}

}  // namespace nbf::testsupport
