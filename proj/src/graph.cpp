#include "nbf/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

namespace nbf {

std::uint32_t StringIndex::add(const std::string& name) {
    auto it = ids_.find(name);
    if (it != ids_.end()) return it->second;
    std::uint32_t id = static_cast<std::uint32_t>(names_.size());
    names_.push_back(name);
    ids_.emplace(name, id);
    return id;
}

std::optional<std::uint32_t> StringIndex::find(const std::string& name) const {
    auto it = ids_.find(name);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

const std::string& StringIndex::name(std::uint32_t id) const {
    if (id >= names_.size()) throw LookupError("no name for id " + std::to_string(id));
    return names_[id];
}

std::span<const EdgeId> KnowledgeGraph::incoming(EntityId v) const {
    if (v >= num_entities_) throw ArgumentError("incoming: node id out of range");
    return {in_edges_.data() + in_off_[v], in_off_[v + 1] - in_off_[v]};
}

std::span<const EdgeId> KnowledgeGraph::outgoing(EntityId u) const {
    if (u >= num_entities_) throw ArgumentError("outgoing: node id out of range");
    return {out_edges_.data() + out_off_[u], out_off_[u + 1] - out_off_[u]};
}

double KnowledgeGraph::out_weight_sum(EntityId u) const {
    if (u >= num_entities_) throw ArgumentError("out_weight_sum: node id out of range");
    return out_weight_sum_[u];
}

RelationId KnowledgeGraph::inverse_relation(RelationId r) const {
    if (!inverse_augmented()) throw ArgumentError("inverse_relation: graph has no inverse edges");
    if (self_loop_relation_ && r == *self_loop_relation_) return r;
    const RelationId offset = static_cast<RelationId>(inverse_offset_);
    if (r >= 2 * offset) throw ArgumentError("inverse_relation: relation id out of range");
    return r < offset ? r + offset : r - offset;
}

KnowledgeGraph build_graph(const std::vector<Triplet>& triplets, std::size_t num_entities,
                           std::size_t num_relations, const GraphBuildOptions& options,
                           const std::vector<double>& weights) {
    if (!weights.empty() && weights.size() != triplets.size())
        throw BuildError("build_graph: weight count differs from triplet count");
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        const Triplet& t = triplets[i];
        if (t.head >= num_entities || t.tail >= num_entities)
            throw BuildError("build_graph: entity id out of range at triplet " + std::to_string(i));
        if (t.relation >= num_relations)
            throw BuildError("build_graph: relation id out of range at triplet " +
                             std::to_string(i));
    }
    if (options.augment_inverse && options.undirected)
        throw BuildError("build_graph: inverse augmentation and undirected storage are exclusive");

    KnowledgeGraph g;
    g.num_entities_ = num_entities;
    g.directed_ = !options.undirected;

    auto weight_of = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };

    std::size_t relation_count = num_relations;
    g.edges_.reserve(triplets.size() * 2 + (options.add_self_loops ? num_entities : 0));
    for (std::size_t i = 0; i < triplets.size(); ++i)
        g.edges_.push_back({triplets[i].head, triplets[i].relation, triplets[i].tail, weight_of(i)});
    if (options.augment_inverse) {
        const RelationId offset = static_cast<RelationId>(num_relations);
        for (std::size_t i = 0; i < triplets.size(); ++i)
            g.edges_.push_back({triplets[i].tail,
                                static_cast<RelationId>(triplets[i].relation + offset),
                                triplets[i].head, weight_of(i)});
        g.inverse_offset_ = num_relations;
        relation_count = 2 * num_relations;
    } else if (options.undirected) {
        for (std::size_t i = 0; i < triplets.size(); ++i)
            g.edges_.push_back({triplets[i].tail, triplets[i].relation, triplets[i].head,
                                weight_of(i)});
    }
    if (options.add_self_loops) {
        const RelationId self_rel = static_cast<RelationId>(relation_count);
        for (EntityId u = 0; u < num_entities; ++u)
            g.edges_.push_back({u, self_rel, u, 1.0});
        g.self_loop_relation_ = self_rel;
        relation_count += 1;
    }
    g.num_relations_ = relation_count;

    // CSR indices preserve edge insertion order within each bucket
    g.in_off_.assign(num_entities + 1, 0);
    g.out_off_.assign(num_entities + 1, 0);
    for (const Edge& e : g.edges_) {
        ++g.in_off_[e.tail + 1];
        ++g.out_off_[e.head + 1];
    }
    for (std::size_t v = 0; v < num_entities; ++v) {
        g.in_off_[v + 1] += g.in_off_[v];
        g.out_off_[v + 1] += g.out_off_[v];
    }
    g.in_edges_.resize(g.edges_.size());
    g.out_edges_.resize(g.edges_.size());
    std::vector<std::size_t> in_pos(g.in_off_.begin(), g.in_off_.end() - 1);
    std::vector<std::size_t> out_pos(g.out_off_.begin(), g.out_off_.end() - 1);
    for (EdgeId e = 0; e < g.edges_.size(); ++e) {
        g.in_edges_[in_pos[g.edges_[e].tail]++] = e;
        g.out_edges_[out_pos[g.edges_[e].head]++] = e;
    }

    g.out_weight_sum_.assign(num_entities, 0.0);
    for (const Edge& e : g.edges_) g.out_weight_sum_[e.head] += e.weight;

    g.fact_set_.reserve(g.edges_.size() * 2);
    for (const Edge& e : g.edges_) g.fact_set_.insert({e.head, e.relation, e.tail});
    return g;
}

std::vector<IncomingEdge> incoming_edges(const KnowledgeGraph& graph, EntityId v) {
    auto span = graph.incoming(v);
    std::vector<IncomingEdge> out;
    out.reserve(span.size());
    for (EdgeId e : span) out.push_back({graph.edge(e).head, graph.edge(e).relation, e});
    return out;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

std::uint32_t resolve(StringIndex& index, const std::string& name, bool frozen,
                      const char* what, std::size_t line_no) {
    if (!frozen) return index.add(name);
    auto id = index.find(name);
    if (!id)
        throw LookupError(std::string("unknown ") + what + " \"" + name + "\" at line " +
                          std::to_string(line_no) + " (vocab is frozen)");
    return *id;
}

}  // namespace

TripletData load_triplets(const std::string& path, Vocab& vocab) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open triplet file " + path);
    TripletData data;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_tabs(line);
        if (fields.size() != 3 && fields.size() != 4)
            throw ParseError("line " + std::to_string(line_no) + " of " + path + ": expected 3 " +
                             "tab-separated fields, got " + std::to_string(fields.size()));
        Triplet t;
        t.head = resolve(vocab.entities, fields[0], vocab.frozen, "entity", line_no);
        t.relation = resolve(vocab.relations, fields[1], vocab.frozen, "relation", line_no);
        t.tail = resolve(vocab.entities, fields[2], vocab.frozen, "entity", line_no);
        double w = 1.0;
        if (fields.size() == 4) {
            try {
                std::size_t used = 0;
                w = std::stod(fields[3], &used);
                if (used != fields[3].size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw ParseError("line " + std::to_string(line_no) + " of " + path +
                                 ": malformed weight \"" + fields[3] + "\"");
            }
            data.has_weights = true;
        }
        data.triplets.push_back(t);
        data.weights.push_back(w);
    }
    if (!data.has_weights) data.weights.clear();
    return data;
}

void save_triplets(const std::string& path, const std::vector<Triplet>& triplets,
                   const Vocab& vocab, const std::vector<double>& weights) {
    if (!weights.empty() && weights.size() != triplets.size())
        throw ArgumentError("save_triplets: weight count differs from triplet count");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write triplet file " + path);
    out.precision(17);
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        const Triplet& t = triplets[i];
        out << vocab.entities.name(t.head) << '\t' << vocab.relations.name(t.relation) << '\t'
            << vocab.entities.name(t.tail);
        if (!weights.empty()) out << '\t' << weights[i];
        out << '\n';
    }
}

StringIndex load_names(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocab file " + path);
    StringIndex index;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::uint32_t id = index.add(line);
        if (id != line_no - 1)
            throw ParseError("vocab file " + path + ": duplicate name at line " +
                             std::to_string(line_no));
    }
    return index;
}

void save_names(const std::string& path, const StringIndex& index) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write vocab file " + path);
    for (std::uint32_t id = 0; id < index.size(); ++id) out << index.name(id) << '\n';
}

std::vector<Triplet> sample_negatives_pca(const KnowledgeGraph& graph, const Triplet& positive,
                                          std::size_t n, CorruptSide side, Rng& rng) {
    require(n >= 1, "sample_negatives_pca: n must be >= 1");
    if (positive.head >= graph.num_entities() || positive.tail >= graph.num_entities() ||
        positive.relation >= graph.num_relations())
        throw ArgumentError("sample_negatives_pca: positive out of range");

    const std::size_t num_entities = graph.num_entities();
    auto candidates_for = [&](bool corrupt_head) {
        std::vector<EntityId> out;
        out.reserve(num_entities);
        for (EntityId e = 0; e < num_entities; ++e) {
            if (corrupt_head) {
                if (e == positive.head) continue;
                if (!graph.has_triplet(e, positive.relation, positive.tail)) out.push_back(e);
            } else {
                if (e == positive.tail) continue;
                if (!graph.has_triplet(positive.head, positive.relation, e)) out.push_back(e);
            }
        }
        return out;
    };

    std::vector<EntityId> head_pool, tail_pool;
    if (side == CorruptSide::Head || side == CorruptSide::Both) head_pool = candidates_for(true);
    if (side == CorruptSide::Tail || side == CorruptSide::Both) tail_pool = candidates_for(false);

    std::vector<Triplet> negatives;
    negatives.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        bool corrupt_head;
        switch (side) {
            case CorruptSide::Head: corrupt_head = true; break;
            case CorruptSide::Tail: corrupt_head = false; break;
            case CorruptSide::Both: corrupt_head = rng.index(2) == 0; break;
            default: throw InternalError("bad corrupt side");
        }
        const auto& pool = corrupt_head ? head_pool : tail_pool;
        if (pool.empty())
            throw SamplingError("no valid corruption exists for the positive on the " +
                                std::string(corrupt_head ? "head" : "tail") + " side");
        EntityId e = pool[rng.index(pool.size())];
        Triplet neg = positive;
        (corrupt_head ? neg.head : neg.tail) = e;
        negatives.push_back(neg);
    }
    return negatives;
}

std::vector<std::uint8_t> mask_query_edges(const KnowledgeGraph& graph,
                                           std::span<const Triplet> batch) {
    std::vector<std::uint8_t> mask(graph.num_edges(), 1);
    if (batch.empty()) return mask;
    std::unordered_set<std::uint64_t> pairs;
    pairs.reserve(batch.size() * 2);
    for (const Triplet& t : batch) {
        pairs.insert((std::uint64_t(t.head) << 32) | t.tail);
        pairs.insert((std::uint64_t(t.tail) << 32) | t.head);
    }
    for (EdgeId e = 0; e < graph.num_edges(); ++e) {
        const Edge& edge = graph.edge(e);
        if (pairs.count((std::uint64_t(edge.head) << 32) | edge.tail)) mask[e] = 0;
    }
    return mask;
}

Subgraph sample_bidirectional_bfs(const KnowledgeGraph& graph, EntityId head,
                                  std::span<const EntityId> candidates, std::size_t k,
                                  std::size_t m, Rng& rng) {
    require(k >= 1, "sample_bidirectional_bfs: k must be >= 1");
    require(m >= 1, "sample_bidirectional_bfs: m must be >= 1");
    if (head >= graph.num_entities())
        throw ArgumentError("sample_bidirectional_bfs: head out of range");
    for (EntityId c : candidates)
        if (c >= graph.num_entities())
            throw ArgumentError("sample_bidirectional_bfs: candidate out of range");

    std::unordered_set<EntityId> nodes;
    std::unordered_set<EdgeId> edge_set;
    std::vector<EntityId> node_order;
    std::vector<EdgeId> edge_order;

    auto note_node = [&](EntityId v) {
        if (nodes.insert(v).second) node_order.push_back(v);
    };
    auto note_edge = [&](EdgeId e) {
        if (edge_set.insert(e).second) edge_order.push_back(e);
    };

    // at most m edge ids from `all`, uniformly downsampled without replacement
    auto pick = [&](std::span<const EdgeId> all) {
        std::vector<EdgeId> out;
        if (all.size() <= m) {
            out.assign(all.begin(), all.end());
        } else {
            auto chosen = rng.sample_without_replacement(all.size(), m);
            std::sort(chosen.begin(), chosen.end());
            out.reserve(m);
            for (auto i : chosen) out.push_back(all[i]);
        }
        return out;
    };

    auto bfs_from = [&](EntityId origin) {
        std::unordered_map<EntityId, std::size_t> depth;
        std::deque<EntityId> queue;
        depth.emplace(origin, 0);
        queue.push_back(origin);
        note_node(origin);
        while (!queue.empty()) {
            EntityId x = queue.front();
            queue.pop_front();
            const std::size_t dx = depth[x];
            if (dx >= k) continue;  // visited but not expanded
            for (EdgeId e : pick(graph.outgoing(x))) {
                note_edge(e);
                EntityId y = graph.edge(e).tail;
                note_node(y);
                if (!depth.count(y)) {
                    depth.emplace(y, dx + 1);
                    queue.push_back(y);
                }
            }
            for (EdgeId e : pick(graph.incoming(x))) {
                note_edge(e);
                EntityId y = graph.edge(e).head;
                note_node(y);
                if (!depth.count(y)) {
                    depth.emplace(y, dx + 1);
                    queue.push_back(y);
                }
            }
        }
    };

    bfs_from(head);
    for (EntityId c : candidates)
        if (c != head) bfs_from(c);

    Subgraph sub;
    sub.to_parent = node_order;
    sub.from_parent.reserve(node_order.size());
    for (EntityId i = 0; i < node_order.size(); ++i) sub.from_parent.emplace(node_order[i], i);

    std::sort(edge_order.begin(), edge_order.end());
    std::vector<Triplet> triplets;
    std::vector<double> weights;
    triplets.reserve(edge_order.size());
    for (EdgeId e : edge_order) {
        const Edge& edge = graph.edge(e);
        triplets.push_back({sub.from_parent.at(edge.head), edge.relation,
                            sub.from_parent.at(edge.tail)});
        weights.push_back(edge.weight);
        sub.edge_to_parent.push_back(e);
    }
    GraphBuildOptions opts;  // parent augmentation, if any, is already explicit in the edges
    sub.graph = build_graph(triplets, node_order.size(), graph.num_relations(), opts, weights);
    return sub;
}

}  // namespace nbf
