#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "nbf/error.hpp"
#include "nbf/random.hpp"

namespace nbf {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;
using EdgeId = std::uint32_t;

struct Triplet {
    EntityId head = 0;
    RelationId relation = 0;
    EntityId tail = 0;

    bool operator==(const Triplet&) const = default;
};

struct TripletHash {
    std::size_t operator()(const Triplet& t) const noexcept {
        std::uint64_t x = (std::uint64_t(t.head) << 40) ^ (std::uint64_t(t.relation) << 20) ^
                          std::uint64_t(t.tail);
        x ^= x >> 33;
        x *= 0xff51afd7ed558ccdULL;
        x ^= x >> 33;
        x *= 0xc4ceb9fe1a85ec53ULL;
        x ^= x >> 33;
        return static_cast<std::size_t>(x);
    }
};

using TripletSet = std::unordered_set<Triplet, TripletHash>;

/// Bijection between names and dense ids assigned in first-seen order.
class StringIndex {
public:
    std::uint32_t add(const std::string& name);
    std::optional<std::uint32_t> find(const std::string& name) const;
    const std::string& name(std::uint32_t id) const;
    std::size_t size() const { return names_.size(); }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::uint32_t> ids_;
};

struct Vocab {
    StringIndex entities;
    StringIndex relations;
    // a frozen vocab rejects unknown names instead of extending
    bool frozen = false;
};

struct Edge {
    EntityId head = 0;
    RelationId relation = 0;
    EntityId tail = 0;
    double weight = 1.0;
};

struct IncomingEdge {
    EntityId source;
    RelationId relation;
    EdgeId edge;
};

/// Immutable multi-relational graph with incoming/outgoing adjacency and
/// per-node outgoing weight sums. Safe for unrestricted concurrent reads.
class KnowledgeGraph {
public:
    std::size_t num_entities() const { return num_entities_; }
    std::size_t num_relations() const { return num_relations_; }
    std::size_t num_edges() const { return edges_.size(); }
    const Edge& edge(EdgeId e) const { return edges_[e]; }
    const std::vector<Edge>& edges() const { return edges_; }

    std::span<const EdgeId> incoming(EntityId v) const;
    std::span<const EdgeId> outgoing(EntityId u) const;
    double out_weight_sum(EntityId u) const;

    bool directed() const { return directed_; }
    bool has_triplet(EntityId h, RelationId r, EntityId t) const {
        return fact_set_.count({h, r, t}) > 0;
    }
    const TripletSet& fact_set() const { return fact_set_; }

    // relation layout after augmentation
    bool inverse_augmented() const { return inverse_offset_ > 0; }
    std::size_t base_relations() const { return inverse_offset_ ? inverse_offset_ : num_relations_; }
    RelationId inverse_relation(RelationId r) const;
    std::optional<RelationId> self_loop_relation() const { return self_loop_relation_; }

private:
    std::size_t num_entities_ = 0;
    std::size_t num_relations_ = 0;
    std::size_t inverse_offset_ = 0;  // base relation count when inverses were added
    std::optional<RelationId> self_loop_relation_;
    bool directed_ = true;
    std::vector<Edge> edges_;
    std::vector<EdgeId> in_edges_, out_edges_;    // CSR payloads
    std::vector<std::size_t> in_off_, out_off_;   // CSR offsets, size V+1
    std::vector<double> out_weight_sum_;
    TripletSet fact_set_;

    friend KnowledgeGraph build_graph(const std::vector<Triplet>&, std::size_t, std::size_t,
                                      const struct GraphBuildOptions&, const std::vector<double>&);
};

struct GraphBuildOptions {
    // (u, r, v) also yields (v, r + num_relations, u); relation count doubles
    bool augment_inverse = false;
    // every node gains (u, self_relation, u) with a dedicated relation id
    bool add_self_loops = false;
    // undirected input: each triplet is stored as two directed edges sharing
    // one weight, same relation id
    bool undirected = false;
};

KnowledgeGraph build_graph(const std::vector<Triplet>& triplets, std::size_t num_entities,
                           std::size_t num_relations, const GraphBuildOptions& options = {},
                           const std::vector<double>& weights = {});

/// Edges ending at v as (source, relation, edge id), in insertion order.
std::vector<IncomingEdge> incoming_edges(const KnowledgeGraph& graph, EntityId v);

struct TripletData {
    std::vector<Triplet> triplets;
    std::vector<double> weights;  // parallel to triplets when has_weights
    bool has_weights = false;
};

/// Reads "head<TAB>relation<TAB>tail[<TAB>weight]" lines; '#" lines and blank
/// lines are skipped. Ids are assigned in first-seen order; a frozen vocab
/// rejects unknown names.
TripletData load_triplets(const std::string& path, Vocab& vocab);
void save_triplets(const std::string& path, const std::vector<Triplet>& triplets,
                   const Vocab& vocab, const std::vector<double>& weights = {});

StringIndex load_names(const std::string& path);
void save_names(const std::string& path, const StringIndex& index);

enum class CorruptSide { Head, Tail, Both };

/// Negatives under the partial completeness assumption: one entity of the
/// positive is replaced, uniformly among entities that do not form a known
/// fact of `graph`. Draws are independent (repeats possible).
std::vector<Triplet> sample_negatives_pca(const KnowledgeGraph& graph, const Triplet& positive,
                                          std::size_t n, CorruptSide side, Rng& rng);

/// 1 = keep, 0 = masked. Masks every edge whose endpoints {u, v} match a
/// batch triplet's endpoints, in either direction and any relation.
std::vector<std::uint8_t> mask_query_edges(const KnowledgeGraph& graph,
                                           std::span<const Triplet> batch);

struct Subgraph {
    KnowledgeGraph graph;
    std::vector<EntityId> to_parent;    // subgraph node id -> parent node id
    std::vector<EdgeId> edge_to_parent; // subgraph edge id -> parent edge id
    std::unordered_map<EntityId, EntityId> from_parent;
};

/// Union of k-hop BFS neighborhoods (ignoring direction) around head and each
/// candidate; expanded nodes visit at most m outgoing and m incoming
/// neighbors, uniformly downsampled without replacement when exceeded.
/// Use m = SIZE_MAX for no cap, which guarantees every path of length <= 2k
/// between head and a candidate survives.
Subgraph sample_bidirectional_bfs(const KnowledgeGraph& graph, EntityId head,
                                  std::span<const EntityId> candidates, std::size_t k,
                                  std::size_t m, Rng& rng);

}  // namespace nbf
