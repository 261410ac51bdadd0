#pragma once

#include "nbf/eval.hpp"
#include "nbf/graph.hpp"

namespace nbf::testsupport {

struct ToyDataset {
    Splits splits;
    std::size_t num_entities = 12;
    std::size_t num_relations = 3;
};

/// Composition dataset: relation 2 holds exactly where a relation-0 edge
/// chains into a relation-1 edge. All relation-0/1 facts and a third of the
/// composed facts are training data; the rest split into valid/test, so the
/// held-out facts are provable from 2-hop paths in the training graph.
ToyDataset toy_composition_dataset(std::uint64_t seed);

struct HomoDataset {
    Splits splits;  // undirected edges, relation 0, stored one direction
    std::size_t num_entities = 0;
};

/// Citation-style undirected graph: community blocks plus a few hub nodes,
/// split 85:5:10 into train/valid/test edges.
HomoDataset synthetic_citation_graph(std::uint64_t seed, std::size_t num_entities = 1000);

}  // namespace nbf::testsupport
