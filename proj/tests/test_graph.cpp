#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "nbf/graph.hpp"
#include "support/oracles.hpp"

using namespace nbf;
namespace ts = nbf::testsupport;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& contents) {
        static int counter = 0;
        path = (std::filesystem::temp_directory_path() /
                ("nbf_graph_test_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++) + ".tsv"))
                   .string();
        std::ofstream out(path, std::ios::binary);
        out << contents;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("load_triplets: first-seen ids") {
    TempFile f("a\tr\tb\n");
    Vocab vocab;
    auto data = load_triplets(f.path, vocab);
    REQUIRE(data.triplets.size() == 1);
    CHECK(data.triplets[0] == Triplet{0, 0, 1});
    CHECK(vocab.entities.find("a") == 0);
    CHECK(vocab.entities.find("b") == 1);
    CHECK(vocab.relations.find("r") == 0);
    CHECK_FALSE(data.has_weights);
}

TEST_CASE("load_triplets: empty file and ordering trace") {
    TempFile empty("");
    Vocab vocab;
    vocab.entities.add("pre");
    auto data = load_triplets(empty.path, vocab);
    CHECK(data.triplets.empty());
    CHECK(vocab.entities.size() == 1);

    TempFile two("a\tr\tb\nb\tr\tc\n");
    Vocab v2;
    auto d2 = load_triplets(two.path, v2);
    REQUIRE(d2.triplets.size() == 2);
    CHECK(d2.triplets[0] == Triplet{0, 0, 1});
    CHECK(d2.triplets[1] == Triplet{1, 0, 2});
}

TEST_CASE("load_triplets: comments, weights, malformed lines, frozen vocab") {
    TempFile f("# comment\na\tr\tb\t0.5\n\nc\tr\td\t2.0\n");
    Vocab vocab;
    auto data = load_triplets(f.path, vocab);
    REQUIRE(data.triplets.size() == 2);
    CHECK(data.has_weights);
    CHECK(data.weights == std::vector<double>{0.5, 2.0});

    TempFile bad("a\tr\n");
    Vocab v2;
    CHECK_THROWS_WITH_AS(load_triplets(bad.path, v2), doctest::Contains("line 1"), ParseError);

    TempFile unknown("zzz\tr\tb\n");
    vocab.frozen = true;
    CHECK_THROWS_AS(load_triplets(unknown.path, vocab), LookupError);
}

TEST_CASE("vocab files: one name per line, line number = id") {
    TempFile f("carol\nbob\nalice\n");
    StringIndex names = load_names(f.path);
    REQUIRE(names.size() == 3);
    CHECK(names.name(0) == "carol");
    CHECK(names.name(2) == "alice");
    CHECK(names.find("bob") == 1);

    TempFile out("");
    save_names(out.path, names);
    StringIndex reloaded = load_names(out.path);
    CHECK(reloaded.size() == 3);
    CHECK(reloaded.name(1) == "bob");

    TempFile dup("x\nx\n");
    CHECK_THROWS_AS(load_names(dup.path), ParseError);
}

TEST_CASE("build_graph: inverse augmentation doubles edges") {
    KnowledgeGraph g = build_graph({{0, 0, 1}}, 2, 1, {.augment_inverse = true});
    CHECK(g.num_edges() == 2);
    CHECK(g.num_relations() == 2);
    CHECK(g.edge(1).head == 1);
    CHECK(g.edge(1).relation == 1);
    CHECK(g.edge(1).tail == 0);
    CHECK(g.inverse_relation(0) == 1);
    CHECK(g.inverse_relation(1) == 0);
}

TEST_CASE("build_graph: self loops and incoming adjacency") {
    KnowledgeGraph loops = build_graph({}, 2, 1, {.add_self_loops = true});
    CHECK(loops.num_edges() == 2);
    REQUIRE(loops.self_loop_relation().has_value());
    CHECK(*loops.self_loop_relation() == 1);

    KnowledgeGraph g = build_graph({{0, 0, 1}, {1, 0, 2}}, 3, 1);
    auto in2 = incoming_edges(g, 2);
    REQUIRE(in2.size() == 1);
    CHECK(in2[0].source == 1);
    CHECK(in2[0].relation == 0);

    CHECK(incoming_edges(g, 0).empty());
    CHECK_THROWS_AS(incoming_edges(g, 99), ArgumentError);
    CHECK_THROWS_AS(build_graph({{0, 0, 5}}, 3, 1), BuildError);
}

TEST_CASE("build_graph: inverse augmentation fills reverse adjacency") {
    KnowledgeGraph g = build_graph({{0, 0, 1}}, 2, 1, {.augment_inverse = true});
    auto in0 = incoming_edges(g, 0);
    REQUIRE(in0.size() == 1);
    CHECK(in0[0].source == 1);
    CHECK(in0[0].relation == 1);
}

TEST_CASE("adjacency partitions the edge list") {
    Rng rng(5);
    for (int trial = 0; trial < 25; ++trial) {
        auto rg = ts::random_graph(rng, {});
        std::size_t in_total = 0, out_total = 0;
        for (EntityId v = 0; v < rg.graph.num_entities(); ++v) {
            in_total += rg.graph.incoming(v).size();
            out_total += rg.graph.outgoing(v).size();
            for (EdgeId e : rg.graph.incoming(v)) CHECK(rg.graph.edge(e).tail == v);
            for (EdgeId e : rg.graph.outgoing(v)) CHECK(rg.graph.edge(e).head == v);
        }
        CHECK(in_total == rg.graph.num_edges());
        CHECK(out_total == rg.graph.num_edges());
        for (EntityId u = 0; u < rg.graph.num_entities(); ++u) {
            double sum = 0.0;
            for (EdgeId e : rg.graph.outgoing(u)) sum += rg.graph.edge(e).weight;
            CHECK(rg.graph.out_weight_sum(u) ==
                  doctest::Approx(sum).epsilon(1e-12));
        }
    }
}

TEST_CASE("triplet round trip reproduces adjacency") {
    Rng rng(31);
    auto rg = ts::random_graph(rng, {.max_nodes = 8, .max_edges = 15});
    Vocab vocab;
    for (std::size_t i = 0; i < rg.num_entities; ++i) vocab.entities.add("e" + std::to_string(i));
    for (std::size_t i = 0; i < rg.num_relations; ++i)
        vocab.relations.add("r" + std::to_string(i));

    TempFile f("");
    save_triplets(f.path, rg.triplets, vocab, rg.weights);
    vocab.frozen = true;  // reload under the same name -> id mapping
    auto data = load_triplets(f.path, vocab);
    KnowledgeGraph reloaded = build_graph(data.triplets, rg.num_entities, rg.num_relations, {},
                                          data.weights);

    REQUIRE(reloaded.num_edges() == rg.graph.num_edges());
    for (EntityId v = 0; v < rg.graph.num_entities(); ++v) {
        auto a = incoming_edges(rg.graph, v);
        auto b = incoming_edges(reloaded, v);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].source == b[i].source);
            CHECK(a[i].relation == b[i].relation);
        }
    }
}

TEST_CASE("pca negatives: candidate set, determinism, errors") {
    KnowledgeGraph g = build_graph({{0, 0, 1}}, 3, 1);
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        auto negs = sample_negatives_pca(g, {0, 0, 1}, 1, CorruptSide::Tail, rng);
        REQUIRE(negs.size() == 1);
        CHECK((negs[0].tail == 0 || negs[0].tail == 2));
        CHECK(negs[0].head == 0);
    }

    Rng a(42), b(42);
    auto na = sample_negatives_pca(g, {0, 0, 1}, 8, CorruptSide::Both, a);
    auto nb = sample_negatives_pca(g, {0, 0, 1}, 8, CorruptSide::Both, b);
    CHECK(na == nb);

    CHECK_THROWS_AS(sample_negatives_pca(g, {0, 0, 1}, 0, CorruptSide::Tail, rng),
                    ArgumentError);

    // complete bipartite closure: no tail corruption remains for (0, 0, *)
    KnowledgeGraph full = build_graph({{0, 0, 0}, {0, 0, 1}}, 2, 1);
    CHECK_THROWS_AS(sample_negatives_pca(full, {0, 0, 1}, 1, CorruptSide::Tail, rng),
                    SamplingError);
}

TEST_CASE("pca negatives never collide with known facts") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        auto rg = ts::random_graph(rng, {.max_nodes = 6, .max_edges = 10});
        const Triplet positive = rg.triplets[rng.index(rg.triplets.size())];
        std::vector<Triplet> negs;
        try {
            negs = sample_negatives_pca(rg.graph, positive, 10, CorruptSide::Both, rng);
        } catch (const SamplingError&) {
            continue;  // saturated side on a tiny graph
        }
        for (const Triplet& n : negs) {
            CHECK_FALSE(rg.graph.has_triplet(n.head, n.relation, n.tail));
            CHECK(((n.head == positive.head) != (n.tail == positive.tail)));
        }
    }
}

TEST_CASE("mask_query_edges") {
    KnowledgeGraph g = build_graph({{0, 0, 1}, {1, 1, 0}, {1, 0, 2}}, 3, 2);
    std::vector<Triplet> batch{{0, 0, 1}};
    auto mask = mask_query_edges(g, batch);
    CHECK(mask == std::vector<std::uint8_t>{0, 0, 1});

    auto all = mask_query_edges(g, {});
    CHECK(all == std::vector<std::uint8_t>{1, 1, 1});

    // masking is a pure function of the batch: applying twice is the same mask
    CHECK(mask_query_edges(g, batch) == mask);
}

TEST_CASE("bidirectional bfs: chain guarantee") {
    // undirected chain 0-1-2-3-4
    std::vector<Triplet> chain{{0, 0, 1}, {1, 0, 2}, {2, 0, 3}, {3, 0, 4}};
    KnowledgeGraph g = build_graph(chain, 5, 1, {.undirected = true});
    Rng rng(1);
    std::vector<EntityId> candidates{4};
    auto sub = sample_bidirectional_bfs(g, 0, candidates, 2, SIZE_MAX, rng);
    CHECK(sub.graph.num_entities() == 5);
    // the full length-4 path survives: head and candidate stay connected
    CHECK(ts::path_within(sub.graph, sub.from_parent.at(0), sub.from_parent.at(4), 4));
}

TEST_CASE("bidirectional bfs: star and identity candidate") {
    std::vector<Triplet> star{{0, 0, 1}, {0, 0, 2}, {0, 0, 3}, {4, 0, 5}};
    KnowledgeGraph g = build_graph(star, 6, 1);
    Rng rng(2);

    std::vector<EntityId> cands{4};
    auto sub = sample_bidirectional_bfs(g, 0, cands, 1, SIZE_MAX, rng);
    std::set<EntityId> nodes(sub.to_parent.begin(), sub.to_parent.end());
    CHECK(nodes == std::set<EntityId>{0, 1, 2, 3, 4, 5});

    std::vector<EntityId> self{0};
    auto only_head = sample_bidirectional_bfs(g, 0, self, 1, SIZE_MAX, rng);
    std::set<EntityId> head_nodes(only_head.to_parent.begin(), only_head.to_parent.end());
    CHECK(head_nodes == std::set<EntityId>{0, 1, 2, 3});

    CHECK_THROWS_AS(sample_bidirectional_bfs(g, 99, self, 1, 1, rng), ArgumentError);
    CHECK_THROWS_AS(sample_bidirectional_bfs(g, 0, self, 0, 1, rng), ArgumentError);
}

namespace {

// every undirected simple path (as parent edge-id sets) between u and v of
// length <= max_len, by exhaustive DFS
void undirected_paths(const KnowledgeGraph& g, EntityId x, EntityId v, std::size_t budget,
                      std::vector<EdgeId>& stack, std::vector<std::uint8_t>& visited,
                      std::vector<std::vector<EdgeId>>& out) {
    if (x == v) {
        out.push_back(stack);
        return;
    }
    if (budget == 0) return;
    auto step = [&](EdgeId e, EntityId y) {
        if (visited[y]) return;
        visited[y] = 1;
        stack.push_back(e);
        undirected_paths(g, y, v, budget - 1, stack, visited, out);
        stack.pop_back();
        visited[y] = 0;
    };
    for (EdgeId e : g.outgoing(x)) step(e, g.edge(e).tail);
    for (EdgeId e : g.incoming(x)) step(e, g.edge(e).head);
}

}  // namespace

TEST_CASE("bidirectional bfs: every path of length <= 2k survives intact") {
    Rng rng(55);
    for (int trial = 0; trial < 30; ++trial) {
        auto rg = ts::random_graph(rng, {.max_nodes = 12, .max_edges = 20});
        const EntityId head = static_cast<EntityId>(rng.index(rg.graph.num_entities()));
        const EntityId cand = static_cast<EntityId>(rng.index(rg.graph.num_entities()));
        const std::size_t k = 1 + rng.index(2);
        std::vector<EntityId> cands{cand};
        auto sub = sample_bidirectional_bfs(rg.graph, head, cands, k, SIZE_MAX, rng);

        std::set<EdgeId> kept(sub.edge_to_parent.begin(), sub.edge_to_parent.end());
        std::vector<std::vector<EdgeId>> paths;
        std::vector<EdgeId> stack;
        std::vector<std::uint8_t> visited(rg.graph.num_entities(), 0);
        visited[head] = 1;
        undirected_paths(rg.graph, head, cand, 2 * k, stack, visited, paths);
        for (const auto& path : paths)
            for (EdgeId e : path) CHECK(kept.count(e) == 1);
    }
}

TEST_CASE("bidirectional bfs: neighbor cap bounds expansion") {
    std::vector<Triplet> star;
    for (EntityId i = 1; i <= 9; ++i) star.push_back({0, 0, i});
    KnowledgeGraph g = build_graph(star, 10, 1);
    Rng rng(9);
    std::vector<EntityId> cands{0};
    auto sub = sample_bidirectional_bfs(g, 0, cands, 1, 3, rng);
    CHECK(sub.graph.num_edges() == 3);  // only m outgoing edges survive
    CHECK(sub.graph.num_entities() == 4);
}
