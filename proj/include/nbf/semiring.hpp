#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "nbf/graph.hpp"
#include "nbf/random.hpp"

namespace nbf {

/// The <plus, times> operator bundle with identities and an edge-weight map.
/// plus must be commutative/associative with identity `zero`; times must be
/// associative with identity `one`, absorb `zero`, and distribute over plus.
/// check_semiring_axioms probes these laws on sampled scalars.
struct PathSemiring {
    std::string name;
    std::function<double(double, double)> plus;
    std::function<double(double, double)> times;
    double zero = 0.0;
    double one = 1.0;
    std::function<double(const KnowledgeGraph&, EdgeId)> edge_weight;
    // sampler of valid scalars for axiom checking (e.g. [0,1] for
    // most-reliable-path probabilities)
    std::function<double(Rng&)> domain_sample;
};

struct ClassicalMethod {
    enum class Kind { Katz, PersonalizedPageRank, GraphDistance, WidestPath, MostReliablePath };
    Kind kind = Kind::Katz;
    double beta = 0.2;   // Katz attenuation, in (0,1)
    double alpha = 0.5;  // PPR walk probability, in (0,1)

    static ClassicalMethod katz(double beta) { return {Kind::Katz, beta, 0.5}; }
    static ClassicalMethod ppr(double alpha) { return {Kind::PersonalizedPageRank, 0.2, alpha}; }
    static ClassicalMethod distance() { return {Kind::GraphDistance, 0.2, 0.5}; }
    static ClassicalMethod widest() { return {Kind::WidestPath, 0.2, 0.5}; }
    static ClassicalMethod reliable() { return {Kind::MostReliablePath, 0.2, 0.5}; }
};

/// Operator bundles for the five classical methods:
///   Katz             <+,   x,   0,    1>    with beta * w_e
///   PPR              <+,   x,   0,    1>    with alpha * w_uv / sum_out(u)
///   graph distance   <min, +,   +inf, 0>    with w_e
///   widest path      <max, min, -inf, +inf> with w_e
///   most reliable    <max, x,   0,    1>    with w_e in [0, 1]
PathSemiring make_classical(const ClassicalMethod& method, const KnowledgeGraph& graph);

struct BellmanFordResult {
    std::vector<double> values;     // h^(T)(source, v) for every v
    std::vector<double> residuals;  // max |h^(t) - h^(t-1)| per iteration, diagnostics
};

/// h^(0)(u,v) = one if u == v else zero, then T synchronous iterations of
/// h^(t)(v) = (plus over incoming unmasked edges of h^(t-1)(x) times w(e))
/// plus h^(0)(v). Entries equal to `zero` short-circuit times so that
/// infinity identities never produce NaN.
BellmanFordResult generalized_bellman_ford(const KnowledgeGraph& graph,
                                           const PathSemiring& semiring, EntityId source,
                                           std::size_t iterations,
                                           const std::vector<std::uint8_t>* edge_mask = nullptr);

/// Plus over all walks (repeated nodes allowed) of length <= max_len from u
/// to v of the times-product of edge weights; the length-0 walk contributes
/// `one` when u == v. Guarded to graphs of <= 16 nodes and max_len <= 8.
double brute_force_path_sum(const KnowledgeGraph& graph, const PathSemiring& semiring, EntityId u,
                            EntityId v, std::size_t max_len);

/// Same enumeration, all targets in one pass.
std::vector<double> brute_force_path_sums(const KnowledgeGraph& graph,
                                          const PathSemiring& semiring, EntityId u,
                                          std::size_t max_len);

struct AxiomCheck {
    std::string law;
    bool passed = true;
    std::size_t failures = 0;
    std::array<double, 3> counterexample{};
};

struct AxiomReport {
    std::vector<AxiomCheck> checks;
    bool all_passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
};

/// Probes the eight semiring laws (plus commutativity/associativity/identity,
/// times associativity/absorption/identity, left/right distributivity) on
/// `samples` random scalar triples from the semiring's domain sampler.
AxiomReport check_semiring_axioms(const PathSemiring& semiring, std::size_t samples, Rng& rng);

}  // namespace nbf
