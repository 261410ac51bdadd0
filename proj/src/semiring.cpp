#include "nbf/semiring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nbf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool nearly_equal(double a, double b, double tol) {
    if (a == b) return true;  // covers matching infinities
    if (std::isinf(a) || std::isinf(b)) return false;
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

PathSemiring make_classical(const ClassicalMethod& method, const KnowledgeGraph& graph) {
    PathSemiring s;
    using Kind = ClassicalMethod::Kind;
    switch (method.kind) {
        case Kind::Katz: {
            if (!(method.beta > 0.0 && method.beta < 1.0))
                throw ArgumentError("Katz: beta must lie in (0,1)");
            const double beta = method.beta;
            s.name = "katz";
            s.plus = [](double a, double b) { return a + b; };
            s.times = [](double a, double b) { return a * b; };
            s.zero = 0.0;
            s.one = 1.0;
            s.edge_weight = [beta](const KnowledgeGraph& g, EdgeId e) {
                return beta * g.edge(e).weight;
            };
            s.domain_sample = [](Rng& rng) { return rng.uniform(-1.0, 1.0); };
            break;
        }
        case Kind::PersonalizedPageRank: {
            if (!(method.alpha > 0.0 && method.alpha < 1.0))
                throw ArgumentError("PPR: alpha must lie in (0,1)");
            const double alpha = method.alpha;
            s.name = "ppr";
            s.plus = [](double a, double b) { return a + b; };
            s.times = [](double a, double b) { return a * b; };
            s.zero = 0.0;
            s.one = 1.0;
            s.edge_weight = [alpha](const KnowledgeGraph& g, EdgeId e) {
                const double total = g.out_weight_sum(g.edge(e).head);
                return total > 0.0 ? alpha * g.edge(e).weight / total : 0.0;
            };
            s.domain_sample = [](Rng& rng) { return rng.uniform(-1.0, 1.0); };
            break;
        }
        case Kind::GraphDistance: {
            s.name = "distance";
            s.plus = [](double a, double b) { return std::min(a, b); };
            s.times = [](double a, double b) { return a + b; };
            s.zero = kInf;
            s.one = 0.0;
            s.edge_weight = [](const KnowledgeGraph& g, EdgeId e) { return g.edge(e).weight; };
            s.domain_sample = [](Rng& rng) { return rng.uniform(-10.0, 10.0); };
            break;
        }
        case Kind::WidestPath: {
            s.name = "widest";
            s.plus = [](double a, double b) { return std::max(a, b); };
            s.times = [](double a, double b) { return std::min(a, b); };
            s.zero = -kInf;
            s.one = kInf;
            s.edge_weight = [](const KnowledgeGraph& g, EdgeId e) { return g.edge(e).weight; };
            s.domain_sample = [](Rng& rng) { return rng.uniform(-10.0, 10.0); };
            break;
        }
        case Kind::MostReliablePath: {
            for (EdgeId e = 0; e < graph.num_edges(); ++e)
                if (graph.edge(e).weight < 0.0 || graph.edge(e).weight > 1.0)
                    throw ArgumentError(
                        "most reliable path: edge weights must be probabilities in [0,1]");
            s.name = "reliable";
            s.plus = [](double a, double b) { return std::max(a, b); };
            s.times = [](double a, double b) { return a * b; };
            s.zero = 0.0;
            s.one = 1.0;
            s.edge_weight = [](const KnowledgeGraph& g, EdgeId e) { return g.edge(e).weight; };
            s.domain_sample = [](Rng& rng) { return rng.uniform(); };
            break;
        }
        default:
            throw InternalError("unknown classical method");
    }
    return s;
}

BellmanFordResult generalized_bellman_ford(const KnowledgeGraph& graph,
                                           const PathSemiring& semiring, EntityId source,
                                           std::size_t iterations,
                                           const std::vector<std::uint8_t>* edge_mask) {
    if (source >= graph.num_entities())
        throw ArgumentError("generalized_bellman_ford: source out of range");
    if (edge_mask && edge_mask->size() != graph.num_edges())
        throw ArgumentError("generalized_bellman_ford: mask length != edge count");

    const std::size_t n = graph.num_entities();
    std::vector<double> boundary(n, semiring.zero);
    boundary[source] = semiring.one;

    BellmanFordResult result;
    result.values = boundary;
    result.residuals.reserve(iterations);

    std::vector<double> next(n);
    // cache edge weights once; they do not change across iterations
    std::vector<double> w(graph.num_edges());
    for (EdgeId e = 0; e < graph.num_edges(); ++e) w[e] = semiring.edge_weight(graph, e);

    for (std::size_t t = 0; t < iterations; ++t) {
        const std::vector<double>& prev = result.values;
        for (EntityId v = 0; v < n; ++v) {
            double acc = boundary[v];
            for (EdgeId e : graph.incoming(v)) {
                if (edge_mask && !(*edge_mask)[e]) continue;
                const double hx = prev[graph.edge(e).head];
                if (hx == semiring.zero) continue;  // absorption short-circuit
                acc = semiring.plus(acc, semiring.times(hx, w[e]));
            }
            next[v] = acc;
        }
        double residual = 0.0;
        for (EntityId v = 0; v < n; ++v) {
            if (next[v] == prev[v]) continue;
            residual = std::max(residual, std::abs(next[v] - prev[v]));
        }
        result.residuals.push_back(residual);
        result.values.swap(next);
    }
    return result;
}

std::vector<double> brute_force_path_sums(const KnowledgeGraph& graph,
                                          const PathSemiring& semiring, EntityId u,
                                          std::size_t max_len) {
    if (graph.num_entities() > 16 || max_len > 8)
        throw RefusalError("brute force enumeration is limited to graphs of <= 16 nodes and "
                           "walks of length <= 8");
    if (u >= graph.num_entities()) throw ArgumentError("brute_force_path_sums: u out of range");

    std::vector<double> acc(graph.num_entities(), semiring.zero);
    acc[u] = semiring.plus(acc[u], semiring.one);  // the length-0 walk

    // DFS over walks; products fold left in edge order, matching the solver
    std::vector<std::pair<EntityId, double>> stack;
    stack.emplace_back(u, semiring.one);
    std::vector<std::size_t> depth_stack{0};
    while (!stack.empty()) {
        auto [x, prod] = stack.back();
        stack.pop_back();
        std::size_t depth = depth_stack.back();
        depth_stack.pop_back();
        if (depth == max_len) continue;
        for (EdgeId e : graph.outgoing(x)) {
            const double next = semiring.times(prod, semiring.edge_weight(graph, e));
            const EntityId y = graph.edge(e).tail;
            acc[y] = semiring.plus(acc[y], next);
            stack.emplace_back(y, next);
            depth_stack.push_back(depth + 1);
        }
    }
    return acc;
}

double brute_force_path_sum(const KnowledgeGraph& graph, const PathSemiring& semiring, EntityId u,
                            EntityId v, std::size_t max_len) {
    if (v >= graph.num_entities()) throw ArgumentError("brute_force_path_sum: v out of range");
    return brute_force_path_sums(graph, semiring, u, max_len)[v];
}

AxiomReport check_semiring_axioms(const PathSemiring& semiring, std::size_t samples, Rng& rng) {
    if (!semiring.domain_sample)
        throw ArgumentError("check_semiring_axioms: semiring has no domain sampler");
    constexpr double tol = 1e-9;

    AxiomReport report;
    report.checks.reserve(8);  // references into the vector stay valid below
    auto law = [&](const std::string& name) -> AxiomCheck& {
        report.checks.push_back({name});
        return report.checks.back();
    };
    AxiomCheck& plus_comm = law("plus commutative");
    AxiomCheck& plus_assoc = law("plus associative");
    AxiomCheck& plus_ident = law("plus identity");
    AxiomCheck& times_assoc = law("times associative");
    AxiomCheck& times_absorb = law("times absorption");
    AxiomCheck& times_ident = law("times identity");
    AxiomCheck& dist_left = law("distributive left");
    AxiomCheck& dist_right = law("distributive right");

    auto probe = [&](AxiomCheck& check, bool ok, double a, double b, double c) {
        if (ok) return;
        if (check.passed) check.counterexample = {a, b, c};
        check.passed = false;
        ++check.failures;
    };

    const auto& P = semiring.plus;
    const auto& T = semiring.times;
    for (std::size_t i = 0; i < samples; ++i) {
        const double a = semiring.domain_sample(rng);
        const double b = semiring.domain_sample(rng);
        const double c = semiring.domain_sample(rng);
        probe(plus_comm, nearly_equal(P(a, b), P(b, a), tol), a, b, c);
        probe(plus_assoc, nearly_equal(P(P(a, b), c), P(a, P(b, c)), tol), a, b, c);
        probe(plus_ident, nearly_equal(P(a, semiring.zero), a, tol), a, b, c);
        probe(times_assoc, nearly_equal(T(T(a, b), c), T(a, T(b, c)), tol), a, b, c);
        probe(times_absorb,
              nearly_equal(T(a, semiring.zero), semiring.zero, tol) &&
                  nearly_equal(T(semiring.zero, a), semiring.zero, tol),
              a, b, c);
        probe(times_ident,
              nearly_equal(T(a, semiring.one), a, tol) && nearly_equal(T(semiring.one, a), a, tol),
              a, b, c);
        probe(dist_left, nearly_equal(T(a, P(b, c)), P(T(a, b), T(a, c)), tol), a, b, c);
        probe(dist_right, nearly_equal(T(P(b, c), a), P(T(b, a), T(c, a)), tol), a, b, c);
    }
    return report;
}

}  // namespace nbf
