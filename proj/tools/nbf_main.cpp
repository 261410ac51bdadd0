#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nbf/checkpoint.hpp"
#include "nbf/eval.hpp"
#include "nbf/interpret.hpp"
#include "nbf/semiring.hpp"
#include "nbf/train.hpp"

namespace {

using namespace nbf;

std::uint64_t resolve_seed(const CLI::Option* seed_opt, std::uint64_t seed_flag) {
    if (seed_opt->count() > 0) return seed_flag;
    if (const char* env = std::getenv("NBF_SEED")) return std::strtoull(env, nullptr, 10);
    return seed_flag;
}

EntityId resolve_entity(const Vocab& vocab, const std::string& s) {
    if (auto id = vocab.entities.find(s)) return *id;
    try {
        std::size_t used = 0;
        unsigned long v = std::stoul(s, &used);
        if (used == s.size() && v < vocab.entities.size()) return static_cast<EntityId>(v);
    } catch (const std::exception&) {
    }
    throw LookupError("unknown entity \"" + s + "\"");
}

RelationId resolve_relation(const Vocab& vocab, const std::string& s) {
    if (auto id = vocab.relations.find(s)) return *id;
    try {
        std::size_t used = 0;
        unsigned long v = std::stoul(s, &used);
        if (used == s.size() && v < vocab.relations.size()) return static_cast<RelationId>(v);
    } catch (const std::exception&) {
    }
    throw LookupError("unknown relation \"" + s + "\"");
}

ClassicalMethod method_from_string(const std::string& name, double beta, double alpha) {
    if (name == "katz") return ClassicalMethod::katz(beta);
    if (name == "ppr") return ClassicalMethod::ppr(alpha);
    if (name == "distance") return ClassicalMethod::distance();
    if (name == "widest") return ClassicalMethod::widest();
    if (name == "reliable") return ClassicalMethod::reliable();
    throw ArgumentError("unknown method \"" + name + "\" (katz|ppr|distance|widest|reliable)");
}

struct LoadedGraph {
    KnowledgeGraph graph;
    Vocab vocab;
    TripletData data;
};

LoadedGraph load_graph_file(const std::string& path, bool undirected, bool self_loops,
                            bool augment_inverse) {
    LoadedGraph out;
    out.data = load_triplets(path, out.vocab);
    GraphBuildOptions opts;
    opts.undirected = undirected;
    opts.add_self_loops = self_loops;
    opts.augment_inverse = augment_inverse;
    out.graph = build_graph(out.data.triplets, out.vocab.entities.size(),
                            out.vocab.relations.size(), opts, out.data.weights);
    return out;
}

int cmd_solve(const std::string& graph_path, const std::string& method_name, double beta,
              double alpha, const std::string& source_name, std::size_t iterations, bool oracle,
              bool undirected) {
    LoadedGraph lg = load_graph_file(graph_path, undirected, false, false);
    const EntityId source = resolve_entity(lg.vocab, source_name);
    ClassicalMethod method = method_from_string(method_name, beta, alpha);
    PathSemiring semiring = make_classical(method, lg.graph);
    BellmanFordResult result =
        generalized_bellman_ford(lg.graph, semiring, source, iterations);
    std::cout.precision(12);
    for (EntityId v = 0; v < lg.graph.num_entities(); ++v) {
        if (result.values[v] == semiring.zero) continue;  // unreachable
        std::cout << lg.vocab.entities.name(v) << '\t' << result.values[v] << '\n';
    }
    if (!result.residuals.empty())
        std::cout << "# residual\t" << result.residuals.back() << '\n';
    if (oracle) {
        const std::size_t cap = std::min<std::size_t>(iterations, 8);
        if (iterations > 8)
            throw RefusalError("oracle: brute force supports at most 8 iterations, asked for " +
                               std::to_string(iterations));
        const auto reference = brute_force_path_sums(lg.graph, semiring, source, cap);
        double deviation = 0.0;
        for (EntityId v = 0; v < lg.graph.num_entities(); ++v) {
            if (result.values[v] == reference[v]) continue;
            deviation = std::max(deviation, std::abs(result.values[v] - reference[v]));
        }
        std::cout << "# oracle_max_deviation\t" << deviation << '\n';
    }
    return 0;
}

Splits load_splits(const std::string& train_path, const std::string& valid_path,
                   const std::string& test_path, Vocab& vocab, TripletData& train_data) {
    Splits splits;
    train_data = load_triplets(train_path, vocab);
    splits.train = train_data.triplets;
    // evaluation files must not invent new entities: freeze the vocab
    vocab.frozen = true;
    if (!valid_path.empty()) splits.valid = load_triplets(valid_path, vocab).triplets;
    if (!test_path.empty()) splits.test = load_triplets(test_path, vocab).triplets;
    return splits;
}

KnowledgeGraph build_train_graph(const Splits& splits, const TripletData& train_data,
                                 const Vocab& vocab, bool homo) {
    GraphBuildOptions opts;
    if (homo) {
        opts.undirected = true;
        opts.add_self_loops = true;
    } else {
        opts.augment_inverse = true;
    }
    return build_graph(splits.train, vocab.entities.size(), vocab.relations.size(), opts,
                       train_data.weights);
}

int cmd_train(const std::string& train_path, const std::string& valid_path,
              const std::string& test_path, const std::string& config_path, bool homo,
              ModelConfig model_config, TrainConfig train_config,
              const std::vector<std::string>& cli_overrides) {
    if (!config_path.empty()) {
        auto entries = parse_config_file(config_path);
        apply_config_entries(entries, model_config, train_config);
        // flags given on the command line win over the file
        apply_config_entries(
            [&] {
                std::vector<std::pair<std::string, std::string>> v;
                for (const auto& kv : cli_overrides) {
                    auto eq = kv.find('=');
                    v.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
                }
                return v;
            }(),
            model_config, train_config);
    }
    if (homo) {
        model_config.symmetrize = true;
        model_config.edge_rep = EdgeRepMode::PerRelationBias;
        train_config.selection = SelectionMetric::AUROC;
    }

    Vocab vocab;
    TripletData train_data;
    Splits splits = load_splits(train_path, valid_path, test_path, vocab, train_data);
    KnowledgeGraph graph = build_train_graph(splits, train_data, vocab, homo);

    TrainResult result = train(graph, splits, model_config, train_config, &std::cout);
    std::cerr << "best epoch " << result.best_epoch << " with validation metric "
              << result.best_metric << '\n';
    if (!train_config.checkpoint_path.empty())
        std::cerr << "checkpoint written to " << train_config.checkpoint_path << '\n';
    return 0;
}

void print_ranking_tsv(const RankingReport& r, std::ostream& out) {
    out << "queries\t" << r.ranks.size() << '\n';
    out << "MR\t" << r.mr << '\n';
    out << "MRR\t" << r.mrr << '\n';
    out << "HITS@1\t" << r.hits1 << '\n';
    out << "HITS@3\t" << r.hits3 << '\n';
    out << "HITS@10\t" << r.hits10 << '\n';
    if (r.pessimistic_mrr) out << "MRR_pessimistic\t" << *r.pessimistic_mrr << '\n';
    for (const auto& [cat, stat] : r.by_category)
        out << "category\t" << cat << "\thead_mrr\t" << stat.head_mrr << "\ttail_mrr\t"
            << stat.tail_mrr << '\n';
}

void print_ranking_table(const RankingReport& r, std::ostream& out) {
    out << "metric        value\n";
    out << "------        -----\n";
    auto row = [&](const std::string& name, double v) {
        out << name;
        for (std::size_t i = name.size(); i < 14; ++i) out << ' ';
        out << v << '\n';
    };
    row("queries", static_cast<double>(r.ranks.size()));
    row("MR", r.mr);
    row("MRR", r.mrr);
    row("HITS@1", r.hits1);
    row("HITS@3", r.hits3);
    row("HITS@10", r.hits10);
    if (r.pessimistic_mrr) row("MRR(pess.)", *r.pessimistic_mrr);
    if (!r.by_category.empty()) {
        out << "\ncategory      head MRR   tail MRR\n";
        for (const auto& [cat, stat] : r.by_category) {
            out << cat;
            for (std::size_t i = cat.size(); i < 14; ++i) out << ' ';
            out << stat.head_mrr << "   " << stat.tail_mrr << '\n';
        }
    }
}

int cmd_eval(const std::string& checkpoint_path, const std::string& train_path,
             const std::string& valid_path, const std::string& test_path,
             const std::string& protocol_name, std::size_t inductive_negatives,
             std::uint64_t seed, std::size_t workers, const std::string& tsv_path) {
    auto [params, model_config] = load_checkpoint(checkpoint_path);

    EvalOptions options;
    options.seed = seed;
    options.workers = workers;
    options.inductive_negatives = inductive_negatives;
    bool homo = false;
    if (protocol_name == "kg") options.protocol = Protocol::KgFiltered;
    else if (protocol_name == "inductive") options.protocol = Protocol::InductiveSampled;
    else if (protocol_name == "homo") {
        options.protocol = Protocol::HomoBalanced;
        homo = true;
    } else {
        throw ArgumentError("unknown protocol \"" + protocol_name + "\" (kg|inductive|homo)");
    }
    if (homo != model_config.symmetrize)
        throw ArgumentError("protocol/model modality mismatch: checkpoint was trained with "
                            "symmetrize = " +
                            std::string(model_config.symmetrize ? "1" : "0"));

    Vocab vocab;
    TripletData train_data;
    Splits splits = load_splits(train_path, valid_path, test_path, vocab, train_data);
    KnowledgeGraph graph = build_train_graph(splits, train_data, vocab, homo);
    const std::vector<Triplet>& queries = splits.test.empty() ? splits.valid : splits.test;

    EvalReport report = evaluate(graph, splits, queries, params, model_config, options);

    std::ostringstream tsv;
    if (report.ranking) {
        print_ranking_tsv(*report.ranking, tsv);
        print_ranking_table(*report.ranking, std::cout);
    }
    if (report.classification) {
        tsv << "AUROC\t" << report.classification->auroc << '\n';
        tsv << "AP\t" << report.classification->ap << '\n';
        tsv << "positives\t" << report.classification->positives << '\n';
        tsv << "negatives\t" << report.classification->negatives << '\n';
        std::cout << "metric   value\n------   -----\n";
        std::cout << "AUROC    " << report.classification->auroc << '\n';
        std::cout << "AP       " << report.classification->ap << '\n';
        std::cout << "pairs    " << report.classification->positives << " positive / "
                  << report.classification->negatives << " negative\n";
    }
    if (!tsv_path.empty()) {
        std::ofstream out(tsv_path);
        if (!out) throw IoError("cannot write report " + tsv_path);
        out << tsv.str();
    }
    return 0;
}

int cmd_interpret(const std::string& checkpoint_path, const std::string& graph_path, bool homo,
                  const std::string& head, const std::string& relation, const std::string& tail,
                  std::size_t k, std::size_t beam, std::size_t max_len) {
    auto [params, model_config] = load_checkpoint(checkpoint_path);
    LoadedGraph lg = load_graph_file(graph_path, homo, homo, !homo);
    Triplet t{resolve_entity(lg.vocab, head), resolve_relation(lg.vocab, relation),
              resolve_entity(lg.vocab, tail)};
    ImportanceGraph importance = edge_importance(lg.graph, params, model_config, t);
    const std::size_t length_cap = max_len ? max_len : model_config.layers;
    auto paths = top_k_paths(importance, t.head, t.tail, k, length_cap,
                             beam ? beam : std::max<std::size_t>(4 * k, 32));
    std::cout.precision(6);
    for (const auto& p : paths)
        std::cout << p.weight << '\t' << format_path(lg.graph, p, &lg.vocab) << '\n';
    return 0;
}

int cmd_sample(const std::string& graph_path, const std::string& head,
               const std::vector<std::string>& candidates, std::size_t k, std::size_t m,
               std::uint64_t seed, const std::string& output) {
    LoadedGraph lg = load_graph_file(graph_path, false, false, false);
    std::vector<EntityId> cand_ids;
    cand_ids.reserve(candidates.size());
    for (const auto& c : candidates) cand_ids.push_back(resolve_entity(lg.vocab, c));
    Rng rng(seed);
    Subgraph sub = sample_bidirectional_bfs(lg.graph, resolve_entity(lg.vocab, head), cand_ids, k,
                                            m ? m : SIZE_MAX, rng);
    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!output.empty()) {
        file.open(output);
        if (!file) throw IoError("cannot write " + output);
        out = &file;
    }
    for (const Edge& e : sub.graph.edges())
        (*out) << lg.vocab.entities.name(sub.to_parent[e.head]) << '\t'
               << lg.vocab.relations.name(e.relation) << '\t'
               << lg.vocab.entities.name(sub.to_parent[e.tail]) << '\n';
    return 0;
}

int cmd_axioms(const std::string& method_name, std::size_t samples, double beta, double alpha,
               std::uint64_t seed) {
    // a unit-weight placeholder graph: axiom checks probe scalars, not edges
    KnowledgeGraph graph = build_graph({{0, 0, 1}}, 2, 1);
    std::vector<std::string> names;
    if (method_name == "all") names = {"katz", "ppr", "distance", "widest", "reliable"};
    else names = {method_name};

    bool all_ok = true;
    Rng rng(seed);
    for (const auto& name : names) {
        PathSemiring s = make_classical(method_from_string(name, beta, alpha), graph);
        AxiomReport report = check_semiring_axioms(s, samples, rng);
        for (const auto& check : report.checks) {
            std::cout << name << '\t' << check.law << '\t' << (check.passed ? "pass" : "FAIL");
            if (!check.passed)
                std::cout << "\tfailures\t" << check.failures << "\tcounterexample\t"
                          << check.counterexample[0] << ',' << check.counterexample[1] << ','
                          << check.counterexample[2];
            std::cout << '\n';
        }
        all_ok = all_ok && report.all_passed();
    }
    return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"path-formulation link prediction: semiring solvers and the neural "
                 "Bellman-Ford model"};
    app.require_subcommand(1);

    try {
        // ---- solve ----
        auto* solve = app.add_subcommand("solve", "run a classical method over a graph");
        std::string solve_graph, solve_method = "katz", solve_source;
        double solve_beta = 0.2, solve_alpha = 0.5;
        std::size_t solve_iters = 10;
        bool solve_oracle = false, solve_undirected = false;
        solve->add_option("--graph", solve_graph, "triplet file")->required();
        solve->add_option("--method", solve_method, "katz|ppr|distance|widest|reliable");
        solve->add_option("--source", solve_source, "source entity (name or id)")->required();
        solve->add_option("--beta", solve_beta, "Katz attenuation");
        solve->add_option("--alpha", solve_alpha, "PPR walk probability");
        solve->add_option("--iterations", solve_iters, "Bellman-Ford iterations");
        solve->add_flag("--oracle", solve_oracle, "cross-check against brute-force enumeration");
        solve->add_flag("--undirected", solve_undirected, "store edges in both directions");

        // ---- train ----
        auto* tr = app.add_subcommand("train", "train the neural Bellman-Ford model");
        std::string tr_train, tr_valid, tr_test, tr_config, tr_checkpoint;
        bool tr_homo = false;
        ModelConfig model_config;
        TrainConfig train_config;
        std::string tr_message = "distmult", tr_aggregate = "sum", tr_edge_rep = "linear-over-query";
        tr->add_option("--train", tr_train, "training triplet file")->required();
        tr->add_option("--valid", tr_valid, "validation triplet file");
        tr->add_option("--test", tr_test, "test triplet file");
        tr->add_option("--config", tr_config, "key = value config file");
        tr->add_flag("--homo", tr_homo, "homogeneous mode: undirected, symmetric scoring");
        tr->add_option("--layers", model_config.layers, "Bellman-Ford iterations (T)");
        tr->add_option("--hidden-dim", model_config.hidden_dim, "representation width");
        tr->add_option("--message", tr_message, "transe|distmult|rotate");
        tr->add_option("--aggregate", tr_aggregate, "sum|mean|max");
        tr->add_option("--edge-rep", tr_edge_rep, "linear-over-query|per-relation-bias");
        tr->add_option("--negatives", model_config.num_negatives, "negatives per positive");
        tr->add_option("--adv-temperature", model_config.adversarial_temperature,
                       "self-adversarial temperature (0 = uniform)");
        tr->add_option("--epochs", train_config.epochs, "training epochs");
        tr->add_option("--batch-size", train_config.batch_size, "positives per step");
        tr->add_option("--max-steps", train_config.max_steps, "hard step cap (0 = none)");
        tr->add_option("--learning-rate", train_config.learning_rate, "Adam learning rate");
        auto* tr_seed_opt = tr->add_option("--seed", train_config.seed, "rng seed");
        tr->add_option("--checkpoint", tr_checkpoint, "checkpoint output path");

        // ---- eval ----
        auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
        std::string ev_checkpoint, ev_train, ev_valid, ev_test, ev_protocol = "kg", ev_tsv;
        std::size_t ev_negatives = 50, ev_workers = 1;
        std::uint64_t ev_seed = 0;
        ev->add_option("--checkpoint", ev_checkpoint, "model checkpoint")->required();
        ev->add_option("--train", ev_train, "training triplet file (graph facts)")->required();
        ev->add_option("--valid", ev_valid, "validation triplet file");
        ev->add_option("--test", ev_test, "test triplet file");
        ev->add_option("--protocol", ev_protocol, "kg|inductive|homo");
        ev->add_option("--negatives", ev_negatives, "sampled negatives (inductive protocol)");
        auto* ev_seed_opt = ev->add_option("--seed", ev_seed, "rng seed");
        ev->add_option("--workers", ev_workers, "parallel (source, relation) groups");
        ev->add_option("--tsv", ev_tsv, "also write the report to this TSV file");

        // ---- interpret ----
        auto* in = app.add_subcommand("interpret", "top-k path interpretations for a triplet");
        std::string in_checkpoint, in_graph, in_head, in_relation, in_tail;
        std::size_t in_k = 2, in_beam = 0, in_maxlen = 0;
        bool in_homo = false;
        in->add_option("--checkpoint", in_checkpoint, "model checkpoint")->required();
        in->add_option("--graph", in_graph, "triplet file (graph facts)")->required();
        in->add_option("--head", in_head, "head entity")->required();
        in->add_option("--relation", in_relation, "query relation")->required();
        in->add_option("--tail", in_tail, "tail entity")->required();
        in->add_option("--k", in_k, "number of paths");
        in->add_option("--beam", in_beam, "beam width (default 4k)");
        in->add_option("--max-len", in_maxlen, "path length cap (default: model layers)");
        in->add_flag("--homo", in_homo, "homogeneous graph facts");

        // ---- sample ----
        auto* sa = app.add_subcommand("sample", "bidirectional BFS subgraph sampling");
        std::string sa_graph, sa_head, sa_output;
        std::vector<std::string> sa_candidates;
        std::size_t sa_k = 2, sa_m = 0;
        std::uint64_t sa_seed = 0;
        sa->add_option("--graph", sa_graph, "triplet file")->required();
        sa->add_option("--head", sa_head, "head entity")->required();
        sa->add_option("--candidates", sa_candidates, "candidate entities")
            ->required()
            ->delimiter(',');
        sa->add_option("--k", sa_k, "hop radius");
        sa->add_option("--m", sa_m, "per-direction neighbor cap (0 = unlimited)");
        auto* sa_seed_opt = sa->add_option("--seed", sa_seed, "rng seed");
        sa->add_option("--output", sa_output, "output triplet file (default stdout)");

        // ---- axioms ----
        auto* ax = app.add_subcommand("axioms", "check semiring laws on sampled scalars");
        std::string ax_method = "all";
        std::size_t ax_samples = 10000;
        double ax_beta = 0.2, ax_alpha = 0.5;
        std::uint64_t ax_seed = 0;
        ax->add_option("--method", ax_method, "all|katz|ppr|distance|widest|reliable");
        ax->add_option("--samples", ax_samples, "random scalar triples per law");
        ax->add_option("--beta", ax_beta, "Katz attenuation");
        ax->add_option("--alpha", ax_alpha, "PPR walk probability");
        auto* ax_seed_opt = ax->add_option("--seed", ax_seed, "rng seed");

        CLI11_PARSE(app, argc, argv);

        if (solve->parsed())
            return cmd_solve(solve_graph, solve_method, solve_beta, solve_alpha, solve_source,
                             solve_iters, solve_oracle, solve_undirected);
        if (tr->parsed()) {
            model_config.message = message_kind_from_string(tr_message);
            model_config.aggregate = aggregate_kind_from_string(tr_aggregate);
            model_config.edge_rep = edge_rep_mode_from_string(tr_edge_rep);
            train_config.seed = resolve_seed(tr_seed_opt, train_config.seed);
            train_config.checkpoint_path = tr_checkpoint;
            // flags typed on the command line take precedence over the file
            std::vector<std::string> overrides;
            for (const auto& [flag, key] :
                 std::vector<std::pair<std::string, std::string>>{
                     {"--layers", "layers"},
                     {"--hidden-dim", "hidden_dim"},
                     {"--message", "message"},
                     {"--aggregate", "aggregate"},
                     {"--edge-rep", "edge_rep"},
                     {"--negatives", "num_negatives"},
                     {"--adv-temperature", "adversarial_temperature"},
                     {"--epochs", "epochs"},
                     {"--batch-size", "batch_size"},
                     {"--max-steps", "max_steps"},
                     {"--learning-rate", "learning_rate"},
                     {"--seed", "seed"},
                     {"--checkpoint", "checkpoint"}}) {
                auto* opt = tr->get_option(flag);
                if (opt->count() > 0) overrides.push_back(key + "=" + opt->as<std::string>());
            }
            return cmd_train(tr_train, tr_valid, tr_test, tr_config, tr_homo, model_config,
                             train_config, overrides);
        }
        if (ev->parsed())
            return cmd_eval(ev_checkpoint, ev_train, ev_valid, ev_test, ev_protocol, ev_negatives,
                            resolve_seed(ev_seed_opt, ev_seed), ev_workers, ev_tsv);
        if (in->parsed())
            return cmd_interpret(in_checkpoint, in_graph, in_homo, in_head, in_relation, in_tail,
                                 in_k, in_beam, in_maxlen);
        if (sa->parsed())
            return cmd_sample(sa_graph, sa_head, sa_candidates, sa_k, sa_m,
                              resolve_seed(sa_seed_opt, sa_seed), sa_output);
        if (ax->parsed())
            return cmd_axioms(ax_method, ax_samples, ax_beta, ax_alpha,
                              resolve_seed(ax_seed_opt, ax_seed));
        return 1;
    } catch (const nbf::Error& e) {
        std::cerr << "error:" << e.category() << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error:internal: " << e.what() << '\n';
        return 1;
    }
}
