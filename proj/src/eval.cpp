#include "nbf/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <thread>

namespace nbf {

std::size_t filtered_rank(double positive_score, std::span<const double> candidate_scores,
                          std::span<const std::uint8_t> keep_mask, TiePolicy policy) {
    if (keep_mask.size() != candidate_scores.size())
        throw ArgumentError("filtered_rank: mask length != candidate count");
    if (!std::isfinite(positive_score)) throw NumericError("filtered_rank: non-finite score");
    std::size_t greater = 0, equal = 0;
    for (std::size_t i = 0; i < candidate_scores.size(); ++i) {
        if (!keep_mask[i]) continue;
        const double s = candidate_scores[i];
        if (!std::isfinite(s)) throw NumericError("filtered_rank: non-finite candidate score");
        if (s > positive_score) ++greater;
        else if (s == positive_score) ++equal;
    }
    return 1 + greater + (policy == TiePolicy::Pessimistic ? equal : 0);
}

RankingReport ranking_metrics(const std::vector<std::size_t>& ranks) {
    if (ranks.empty()) throw ArgumentError("ranking_metrics: empty rank list");
    RankingReport r;
    r.ranks = ranks;
    double mr = 0.0, mrr = 0.0, h1 = 0.0, h3 = 0.0, h10 = 0.0;
    for (std::size_t rank : ranks) {
        if (rank < 1) throw ArgumentError("ranking_metrics: ranks must be >= 1");
        mr += static_cast<double>(rank);
        mrr += 1.0 / static_cast<double>(rank);
        h1 += rank <= 1;
        h3 += rank <= 3;
        h10 += rank <= 10;
    }
    const double n = static_cast<double>(ranks.size());
    r.mr = mr / n;
    r.mrr = mrr / n;
    r.hits1 = h1 / n;
    r.hits3 = h3 / n;
    r.hits10 = h10 / n;
    return r;
}

std::string to_string(RelationCategory c) {
    switch (c) {
        case RelationCategory::OneToOne: return "1-1";
        case RelationCategory::OneToMany: return "1-N";
        case RelationCategory::ManyToOne: return "N-1";
        case RelationCategory::ManyToMany: return "N-N";
        case RelationCategory::Unclassified: return "unclassified";
    }
    throw InternalError("bad relation category");
}

std::vector<RelationCategory> relation_categories(const KnowledgeGraph& graph) {
    const std::size_t num_rel = graph.num_relations();
    std::vector<std::size_t> edge_count(num_rel, 0);
    std::vector<std::unordered_set<EntityId>> heads(num_rel), tails(num_rel);
    for (const Edge& e : graph.edges()) {
        ++edge_count[e.relation];
        heads[e.relation].insert(e.head);
        tails[e.relation].insert(e.tail);
    }
    std::vector<RelationCategory> out(num_rel, RelationCategory::Unclassified);
    for (std::size_t r = 0; r < num_rel; ++r) {
        if (edge_count[r] == 0) continue;
        const double tails_per_head =
            static_cast<double>(edge_count[r]) / static_cast<double>(heads[r].size());
        const double heads_per_tail =
            static_cast<double>(edge_count[r]) / static_cast<double>(tails[r].size());
        const bool one_head = heads_per_tail < 1.5;
        const bool one_tail = tails_per_head < 1.5;
        out[r] = one_head ? (one_tail ? RelationCategory::OneToOne : RelationCategory::OneToMany)
                          : (one_tail ? RelationCategory::ManyToOne : RelationCategory::ManyToMany);
    }
    return out;
}

std::pair<double, double> auroc_ap(std::span<const double> positive_scores,
                                   std::span<const double> negative_scores) {
    if (positive_scores.empty() || negative_scores.empty())
        throw ArgumentError("auroc_ap: both score lists must be nonempty");

    struct Entry {
        double score;
        bool positive;
    };
    std::vector<Entry> all;
    all.reserve(positive_scores.size() + negative_scores.size());
    for (double s : positive_scores) {
        if (!std::isfinite(s)) throw NumericError("auroc_ap: non-finite score");
        all.push_back({s, true});
    }
    for (double s : negative_scores) {
        if (!std::isfinite(s)) throw NumericError("auroc_ap: non-finite score");
        all.push_back({s, false});
    }

    // AUROC via rank sum, average ranks for ties
    std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) {
        return a.score < b.score;
    });
    const double np = static_cast<double>(positive_scores.size());
    const double nn = static_cast<double>(negative_scores.size());
    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (all[k].positive) rank_sum += avg_rank;
        i = j;
    }
    const double auroc = (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);

    // AP: step interpolation over thresholds of the descending score list
    double ap = 0.0;
    double tp = 0.0, fp = 0.0, prev_recall = 0.0;
    std::size_t k = all.size();
    while (k > 0) {  // descending scores, tie groups taken together
        std::size_t j = k;
        while (j > 0 && all[j - 1].score == all[k - 1].score) --j;
        for (std::size_t t = j; t < k; ++t) (all[t].positive ? tp : fp) += 1.0;
        const double recall = tp / np;
        const double precision = tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        k = j;
    }
    return {auroc, ap};
}

namespace {

// run fn(i) for i in [0, n) on `workers` threads; outputs are indexed, so
// the result is identical regardless of worker count
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

TripletSet collect_known(const Splits& splits) {
    TripletSet known;
    known.reserve(splits.train.size() + splits.valid.size() + splits.test.size());
    for (const auto* part : {&splits.train, &splits.valid, &splits.test})
        for (const Triplet& t : *part) known.insert(t);
    return known;
}

struct DirectedQuery {
    EntityId source;
    RelationId query_rel;  // relation id in the augmented graph
    EntityId answer;
    Triplet original;
    bool head_side;  // true when this is the head-prediction direction
};

struct RankPair {
    std::size_t optimistic;
    std::size_t pessimistic;
};

RankPair rank_both(double positive_score, std::span<const double> scores,
                   std::span<const std::uint8_t> keep) {
    return {filtered_rank(positive_score, scores, keep, TiePolicy::Optimistic),
            filtered_rank(positive_score, scores, keep, TiePolicy::Pessimistic)};
}

}  // namespace

EvalReport evaluate(const KnowledgeGraph& graph, const Splits& splits,
                    const std::vector<Triplet>& queries, const ModelParams& params,
                    const ModelConfig& config, const EvalOptions& options) {
    if (options.protocol == Protocol::InductiveSampled)
        require(options.inductive_negatives >= 1,
                "evaluate: inductive protocol needs at least one sampled negative");
    if (queries.empty()) throw ArgumentError("evaluate: no queries");
    if (options.protocol == Protocol::HomoBalanced) {
        if (!config.symmetrize)
            throw ArgumentError("evaluate: homogeneous protocol requires a symmetrize model");
    } else if (!graph.inverse_augmented()) {
        throw ArgumentError("evaluate: ranking protocols need an inverse-augmented graph");
    }

    const TripletSet known = collect_known(splits);
    const std::size_t num_entities = graph.num_entities();

    if (options.protocol == Protocol::HomoBalanced) {
        // balanced positive / sampled non-edge comparison on undirected graphs
        Rng rng(options.seed);
        std::vector<std::pair<EntityId, EntityId>> negatives;
        negatives.reserve(queries.size());
        auto is_edge = [&](EntityId a, EntityId b) {
            return known.count({a, 0, b}) || known.count({b, 0, a});
        };
        while (negatives.size() < queries.size()) {
            EntityId a = static_cast<EntityId>(rng.index(num_entities));
            EntityId b = static_cast<EntityId>(rng.index(num_entities));
            if (a == b || is_edge(a, b)) continue;
            negatives.emplace_back(a, b);
        }

        // one forward per distinct source node
        std::vector<EntityId> sources;
        sources.reserve(queries.size() * 2 + negatives.size());
        for (const Triplet& t : queries) {
            sources.push_back(t.head);
            sources.push_back(t.tail);
        }
        for (auto& [a, b] : negatives) {
            sources.push_back(a);
            sources.push_back(b);
        }
        std::sort(sources.begin(), sources.end());
        sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
        std::unordered_map<EntityId, std::size_t> source_slot;
        for (std::size_t i = 0; i < sources.size(); ++i) source_slot.emplace(sources[i], i);

        std::vector<Tensor> fields(sources.size());
        parallel_for(sources.size(), options.workers, [&](std::size_t i) {
            NoGradGuard no_grad;
            fields[i] = nbfnet_forward(graph, sources[i], 0, config, params).values;
        });

        auto sym_score = [&](EntityId a, EntityId b) {
            NoGradGuard no_grad;
            Tensor ha = slice_rows(fields[source_slot.at(a)], b, b + 1);
            Tensor hb = slice_rows(fields[source_slot.at(b)], a, a + 1);
            return score_symmetric(params, ha, hb).item();
        };
        std::vector<double> pos_scores(queries.size()), neg_scores(negatives.size());
        parallel_for(queries.size(), options.workers, [&](std::size_t i) {
            pos_scores[i] = sym_score(queries[i].head, queries[i].tail);
        });
        parallel_for(negatives.size(), options.workers, [&](std::size_t i) {
            neg_scores[i] = sym_score(negatives[i].first, negatives[i].second);
        });

        auto [auroc, ap] = auroc_ap(pos_scores, neg_scores);
        EvalReport report;
        report.classification = ClassificationReport{auroc, ap, queries.size(), negatives.size()};
        return report;
    }

    // ranking protocols: each query is scored in both directions
    std::vector<DirectedQuery> directed;
    directed.reserve(queries.size() * 2);
    for (const Triplet& t : queries) {
        directed.push_back({t.head, t.relation, t.tail, t, false});
        directed.push_back({t.tail, graph.inverse_relation(t.relation), t.head, t, true});
    }

    // group by (source, query relation) to share forward passes
    std::map<std::pair<EntityId, RelationId>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < directed.size(); ++i)
        groups[{directed[i].source, directed[i].query_rel}].push_back(i);
    std::vector<std::pair<std::pair<EntityId, RelationId>, std::vector<std::size_t>>> group_list(
        groups.begin(), groups.end());

    // pre-draw inductive candidate sets for determinism under any worker count
    std::vector<std::vector<EntityId>> sampled_candidates(directed.size());
    if (options.protocol == Protocol::InductiveSampled) {
        Rng rng(options.seed);
        for (std::size_t i = 0; i < directed.size(); ++i) {
            const DirectedQuery& dq = directed[i];
            std::vector<EntityId> pool;
            pool.reserve(num_entities);
            for (EntityId e = 0; e < num_entities; ++e) {
                if (e == dq.answer) continue;
                const bool known_fact = dq.head_side
                                            ? known.count({e, dq.original.relation,
                                                           dq.original.tail}) > 0
                                            : known.count({dq.original.head,
                                                           dq.original.relation, e}) > 0;
                if (!known_fact) pool.push_back(e);
            }
            if (pool.size() > options.inductive_negatives) {
                auto chosen = rng.sample_without_replacement(pool.size(),
                                                             options.inductive_negatives);
                std::sort(chosen.begin(), chosen.end());
                std::vector<EntityId> picked;
                picked.reserve(chosen.size());
                for (auto c : chosen) picked.push_back(pool[c]);
                pool = std::move(picked);
            }
            sampled_candidates[i] = std::move(pool);
        }
    }

    std::vector<RankPair> ranks(directed.size());
    parallel_for(group_list.size(), options.workers, [&](std::size_t gi) {
        const auto& [key, members] = group_list[gi];
        NoGradGuard no_grad;
        PairField field = nbfnet_forward(graph, key.first, key.second, config, params);
        const std::vector<double> scores = score_field(params, field.values).values();
        for (std::size_t qi : members) {
            const DirectedQuery& dq = directed[qi];
            const double positive = scores[dq.answer];
            if (options.protocol == Protocol::KgFiltered) {
                std::vector<std::uint8_t> keep(num_entities, 1);
                for (EntityId e = 0; e < num_entities; ++e) {
                    const bool known_fact =
                        dq.head_side ? known.count({e, dq.original.relation, dq.original.tail}) > 0
                                     : known.count({dq.original.head, dq.original.relation, e}) > 0;
                    if (known_fact) keep[e] = 0;  // the positive itself is filtered too
                }
                ranks[qi] = rank_both(positive, scores, keep);
            } else {
                std::vector<double> cand;
                cand.reserve(sampled_candidates[qi].size());
                for (EntityId e : sampled_candidates[qi]) cand.push_back(scores[e]);
                std::vector<std::uint8_t> keep(cand.size(), 1);
                ranks[qi] = rank_both(positive, cand, keep);
            }
        }
    });

    std::vector<std::size_t> primary;
    primary.reserve(directed.size());
    double opt_mrr = 0.0, pess_mrr = 0.0;
    for (const RankPair& rp : ranks) {
        primary.push_back(options.tie_policy == TiePolicy::Pessimistic ? rp.pessimistic
                                                                       : rp.optimistic);
        opt_mrr += 1.0 / static_cast<double>(rp.optimistic);
        pess_mrr += 1.0 / static_cast<double>(rp.pessimistic);
    }
    opt_mrr /= static_cast<double>(ranks.size());
    pess_mrr /= static_cast<double>(ranks.size());

    RankingReport report = ranking_metrics(primary);
    if (std::abs(opt_mrr - pess_mrr) > 1e-3) report.pessimistic_mrr = pess_mrr;

    const auto categories = relation_categories(graph);
    for (std::size_t i = 0; i < directed.size(); ++i) {
        const DirectedQuery& dq = directed[i];
        const RelationCategory cat = dq.original.relation < categories.size()
                                         ? categories[dq.original.relation]
                                         : RelationCategory::Unclassified;
        CategoryStat& stat = report.by_category[to_string(cat)];
        const double rr = 1.0 / static_cast<double>(primary[i]);
        if (dq.head_side) {
            ++stat.head_count;
            stat.head_mrr += rr;
        } else {
            ++stat.tail_count;
            stat.tail_mrr += rr;
        }
    }
    for (auto& [name, stat] : report.by_category) {
        if (stat.head_count) stat.head_mrr /= static_cast<double>(stat.head_count);
        if (stat.tail_count) stat.tail_mrr /= static_cast<double>(stat.tail_count);
    }

    EvalReport out;
    out.ranking = std::move(report);
    return out;
}

}  // namespace nbf
