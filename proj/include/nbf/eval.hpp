#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nbf/graph.hpp"
#include "nbf/model.hpp"

namespace nbf {

enum class TiePolicy { Optimistic, Pessimistic };

/// rank = 1 + |{kept candidates scoring above positive}|, plus the number of
/// kept candidates tied with the positive under the pessimistic policy.
/// keep_mask entries of 0 remove candidates from the competition.
std::size_t filtered_rank(double positive_score, std::span<const double> candidate_scores,
                          std::span<const std::uint8_t> keep_mask, TiePolicy policy);

struct CategoryStat {
    std::size_t head_count = 0, tail_count = 0;
    double head_mrr = 0.0, tail_mrr = 0.0;
};

struct RankingReport {
    std::vector<std::size_t> ranks;  // optimistic-policy ranks, query order
    double mr = 0.0;
    double mrr = 0.0;
    double hits1 = 0.0, hits3 = 0.0, hits10 = 0.0;
    // present when the pessimistic MRR differs from the optimistic by > 1e-3
    std::optional<double> pessimistic_mrr;
    std::map<std::string, CategoryStat> by_category;
};

/// Aggregates (MR, MRR, HITS@{1,3,10}) from ranks; category breakdown is
/// filled by evaluate().
RankingReport ranking_metrics(const std::vector<std::size_t>& ranks);

enum class RelationCategory { OneToOne, OneToMany, ManyToOne, ManyToMany, Unclassified };
std::string to_string(RelationCategory c);

/// Average tails per head and heads per tail per relation; a side is "one"
/// when its average is below 1.5. Relations with no edges are Unclassified.
std::vector<RelationCategory> relation_categories(const KnowledgeGraph& graph);

/// AUROC by rank-sum with ties counted half; AP by step interpolation over
/// the descending score list.
std::pair<double, double> auroc_ap(std::span<const double> positive_scores,
                                   std::span<const double> negative_scores);

enum class Protocol { KgFiltered, InductiveSampled, HomoBalanced };

struct EvalOptions {
    Protocol protocol = Protocol::KgFiltered;
    std::size_t inductive_negatives = 50;
    TiePolicy tie_policy = TiePolicy::Optimistic;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct Splits {
    std::vector<Triplet> train, valid, test;
};

struct ClassificationReport {
    double auroc = 0.0;
    double ap = 0.0;
    std::size_t positives = 0, negatives = 0;
};

struct EvalReport {
    std::optional<RankingReport> ranking;
    std::optional<ClassificationReport> classification;
};

/// Scores `queries` (a subset of the splits, usually test) with the model on
/// `graph` (the train facts). KgFiltered ranks head and tail corruptions
/// against all entities with train/valid/test filtering; InductiveSampled
/// ranks against `inductive_negatives` sampled filtered negatives per
/// direction; HomoBalanced compares positive edges against an equal number
/// of sampled non-edges by AUROC/AP.
EvalReport evaluate(const KnowledgeGraph& graph, const Splits& splits,
                    const std::vector<Triplet>& queries, const ModelParams& params,
                    const ModelConfig& config, const EvalOptions& options);

}  // namespace nbf
