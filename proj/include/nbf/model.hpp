#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nbf/graph.hpp"
#include "nbf/tensor.hpp"

namespace nbf {

enum class MessageKind { TransE, DistMult, RotatE };
enum class AggregateKind { Sum, Mean, Max };
enum class EdgeRepMode { LinearOverQuery, PerRelationBias };

std::string to_string(MessageKind k);
std::string to_string(AggregateKind k);
std::string to_string(EdgeRepMode m);
MessageKind message_kind_from_string(const std::string& s);
AggregateKind aggregate_kind_from_string(const std::string& s);
EdgeRepMode edge_rep_mode_from_string(const std::string& s);

struct ModelConfig {
    std::size_t layers = 6;
    std::size_t hidden_dim = 32;
    MessageKind message = MessageKind::DistMult;
    AggregateKind aggregate = AggregateKind::Sum;
    std::size_t decoder_hidden = 64;
    EdgeRepMode edge_rep = EdgeRepMode::LinearOverQuery;
    bool layer_norm = true;
    bool shortcut = true;
    bool symmetrize = false;  // homogeneous graphs: score from h(u,v) + h(v,u)
    std::size_t num_negatives = 32;
    double adversarial_temperature = 0.0;  // 0 disables self-adversarial weighting

    void validate() const;
};

struct LayerParams {
    Tensor rel_weight;  // [R*d x d], one d x d block per relation (linear-over-query mode)
    Tensor rel_bias;    // [R x d]
    Tensor agg_weight;  // [d x d]
    Tensor agg_bias;    // [d]
    Tensor ln_gain;     // [d] when layer norm is enabled
    Tensor ln_bias;     // [d]
};

/// All learnable arrays. Tensor handles are shared; use clone() for a
/// snapshot with independent storage.
struct ModelParams {
    std::size_t num_relations = 0;
    std::size_t hidden_dim = 0;
    Tensor query;  // [R x d] query embeddings
    std::vector<LayerParams> layers;
    Tensor dec_w1, dec_b1, dec_w2, dec_b2;  // d -> m -> 1 MLP

    static ModelParams init(const ModelConfig& config, std::size_t num_relations, Rng& rng);

    std::vector<std::pair<std::string, Tensor>> named_tensors() const;
    std::vector<Tensor> tensors() const;
    ModelParams clone() const;
    void zero_grad();
};

/// h_q(u, v) for one (u, q) group: row v holds the pair representation.
struct PairField {
    Tensor values;  // [num_entities x d]
    EntityId source = 0;
    RelationId query = 0;
};

/// Boundary condition: row u is the query embedding, all other rows zero.
Tensor indicator(const ModelParams& params, EntityId u, RelationId q, std::size_t num_entities);

/// Per-relation edge representations for one layer, as a [R x d] table.
/// linear-over-query: W_r . Q[q] + b_r; per-relation-bias: b_r.
Tensor edge_representation_table(const ModelParams& params, const ModelConfig& config,
                                 std::size_t layer, RelationId q);
/// Single relation convenience used by callers that inspect one edge.
Tensor edge_representation(const ModelParams& params, const ModelConfig& config,
                           std::size_t layer, RelationId r, RelationId q);

/// Batched relational message: transe h+w, distmult h*w, rotate by the first
/// d/2 coordinates of w as angles.
Tensor message(MessageKind kind, const Tensor& h_sources, const Tensor& edge_reps);

/// reduce -> affine -> ReLU -> layer norm (optional) -> + h_prev (optional).
/// `messages` must already include the boundary augmentation so no segment
/// is empty.
Tensor aggregate(const ModelConfig& config, const LayerParams& layer, const Tensor& messages,
                 std::span<const std::uint32_t> segment_ids, std::size_t num_segments,
                 const Tensor& h_prev);

/// Full forward pass: boundary condition plus `layers` Bellman-Ford
/// iterations, producing pair representations for every entity in one run.
/// Masked edges are skipped; `edge_gates` (one scalar per graph edge,
/// shared across layers) multiplicatively scales messages when provided.
PairField nbfnet_forward(const KnowledgeGraph& graph, EntityId u, RelationId q,
                         const ModelConfig& config, const ModelParams& params,
                         const std::vector<std::uint8_t>* edge_mask = nullptr,
                         const Tensor* edge_gates = nullptr);

Tensor decoder_logits(const ModelParams& params, const Tensor& pair_values);  // [n x 1]
Tensor score_field(const ModelParams& params, const Tensor& pair_values);     // sigmoid(logits)

/// p(v | u, q) for one pair; runs a full forward.
double score_pair(const KnowledgeGraph& graph, const ModelParams& params,
                  const ModelConfig& config, EntityId u, RelationId q, EntityId v);

/// sigma(f(h_uv + h_vu)): invariant under swapping the two inputs.
Tensor score_symmetric(const ModelParams& params, const Tensor& h_uv, const Tensor& h_vu);

/// Negative log-likelihood of one positive against its negatives. With
/// adversarial_temperature > 0, negative terms are weighted by
/// softmax(logit / temperature) computed once and treated as constants;
/// otherwise uniformly by 1/n. Probabilities at exactly 0 or 1 are clamped
/// to 1e-15 and counted.
Tensor loss_kg(const Tensor& positive_prob, const Tensor& negative_probs,
               double adversarial_temperature = 0.0);
Tensor loss_homo(const Tensor& positive_prob, const Tensor& negative_probs);

std::uint64_t loss_clamp_count();
void reset_loss_clamp_count();

}  // namespace nbf
