#include "nbf/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nbf {

namespace {

std::atomic<std::uint64_t> g_clamp_count{0};

Tensor xavier(std::size_t fan_in, std::size_t fan_out, Shape shape, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return Tensor::randu(std::move(shape), -bound, bound, rng, true);
}

}  // namespace

std::string to_string(MessageKind k) {
    switch (k) {
        case MessageKind::TransE: return "transe";
        case MessageKind::DistMult: return "distmult";
        case MessageKind::RotatE: return "rotate";
    }
    throw InternalError("bad message kind");
}

std::string to_string(AggregateKind k) {
    switch (k) {
        case AggregateKind::Sum: return "sum";
        case AggregateKind::Mean: return "mean";
        case AggregateKind::Max: return "max";
    }
    throw InternalError("bad aggregate kind");
}

std::string to_string(EdgeRepMode m) {
    switch (m) {
        case EdgeRepMode::LinearOverQuery: return "linear-over-query";
        case EdgeRepMode::PerRelationBias: return "per-relation-bias";
    }
    throw InternalError("bad edge rep mode");
}

MessageKind message_kind_from_string(const std::string& s) {
    if (s == "transe") return MessageKind::TransE;
    if (s == "distmult") return MessageKind::DistMult;
    if (s == "rotate") return MessageKind::RotatE;
    throw ArgumentError("unknown message kind \"" + s + "\" (transe|distmult|rotate)");
}

AggregateKind aggregate_kind_from_string(const std::string& s) {
    if (s == "sum") return AggregateKind::Sum;
    if (s == "mean") return AggregateKind::Mean;
    if (s == "max") return AggregateKind::Max;
    throw ArgumentError("unknown aggregate kind \"" + s + "\" (sum|mean|max)");
}

EdgeRepMode edge_rep_mode_from_string(const std::string& s) {
    if (s == "linear-over-query") return EdgeRepMode::LinearOverQuery;
    if (s == "per-relation-bias") return EdgeRepMode::PerRelationBias;
    throw ArgumentError("unknown edge rep mode \"" + s +
                        "\" (linear-over-query|per-relation-bias)");
}

void ModelConfig::validate() const {
    require(layers >= 1, "model config: layers must be >= 1");
    require(hidden_dim >= 1, "model config: hidden_dim must be >= 1");
    require(decoder_hidden >= 1, "model config: decoder_hidden must be >= 1");
    require(num_negatives >= 1, "model config: num_negatives must be >= 1");
    if (message == MessageKind::RotatE)
        require(hidden_dim % 2 == 0, "model config: rotate messages need an even hidden_dim");
    require(adversarial_temperature >= 0.0,
            "model config: adversarial_temperature must be >= 0");
}

ModelParams ModelParams::init(const ModelConfig& config, std::size_t num_relations, Rng& rng) {
    config.validate();
    require(num_relations >= 1, "model params: need at least one relation");
    const std::size_t d = config.hidden_dim;
    const std::size_t m = config.decoder_hidden;
    ModelParams p;
    p.num_relations = num_relations;
    p.hidden_dim = d;
    // relation embeddings at unit scale: multiplicative messages keep the
    // source signal from attenuating across layers
    p.query = Tensor::randu({num_relations, d}, -1.0, 1.0, rng, true);
    p.layers.resize(config.layers);
    for (auto& layer : p.layers) {
        if (config.edge_rep == EdgeRepMode::LinearOverQuery)
            layer.rel_weight = xavier(d, d, {num_relations * d, d}, rng);
        layer.rel_bias = Tensor::randu({num_relations, d}, -1.0, 1.0, rng, true);
        layer.agg_weight = xavier(d, d, {d, d}, rng);
        layer.agg_bias = Tensor::randu({d}, -0.1, 0.1, rng, true);
        if (config.layer_norm) {
            layer.ln_gain = Tensor::constant({d}, 1.0);
            layer.ln_gain.set_requires_grad(true);
            layer.ln_bias = Tensor::zeros({d}, true);
        }
    }
    p.dec_w1 = xavier(d, m, {d, m}, rng);
    p.dec_b1 = Tensor::randu({m}, -0.1, 0.1, rng, true);
    p.dec_w2 = xavier(m, 1, {m, 1}, rng);
    p.dec_b2 = Tensor::randu({1}, -0.1, 0.1, rng, true);
    return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("query", query);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string prefix = "layer" + std::to_string(i) + ".";
        const LayerParams& l = layers[i];
        if (l.rel_weight.defined()) out.emplace_back(prefix + "rel_weight", l.rel_weight);
        out.emplace_back(prefix + "rel_bias", l.rel_bias);
        out.emplace_back(prefix + "agg_weight", l.agg_weight);
        out.emplace_back(prefix + "agg_bias", l.agg_bias);
        if (l.ln_gain.defined()) {
            out.emplace_back(prefix + "ln_gain", l.ln_gain);
            out.emplace_back(prefix + "ln_bias", l.ln_bias);
        }
    }
    out.emplace_back("decoder.w1", dec_w1);
    out.emplace_back("decoder.b1", dec_b1);
    out.emplace_back("decoder.w2", dec_w2);
    out.emplace_back("decoder.b2", dec_b2);
    return out;
}

std::vector<Tensor> ModelParams::tensors() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_tensors()) out.push_back(t);
    return out;
}

ModelParams ModelParams::clone() const {
    auto copy_tensor = [](const Tensor& t) {
        if (!t.defined()) return Tensor();
        Tensor c = Tensor::from_values(t.shape(), t.values(), false);
        c.set_requires_grad(t.requires_grad());
        return c;
    };
    ModelParams p;
    p.num_relations = num_relations;
    p.hidden_dim = hidden_dim;
    p.query = copy_tensor(query);
    p.layers.reserve(layers.size());
    for (const auto& l : layers)
        p.layers.push_back({copy_tensor(l.rel_weight), copy_tensor(l.rel_bias),
                            copy_tensor(l.agg_weight), copy_tensor(l.agg_bias),
                            copy_tensor(l.ln_gain), copy_tensor(l.ln_bias)});
    p.dec_w1 = copy_tensor(dec_w1);
    p.dec_b1 = copy_tensor(dec_b1);
    p.dec_w2 = copy_tensor(dec_w2);
    p.dec_b2 = copy_tensor(dec_b2);
    return p;
}

void ModelParams::zero_grad() {
    for (auto& t : tensors()) t.zero_grad();
}

Tensor indicator(const ModelParams& params, EntityId u, RelationId q, std::size_t num_entities) {
    require(u < num_entities, "indicator: source out of range");
    require(q < params.num_relations, "indicator: query relation out of range");
    std::uint32_t qi = q;
    Tensor q_row = gather_rows(params.query, std::span<const std::uint32_t>(&qi, 1));
    return place_row(q_row, u, num_entities);
}

Tensor edge_representation_table(const ModelParams& params, const ModelConfig& config,
                                 std::size_t layer, RelationId q) {
    require(layer < params.layers.size(), "edge representation: layer out of range");
    const LayerParams& l = params.layers[layer];
    if (config.edge_rep == EdgeRepMode::PerRelationBias) return l.rel_bias;
    require(q < params.num_relations, "edge representation: query relation out of range");
    const std::size_t d = params.hidden_dim;
    std::uint32_t qi = q;
    Tensor q_col = reshape(gather_rows(params.query, std::span<const std::uint32_t>(&qi, 1)),
                           {d, 1});
    // [R*d x d] . [d x 1] -> [R*d x 1] -> [R x d], one W_r . q block per relation
    Tensor wq = reshape(matmul(l.rel_weight, q_col), {params.num_relations, d});
    return add(wq, l.rel_bias);
}

Tensor edge_representation(const ModelParams& params, const ModelConfig& config,
                           std::size_t layer, RelationId r, RelationId q) {
    require(r < params.num_relations, "edge representation: relation out of range");
    Tensor table = edge_representation_table(params, config, layer, q);
    std::uint32_t ri = r;
    return gather_rows(table, std::span<const std::uint32_t>(&ri, 1));
}

Tensor message(MessageKind kind, const Tensor& h_sources, const Tensor& edge_reps) {
    switch (kind) {
        case MessageKind::TransE: return add(h_sources, edge_reps);
        case MessageKind::DistMult: return mul(h_sources, edge_reps);
        case MessageKind::RotatE: {
            const std::size_t d = h_sources.cols();
            if (d % 2 != 0) throw ShapeError("rotate message: hidden dimension must be even");
            Tensor theta = slice_cols(edge_reps, 0, d / 2);
            return complex_rotate(h_sources, theta);
        }
    }
    throw InternalError("bad message kind");
}

Tensor aggregate(const ModelConfig& config, const LayerParams& layer, const Tensor& messages,
                 std::span<const std::uint32_t> segment_ids, std::size_t num_segments,
                 const Tensor& h_prev) {
    if (messages.rows() == 0) throw InternalError("aggregate: empty message set");
    Reduce kind;
    switch (config.aggregate) {
        case AggregateKind::Sum: kind = Reduce::Sum; break;
        case AggregateKind::Mean: kind = Reduce::Mean; break;
        case AggregateKind::Max: kind = Reduce::Max; break;
        default: throw InternalError("bad aggregate kind");
    }
    Tensor reduced = segment_reduce(messages, segment_ids, num_segments, kind);
    Tensor z = add(matmul(reduced, layer.agg_weight),
                   broadcast_rows(reshape(layer.agg_bias, {1, layer.agg_bias.size()}),
                                  num_segments));
    z = relu(z);
    if (config.layer_norm) z = layer_norm(z, layer.ln_gain, layer.ln_bias, 1e-5);
    if (config.shortcut) z = add(z, h_prev);
    return z;
}

PairField nbfnet_forward(const KnowledgeGraph& graph, EntityId u, RelationId q,
                         const ModelConfig& config, const ModelParams& params,
                         const std::vector<std::uint8_t>* edge_mask, const Tensor* edge_gates) {
    config.validate();
    require(params.num_relations == graph.num_relations(),
            "forward: params built for a different relation count");
    require(params.layers.size() == config.layers,
            "forward: params built for a different layer count");
    if (edge_mask && edge_mask->size() != graph.num_edges())
        throw ArgumentError("forward: mask length != edge count");
    if (edge_gates && (edge_gates->rank() != 2 || edge_gates->rows() != graph.num_edges() ||
                       edge_gates->cols() != 1))
        throw ArgumentError("forward: edge gates must be a [num_edges x 1] tensor");

    const std::size_t num_entities = graph.num_entities();

    // flat unmasked edge arrays, in edge id order
    std::vector<std::uint32_t> heads, rels, tails, edge_ids;
    heads.reserve(graph.num_edges());
    rels.reserve(graph.num_edges());
    tails.reserve(graph.num_edges());
    for (EdgeId e = 0; e < graph.num_edges(); ++e) {
        if (edge_mask && !(*edge_mask)[e]) continue;
        const Edge& edge = graph.edge(e);
        heads.push_back(edge.head);
        rels.push_back(edge.relation);
        tails.push_back(edge.tail);
        edge_ids.push_back(e);
    }

    // boundary message first per segment, then edges in id order
    std::vector<std::uint32_t> segment_ids(num_entities + tails.size());
    std::iota(segment_ids.begin(), segment_ids.begin() + num_entities, 0);
    std::copy(tails.begin(), tails.end(), segment_ids.begin() + num_entities);

    Tensor h0 = indicator(params, u, q, num_entities);
    Tensor h = h0;
    for (std::size_t t = 0; t < config.layers; ++t) {
        Tensor table = edge_representation_table(params, config, t, q);
        Tensor msgs = message(config.message, gather_rows(h, heads), gather_rows(table, rels));
        if (edge_gates) msgs = scale_rows(msgs, gather_rows(*edge_gates, edge_ids));
        Tensor all_msgs = concat_rows(h0, msgs);
        h = aggregate(config, params.layers[t], all_msgs, segment_ids, num_entities, h);
    }
    return {h, u, q};
}

Tensor decoder_logits(const ModelParams& params, const Tensor& pair_values) {
    const std::size_t n = pair_values.rows();
    Tensor hidden = relu(add(matmul(pair_values, params.dec_w1),
                             broadcast_rows(reshape(params.dec_b1, {1, params.dec_b1.size()}), n)));
    return add(matmul(hidden, params.dec_w2),
               broadcast_rows(reshape(params.dec_b2, {1, 1}), n));
}

Tensor score_field(const ModelParams& params, const Tensor& pair_values) {
    return sigmoid(decoder_logits(params, pair_values));
}

double score_pair(const KnowledgeGraph& graph, const ModelParams& params,
                  const ModelConfig& config, EntityId u, RelationId q, EntityId v) {
    require(v < graph.num_entities(), "score_pair: target out of range");
    NoGradGuard no_grad;
    PairField field = nbfnet_forward(graph, u, q, config, params);
    return score_field(params, field.values).at(v, 0);
}

Tensor score_symmetric(const ModelParams& params, const Tensor& h_uv, const Tensor& h_vu) {
    Tensor pair = add(reshape(h_uv, {1, h_uv.size()}), reshape(h_vu, {1, h_vu.size()}));
    return score_field(params, pair);
}

namespace {

// clamp into (0,1) open interval, counting saturated entries
Tensor clamp_probability(const Tensor& p) {
    constexpr double lo = 1e-15;
    constexpr double hi = 1.0 - 1e-15;
    for (double v : p.values()) {
        if (!(v > lo && v < hi)) ++g_clamp_count;
        if (!std::isfinite(v)) throw NumericError("loss: non-finite probability");
    }
    return clamp(p, lo, hi);
}

Tensor negative_log_terms(const Tensor& negative_probs) {
    Tensor q = clamp_probability(negative_probs);
    return log(add_scalar(mul_scalar(q, -1.0), 1.0));  // log(1 - p')
}

}  // namespace

Tensor loss_kg(const Tensor& positive_prob, const Tensor& negative_probs,
               double adversarial_temperature) {
    if (!positive_prob.is_scalar()) throw ShapeError("loss: positive probability must be scalar");
    if (negative_probs.size() == 0) throw ShapeError("loss: need at least one negative");
    const std::size_t n = negative_probs.size();
    Tensor pos_term = reshape(log(clamp_probability(positive_prob)), {1});
    Tensor neg_logs = reshape(negative_log_terms(negative_probs), {n, 1});

    Tensor weights;
    if (adversarial_temperature > 0.0) {
        // softmax(logit / temperature) over the negatives, held constant
        std::vector<double> logits(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double p = std::clamp(negative_probs.at(i), 1e-15, 1.0 - 1e-15);
            logits[i] = std::log(p / (1.0 - p)) / adversarial_temperature;
        }
        const double peak = *std::max_element(logits.begin(), logits.end());
        double total = 0.0;
        for (auto& l : logits) {
            l = std::exp(l - peak);
            total += l;
        }
        for (auto& l : logits) l /= total;
        weights = Tensor::from_values({n, 1}, std::move(logits));
    } else {
        weights = Tensor::constant({n, 1}, 1.0 / static_cast<double>(n));
    }
    Tensor neg_term = sum(mul(weights, neg_logs));
    return sub(mul_scalar(pos_term, -1.0), neg_term);
}

Tensor loss_homo(const Tensor& positive_prob, const Tensor& negative_probs) {
    return loss_kg(positive_prob, negative_probs, 0.0);
}

std::uint64_t loss_clamp_count() { return g_clamp_count.load(); }
void reset_loss_clamp_count() { g_clamp_count.store(0); }

}  // namespace nbf
