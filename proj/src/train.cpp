#include "nbf/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "nbf/checkpoint.hpp"

namespace nbf {

void TrainConfig::validate() const {
    require(epochs >= 1, "train config: epochs must be >= 1");
    require(batch_size >= 1, "train config: batch_size must be >= 1");
    require(learning_rate > 0.0, "train config: learning_rate must be positive");
}

namespace {

void check_disjoint(const Splits& splits) {
    TripletSet seen;
    auto check = [&](const std::vector<Triplet>& part, const char* name) {
        for (const Triplet& t : part)
            if (!seen.insert(t).second)
                throw ArgumentError(std::string("splits: ") + name +
                                    " overlaps an earlier split");
    };
    check(splits.train, "train");
    check(splits.valid, "valid");
    check(splits.test, "test");
}

std::string dump_batch(const std::vector<Triplet>& batch) {
    std::ostringstream os;
    for (const Triplet& t : batch) os << " (" << t.head << "," << t.relation << "," << t.tail << ")";
    return os.str();
}

double validation_metric(const KnowledgeGraph& graph, const Splits& splits,
                         const ModelParams& params, const ModelConfig& model_config,
                         const TrainConfig& train_config) {
    if (splits.valid.empty()) return 0.0;
    EvalOptions ev;
    ev.protocol = train_config.selection == SelectionMetric::AUROC ? Protocol::HomoBalanced
                                                                   : Protocol::KgFiltered;
    ev.seed = train_config.seed ^ 0x9e3779b97f4a7c15ULL;
    ev.workers = train_config.eval_workers;
    EvalReport report = evaluate(graph, splits, splits.valid, params, model_config, ev);
    return train_config.selection == SelectionMetric::AUROC ? report.classification->auroc
                                                            : report.ranking->mrr;
}

// probabilities for selected rows of a pair field
Tensor decode_rows(const ModelParams& params, const Tensor& field,
                   std::span<const std::uint32_t> rows) {
    return score_field(params, gather_rows(field, rows));
}

}  // namespace

TrainResult train(const KnowledgeGraph& graph, const Splits& splits,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  std::ostream* progress, const std::optional<ModelParams>& initial_params,
                  const std::function<void(const StepInfo&)>& inspect) {
    model_config.validate();
    train_config.validate();
    check_disjoint(splits);
    require(!splits.train.empty(), "train: empty training split");
    if (!model_config.symmetrize)
        require(graph.inverse_augmented(),
                "train: knowledge-graph mode needs an inverse-augmented graph");

    Rng rng(train_config.seed);
    ModelParams params = initial_params ? initial_params->clone()
                                        : ModelParams::init(model_config, graph.num_relations(), rng);
    require(params.num_relations == graph.num_relations(),
            "train: initial params relation count differs from graph");

    AdamConfig adam_config;
    adam_config.learning_rate = train_config.learning_rate;
    Adam optimizer(params.tensors(), adam_config);

    TrainResult result;
    const double initial_metric =
        validation_metric(graph, splits, params, model_config, train_config);
    result.history.push_back({0, 0.0, initial_metric});
    result.best = params.clone();
    result.best_epoch = 0;
    result.best_metric = initial_metric;

    const std::size_t n_neg = model_config.num_negatives;
    std::vector<std::size_t> order(splits.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::size_t steps_done = 0;
    bool step_cap_hit = false;
    for (std::size_t epoch = 1; epoch <= train_config.epochs && !step_cap_hit; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t epoch_steps = 0;

        for (std::size_t start = 0; start < order.size(); start += train_config.batch_size) {
            if (train_config.max_steps && steps_done >= train_config.max_steps) {
                step_cap_hit = true;
                break;
            }
            const std::size_t stop = std::min(order.size(), start + train_config.batch_size);
            std::vector<Triplet> batch;
            batch.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) batch.push_back(splits.train[order[i]]);

            std::vector<std::vector<Triplet>> negatives(batch.size());
            for (std::size_t i = 0; i < batch.size(); ++i)
                negatives[i] =
                    sample_negatives_pca(graph, batch[i], n_neg, CorruptSide::Both, rng);

            const std::vector<std::uint8_t> mask = mask_query_edges(graph, batch);

            // micro-batches share the tail-side forward for equal (head, relation)
            std::vector<std::size_t> mb_order(batch.size());
            for (std::size_t i = 0; i < mb_order.size(); ++i) mb_order[i] = i;
            std::stable_sort(mb_order.begin(), mb_order.end(), [&](std::size_t a, std::size_t b) {
                return std::pair(batch[a].head, batch[a].relation) <
                       std::pair(batch[b].head, batch[b].relation);
            });

            params.zero_grad();
            double step_loss = 0.0;
            const double batch_scale = 1.0 / static_cast<double>(batch.size());

            std::size_t mb_begin = 0;
            while (mb_begin < mb_order.size()) {
                std::size_t mb_end = mb_begin + 1;
                while (mb_end < mb_order.size() &&
                       batch[mb_order[mb_end]].head == batch[mb_order[mb_begin]].head &&
                       batch[mb_order[mb_end]].relation == batch[mb_order[mb_begin]].relation)
                    ++mb_end;

                std::map<std::pair<EntityId, RelationId>, Tensor> fields;
                auto field_for = [&](EntityId source, RelationId rel) -> const Tensor& {
                    auto key = std::make_pair(source, rel);
                    auto it = fields.find(key);
                    if (it == fields.end())
                        it = fields
                                 .emplace(key, nbfnet_forward(graph, source, rel, model_config,
                                                              params, &mask)
                                                   .values)
                                 .first;
                    return it->second;
                };

                auto positive_loss = [&](std::size_t pi) {
                    const Triplet& pos = batch[pi];
                    Tensor p_pos, p_negs;
                    if (model_config.symmetrize) {
                        auto pair_prob = [&](EntityId a, EntityId b) {
                            Tensor ha = slice_rows(field_for(a, pos.relation), b, b + 1);
                            Tensor hb = slice_rows(field_for(b, pos.relation), a, a + 1);
                            return score_symmetric(params, ha, hb);
                        };
                        p_pos = pair_prob(pos.head, pos.tail);
                        Tensor acc;
                        for (const Triplet& neg : negatives[pi]) {
                            Tensor p = pair_prob(neg.head, neg.tail);
                            acc = acc.defined() ? concat_rows(acc, p) : p;
                        }
                        p_negs = acc;
                        return loss_homo(p_pos, p_negs);
                    }
                    const RelationId inv = graph.inverse_relation(pos.relation);
                    std::vector<std::uint32_t> tail_rows{pos.tail};
                    std::vector<std::uint32_t> head_rows;
                    for (const Triplet& neg : negatives[pi]) {
                        if (neg.head == pos.head) tail_rows.push_back(neg.tail);
                        else head_rows.push_back(neg.head);
                    }
                    Tensor tail_probs =
                        decode_rows(params, field_for(pos.head, pos.relation), tail_rows);
                    p_pos = slice_rows(tail_probs, 0, 1);
                    Tensor tail_negs;
                    if (tail_rows.size() > 1)
                        tail_negs = slice_rows(tail_probs, 1, tail_rows.size());
                    Tensor head_negs;
                    if (!head_rows.empty())
                        head_negs = decode_rows(params, field_for(pos.tail, inv), head_rows);
                    if (tail_negs.defined() && head_negs.defined())
                        p_negs = concat_rows(tail_negs, head_negs);
                    else
                        p_negs = tail_negs.defined() ? tail_negs : head_negs;
                    return loss_kg(p_pos, p_negs, model_config.adversarial_temperature);
                };

                Tensor mb_loss;
                try {
                    for (std::size_t oi = mb_begin; oi < mb_end; ++oi) {
                        Tensor term = positive_loss(mb_order[oi]);
                        mb_loss = mb_loss.defined() ? add(mb_loss, term) : term;
                    }
                } catch (const NumericError& e) {
                    throw NumericError(std::string(e.what()) + " at step " +
                                       std::to_string(steps_done) + "; batch:" +
                                       dump_batch(batch));
                }

                mb_loss = mul_scalar(mb_loss, batch_scale);
                const double mb_value = mb_loss.item();
                if (!std::isfinite(mb_value))
                    throw NumericError("train: non-finite loss at step " +
                                       std::to_string(steps_done) + "; batch:" +
                                       dump_batch(batch));
                step_loss += mb_value;
                backward(mb_loss);
                mb_begin = mb_end;
            }

            optimizer.step();
            epoch_loss += step_loss;
            ++epoch_steps;
            ++steps_done;
            if (inspect) inspect(StepInfo{steps_done, &batch, &mask, step_loss});
        }

        const double mean_loss = epoch_steps ? epoch_loss / static_cast<double>(epoch_steps) : 0.0;
        const double metric = validation_metric(graph, splits, params, model_config, train_config);
        result.history.push_back({epoch, mean_loss, metric});
        if (progress)
            (*progress) << epoch << '\t' << mean_loss << '\t' << metric << '\n' << std::flush;
        if (metric > result.best_metric) {
            result.best_metric = metric;
            result.best_epoch = epoch;
            result.best = params.clone();
        }
    }

    result.final_params = params.clone();
    if (splits.valid.empty()) {
        result.best = params.clone();  // nothing to select on; keep the final model
        result.best_metric = 0.0;
    }
    if (!train_config.checkpoint_path.empty())
        save_checkpoint(train_config.checkpoint_path, result.best, model_config);
    return result;
}

std::vector<std::pair<std::string, std::string>> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    std::size_t line_no = 0;
    auto trim = [](std::string s) {
        const char* ws = " \t";
        const auto begin = s.find_first_not_of(ws);
        if (begin == std::string::npos) return std::string();
        const auto end = s.find_last_not_of(ws);
        return s.substr(begin, end - begin + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string trimmed = trim(line);
        if (trimmed.empty() || trimmed[0] == '#') continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(trimmed.substr(0, eq));
        std::string value = trim(trimmed.substr(eq + 1));
        if (key.empty())
            throw ParseError("config line " + std::to_string(line_no) + ": empty key");
        entries.emplace_back(std::move(key), std::move(value));
    }
    return entries;
}

namespace {

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true") return true;
    if (value == "0" || value == "false") return false;
    throw ParseError("config key " + key + ": expected a boolean, got \"" + value + "\"");
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ParseError("config key " + key + ": expected an integer, got \"" + value + "\"");
    }
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ParseError("config key " + key + ": expected a number, got \"" + value + "\"");
    }
}

}  // namespace

void apply_config_entries(const std::vector<std::pair<std::string, std::string>>& entries,
                          ModelConfig& model_config, TrainConfig& train_config) {
    for (const auto& [key, value] : entries) {
        if (key == "layers") model_config.layers = parse_size(key, value);
        else if (key == "hidden_dim") model_config.hidden_dim = parse_size(key, value);
        else if (key == "message") model_config.message = message_kind_from_string(value);
        else if (key == "aggregate")
            model_config.aggregate = aggregate_kind_from_string(value);
        else if (key == "decoder_hidden") model_config.decoder_hidden = parse_size(key, value);
        else if (key == "edge_rep") model_config.edge_rep = edge_rep_mode_from_string(value);
        else if (key == "layer_norm") model_config.layer_norm = parse_bool(key, value);
        else if (key == "shortcut") model_config.shortcut = parse_bool(key, value);
        else if (key == "symmetrize") model_config.symmetrize = parse_bool(key, value);
        else if (key == "num_negatives") model_config.num_negatives = parse_size(key, value);
        else if (key == "adversarial_temperature")
            model_config.adversarial_temperature = parse_real(key, value);
        else if (key == "epochs") train_config.epochs = parse_size(key, value);
        else if (key == "batch_size") train_config.batch_size = parse_size(key, value);
        else if (key == "max_steps") train_config.max_steps = parse_size(key, value);
        else if (key == "seed") train_config.seed = parse_size(key, value);
        else if (key == "learning_rate") train_config.learning_rate = parse_real(key, value);
        else if (key == "checkpoint") train_config.checkpoint_path = value;
        else if (key == "selection") {
            if (value == "mrr") train_config.selection = SelectionMetric::MRR;
            else if (value == "auroc") train_config.selection = SelectionMetric::AUROC;
            else throw ParseError("config key selection: expected mrr or auroc");
        } else {
            throw ParseError("unknown config key \"" + key + "\"");
        }
    }
}

}  // namespace nbf
