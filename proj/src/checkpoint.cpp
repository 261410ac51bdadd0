#include "nbf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace nbf {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload encoding assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'N', 'B', 'F', '1'};
constexpr const char* kVersionLine = "nbfnet-checkpoint-v1";

template <typename T>
void write_raw(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool read_raw(std::istream& in, T& value) {
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    return in.gcount() == sizeof(T);
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

void write_tensor_payload(std::ostream& out,
                          const std::vector<std::pair<std::string, Tensor>>& tensors) {
    out.write(kMagic, 4);
    for (const auto& [name, t] : tensors) {
        write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) write_raw<std::uint64_t>(out, d);
        const auto& v = t.values();
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
}

std::vector<std::pair<std::string, Tensor>> read_tensor_payload(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("tensor payload: bad magic, expected NBF1");
    std::vector<std::pair<std::string, Tensor>> tensors;
    while (true) {
        std::uint32_t name_len;
        if (!read_raw(in, name_len)) {
            if (in.eof() && in.gcount() == 0) break;  // clean end between records
            throw CorruptionError("tensor payload: truncated record header");
        }
        if (name_len > 4096) throw CorruptionError("tensor payload: implausible name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (in.gcount() != static_cast<std::streamsize>(name_len))
            throw CorruptionError("tensor payload: truncated name");
        std::uint32_t rank;
        if (!read_raw(in, rank)) throw CorruptionError("tensor payload: truncated rank");
        if (rank > 8) throw CorruptionError("tensor payload: implausible rank");
        Shape shape(rank);
        std::size_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            std::uint64_t dim;
            if (!read_raw(in, dim)) throw CorruptionError("tensor payload: truncated dims");
            shape[i] = static_cast<std::size_t>(dim);
            count *= shape[i];
        }
        std::vector<double> values(count);
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
            throw CorruptionError("tensor payload: truncated values for \"" + name + "\"");
        tensors.emplace_back(name, Tensor::from_values(std::move(shape), std::move(values)));
    }
    return tensors;
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ModelConfig& config) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out << kVersionLine << "\n";
    out << "layers = " << config.layers << "\n";
    out << "hidden_dim = " << config.hidden_dim << "\n";
    out << "message = " << to_string(config.message) << "\n";
    out << "aggregate = " << to_string(config.aggregate) << "\n";
    out << "decoder_hidden = " << config.decoder_hidden << "\n";
    out << "edge_rep = " << to_string(config.edge_rep) << "\n";
    out << "layer_norm = " << (config.layer_norm ? 1 : 0) << "\n";
    out << "shortcut = " << (config.shortcut ? 1 : 0) << "\n";
    out << "symmetrize = " << (config.symmetrize ? 1 : 0) << "\n";
    out << "num_negatives = " << config.num_negatives << "\n";
    out << "adversarial_temperature = " << format_double(config.adversarial_temperature) << "\n";
    out << "num_relations = " << params.num_relations << "\n";
    out << "\n";
    write_tensor_payload(out, params.named_tensors());
    if (!out) throw IoError("failed while writing checkpoint " + path);
}

std::pair<ModelParams, ModelConfig> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("checkpoint: empty file");
    if (line != kVersionLine)
        throw FormatError("checkpoint: unsupported version line \"" + line + "\", expected \"" +
                          kVersionLine + "\"");
    std::map<std::string, std::string> kv;
    while (std::getline(in, line)) {
        if (line.empty()) break;
        auto eq = line.find(" = ");
        if (eq == std::string::npos)
            throw FormatError("checkpoint: malformed config line \"" + line + "\"");
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError("checkpoint: missing config key " + key);
        return it->second;
    };

    ModelConfig config;
    config.layers = std::stoul(need("layers"));
    config.hidden_dim = std::stoul(need("hidden_dim"));
    config.message = message_kind_from_string(need("message"));
    config.aggregate = aggregate_kind_from_string(need("aggregate"));
    config.decoder_hidden = std::stoul(need("decoder_hidden"));
    config.edge_rep = edge_rep_mode_from_string(need("edge_rep"));
    config.layer_norm = need("layer_norm") == "1";
    config.shortcut = need("shortcut") == "1";
    config.symmetrize = need("symmetrize") == "1";
    config.num_negatives = std::stoul(need("num_negatives"));
    config.adversarial_temperature = std::stod(need("adversarial_temperature"));
    const std::size_t num_relations = std::stoul(need("num_relations"));

    auto tensors = read_tensor_payload(in);
    std::map<std::string, Tensor> by_name(tensors.begin(), tensors.end());
    auto take = [&](const std::string& name) {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw CorruptionError("checkpoint: missing tensor \"" + name + "\"");
        Tensor t = it->second;
        t.set_requires_grad(true);
        by_name.erase(it);
        return t;
    };

    ModelParams params;
    params.num_relations = num_relations;
    params.hidden_dim = config.hidden_dim;
    params.query = take("query");
    params.layers.resize(config.layers);
    for (std::size_t i = 0; i < config.layers; ++i) {
        const std::string prefix = "layer" + std::to_string(i) + ".";
        LayerParams& l = params.layers[i];
        if (config.edge_rep == EdgeRepMode::LinearOverQuery)
            l.rel_weight = take(prefix + "rel_weight");
        l.rel_bias = take(prefix + "rel_bias");
        l.agg_weight = take(prefix + "agg_weight");
        l.agg_bias = take(prefix + "agg_bias");
        if (config.layer_norm) {
            l.ln_gain = take(prefix + "ln_gain");
            l.ln_bias = take(prefix + "ln_bias");
        }
    }
    params.dec_w1 = take("decoder.w1");
    params.dec_b1 = take("decoder.b1");
    params.dec_w2 = take("decoder.w2");
    params.dec_b2 = take("decoder.b2");
    if (!by_name.empty())
        throw CorruptionError("checkpoint: unexpected tensor \"" + by_name.begin()->first + "\"");

    // shape sanity against the config
    for (auto& [name, t] : params.named_tensors())
        if (t.size() == 0) throw CorruptionError("checkpoint: empty tensor \"" + name + "\"");
    return {std::move(params), config};
}

}  // namespace nbf
