#include "cgra/checkpoint.h"

#include <bit>
#include <cstring>

#include "cgra/error.h"
#include "cgra/json_util.h"

namespace cgra {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[8] = {'C', 'G', 'R', 'A', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view bytes, std::size_t& pos) {
    if (pos + sizeof(T) > bytes.size()) throw ValidationError("checkpoint truncated");
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

bool has_per_layer_gates(const Model& m) {
    return !m.layers.empty() && !m.layers.front().gate_w.value.empty();
}

}  // namespace

std::string serialize_checkpoint(const Model& model, const Vocab& vocab,
                                 const std::string& dictionary_version, std::uint64_t seed,
                                 const nlohmann::json& extra) {
    if (vocab.size() != static_cast<std::size_t>(model.config().vocab_size)) {
        throw ValidationError("vocab has " + std::to_string(vocab.size()) + " pieces, model expects " +
                              std::to_string(model.config().vocab_size));
    }
    nlohmann::json header;
    header["config"] = to_json(model.config());
    header["per_layer_gates"] = has_per_layer_gates(model);
    header["seed"] = seed;
    header["dictionary_version"] = dictionary_version;
    header["vocab"] = vocab.pieces();
    header["extra"] = extra;
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t offset = 0;
    const auto params = model.parameters();
    for (const Param* p : params) {
        tensors.push_back({{"name", p->name},
                           {"group", to_string(p->group)},
                           {"rows", p->value.rows()},
                           {"cols", p->value.cols()},
                           {"offset", offset}});
        offset += p->value.size();
    }
    header["tensors"] = std::move(tensors);
    const std::string head = header.dump();

    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, head.size());
    out += head;
    out.reserve(out.size() + offset * sizeof(float));
    for (const Param* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const auto f = static_cast<float>(p->value[i]);
            if (static_cast<Real>(f) != p->value[i]) {
                throw std::logic_error("parameter " + p->name + " is not float32-representable");
            }
            put<float>(out, f);
        }
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const Vocab& vocab,
                     const std::string& dictionary_version, std::uint64_t seed,
                     const nlohmann::json& extra) {
    write_text_file(path, serialize_checkpoint(model, vocab, dictionary_version, seed, extra));
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw ValidationError("not a checkpoint file (bad magic)");
    }
    std::size_t pos = sizeof(kMagic);
    const auto version = get<std::uint32_t>(bytes, pos);
    if (version != kCheckpointVersion) {
        throw ValidationError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto head_len = get<std::uint64_t>(bytes, pos);
    if (pos + head_len > bytes.size()) throw ValidationError("checkpoint truncated");
    const nlohmann::json header = parse_json_text(bytes.substr(pos, head_len), "checkpoint header");
    pos += head_len;

    Checkpoint ck;
    try {
        ModelConfig cfg = model_config_from_json(header.at("config"));
        const GateMode mode = cfg.gate_mode;
        if (header.at("per_layer_gates").get<bool>()) cfg.gate_mode = GateMode::kPerLayer;
        ck.model = Model(cfg);
        ck.model.set_modes(mode, cfg.boost_mode, cfg.residual_skip, cfg.use_concepts);
        ck.seed = header.at("seed").get<std::uint64_t>();
        ck.dictionary_version = header.at("dictionary_version").get<std::string>();
        ck.vocab = Vocab(header.at("vocab").get<std::vector<std::string>>());
        ck.extra = header.value("extra", nlohmann::json::object());

        const auto& tensors = header.at("tensors");
        auto params = ck.model.parameters();
        if (tensors.size() != params.size()) {
            throw ValidationError("checkpoint holds " + std::to_string(tensors.size()) +
                                  " tensors, model expects " + std::to_string(params.size()));
        }
        const std::size_t payload = pos;
        for (std::size_t t = 0; t < params.size(); ++t) {
            Param& p = *params[t];
            const auto& desc = tensors[t];
            if (desc.at("name").get<std::string>() != p.name ||
                desc.at("rows").get<std::size_t>() != p.value.rows() ||
                desc.at("cols").get<std::size_t>() != p.value.cols()) {
                throw ValidationError("checkpoint tensor " + desc.at("name").get<std::string>() +
                                      " does not match model parameter " + p.name);
            }
            std::size_t at = payload + desc.at("offset").get<std::size_t>() * sizeof(float);
            for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = get<float>(bytes, at);
            pos = std::max(pos, at);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint header: ") + e.what());
    }
    if (pos != bytes.size()) throw ValidationError("checkpoint has trailing bytes");
    if (static_cast<std::size_t>(ck.model.config().vocab_size) != ck.vocab.size()) {
        throw ValidationError("checkpoint vocab size does not match model config");
    }
    return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return deserialize_checkpoint(read_text_file(path));
}

}  // namespace cgra
