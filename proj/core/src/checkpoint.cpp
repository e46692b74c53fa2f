#include "udlm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace udlm {

namespace {

constexpr char kMagic[8] = {'U', 'D', 'L', 'M', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) {
        throw std::runtime_error("checkpoint: truncated file");
    }
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
    auto len = read_pod<uint64_t>(in);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) {
        throw std::runtime_error("checkpoint: truncated file");
    }
    return s;
}

void write_tensor_block(std::ostream& out, Params& p) {
    uint32_t count = 0;
    visit_params(p, [&](const std::string&, Mat&) { ++count; },
                 [&](const std::string&, Vec&) { ++count; });
    write_pod<uint32_t>(out, count);
    visit_params(
        p,
        [&](const std::string& name, Mat& m) {
            write_string(out, name);
            write_pod<uint32_t>(out, static_cast<uint32_t>(m.rows()));
            write_pod<uint32_t>(out, static_cast<uint32_t>(m.cols()));
            out.write(reinterpret_cast<const char*>(m.data()),
                      static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m.size())));
        },
        [&](const std::string& name, Vec& v) {
            write_string(out, name);
            write_pod<uint32_t>(out, static_cast<uint32_t>(v.size()));
            write_pod<uint32_t>(out, 1u);
            out.write(reinterpret_cast<const char*>(v.data()),
                      static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(v.size())));
        });
}

void read_tensor_block(std::istream& in, Params& p) {
    const auto count = read_pod<uint32_t>(in);
    uint32_t expected = 0;
    visit_params(p, [&](const std::string&, Mat&) { ++expected; },
                 [&](const std::string&, Vec&) { ++expected; });
    if (count != expected) {
        throw std::runtime_error("checkpoint: tensor count mismatch");
    }
    visit_params(
        p,
        [&](const std::string& name, Mat& m) {
            const std::string got = read_string(in);
            const auto rows = read_pod<uint32_t>(in);
            const auto cols = read_pod<uint32_t>(in);
            if (got != name || rows != static_cast<uint32_t>(m.rows()) ||
                cols != static_cast<uint32_t>(m.cols())) {
                throw std::runtime_error("checkpoint: tensor '" + got + "' does not match config");
            }
            in.read(reinterpret_cast<char*>(m.data()),
                    static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m.size())));
        },
        [&](const std::string& name, Vec& v) {
            const std::string got = read_string(in);
            const auto rows = read_pod<uint32_t>(in);
            const auto cols = read_pod<uint32_t>(in);
            if (got != name || rows != static_cast<uint32_t>(v.size()) || cols != 1u) {
                throw std::runtime_error("checkpoint: tensor '" + got + "' does not match config");
            }
            in.read(reinterpret_cast<char*>(v.data()),
                    static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(v.size())));
        });
    if (!in) {
        throw std::runtime_error("checkpoint: truncated file");
    }
}

void write_config(std::ostream& out, const ModelConfig& cfg) {
    write_pod<int32_t>(out, cfg.layers);
    write_pod<int32_t>(out, cfg.model_dim);
    write_pod<int32_t>(out, cfg.heads);
    write_pod<int32_t>(out, cfg.ffn_dim);
    write_pod<int32_t>(out, cfg.max_len);
    write_pod<int32_t>(out, cfg.vocab_size);
    write_pod<double>(out, cfg.prompt_dropout);
}

ModelConfig read_config(std::istream& in) {
    ModelConfig cfg;
    cfg.layers = read_pod<int32_t>(in);
    cfg.model_dim = read_pod<int32_t>(in);
    cfg.heads = read_pod<int32_t>(in);
    cfg.ffn_dim = read_pod<int32_t>(in);
    cfg.max_len = read_pod<int32_t>(in);
    cfg.vocab_size = read_pod<int32_t>(in);
    cfg.prompt_dropout = read_pod<double>(in);
    return cfg;
}

}  // namespace

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::NONE: return "none";
        case Stage::PRETRAIN: return "pretrain";
        case Stage::SFT: return "sft";
        case Stage::RL: return "rl";
    }
    return "?";
}

std::optional<Stage> stage_from_name(const std::string& name) {
    for (Stage s : {Stage::NONE, Stage::PRETRAIN, Stage::SFT, Stage::RL}) {
        if (name == stage_name(s)) {
            return s;
        }
    }
    return std::nullopt;
}

MaskPredictor CheckpointData::make_model() const {
    MaskPredictor model(config);
    model.params() = params;
    return model;
}

void save_checkpoint(const std::string& path, const MaskPredictor& model, const Vocabulary& vocab,
                     Stage stage, uint64_t step, const AdamState* adam) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    }
    out.write(kMagic, sizeof(kMagic));
    write_pod<uint32_t>(out, kVersion);
    write_pod<uint32_t>(out, static_cast<uint32_t>(stage));
    write_pod<uint64_t>(out, step);
    write_string(out, vocab.serialize());
    write_config(out, model.config());

    Params params_copy = model.params();
    write_tensor_block(out, params_copy);

    write_pod<uint8_t>(out, adam ? 1 : 0);
    if (adam) {
        auto* mut = const_cast<AdamState*>(adam);
        write_pod<int64_t>(out, mut->t());
        write_tensor_block(out, mut->m());
        write_tensor_block(out, mut->v());
    }
    if (!out) {
        throw std::runtime_error("checkpoint: write failed for '" + path + "'");
    }
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    }
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    }
    const auto version = read_pod<uint32_t>(in);
    if (version != kVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto stage = static_cast<Stage>(read_pod<uint32_t>(in));
    const auto step = read_pod<uint64_t>(in);
    Vocabulary vocab = Vocabulary::deserialize(read_string(in));
    ModelConfig cfg = read_config(in);
    cfg.validate();

    MaskPredictor scratch(cfg);
    Params params = scratch.zero_like();
    read_tensor_block(in, params);

    CheckpointData data{stage, step, cfg, std::move(vocab), std::move(params),
                        false,  Params{}, Params{}, 0};
    const auto has_adam = read_pod<uint8_t>(in);
    if (has_adam) {
        data.has_adam = true;
        data.adam_t = read_pod<int64_t>(in);
        data.adam_m = scratch.zero_like();
        data.adam_v = scratch.zero_like();
        read_tensor_block(in, data.adam_m);
        read_tensor_block(in, data.adam_v);
    }
    return data;
}

CheckpointData load_checkpoint(const std::string& path, const Vocabulary& expected) {
    CheckpointData data = load_checkpoint(path);
    if (!(data.vocab == expected)) {
        throw std::runtime_error("checkpoint: vocabulary mismatch for '" + path + "'");
    }
    return data;
}

}  // namespace udlm
