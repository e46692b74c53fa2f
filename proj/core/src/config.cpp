#include "udlm/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace udlm {

namespace {

long parse_long(const std::string& key, const std::string& value) {
    size_t used = 0;
    long out = 0;
    try {
        out = std::stol(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != value.size()) {
        throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + value + "'");
    }
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    size_t used = 0;
    double out = 0;
    try {
        out = std::stod(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != value.size()) {
        throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + value + "'");
    }
    return out;
}

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", x);
    return buf;
}

RunStage parse_stage(const std::string& value) {
    for (RunStage s : {RunStage::PRETRAIN, RunStage::SFT, RunStage::RL, RunStage::SAMPLE,
                       RunStage::ABLATE}) {
        if (value == run_stage_name(s)) {
            return s;
        }
    }
    throw std::invalid_argument("config: unknown stage '" + value + "'");
}

ScheduleKind parse_schedule(const std::string& value) {
    if (value == "linear") return ScheduleKind::LINEAR;
    if (value == "cosine") return ScheduleKind::COSINE;
    throw std::invalid_argument("config: unknown schedule '" + value + "'");
}

UnmaskRule parse_unmask_rule(const std::string& value) {
    if (value == "fixed_k") return UnmaskRule::FIXED_K;
    if (value == "schedule") return UnmaskRule::SCHEDULE_DERIVED;
    throw std::invalid_argument("config: unknown unmask rule '" + value + "'");
}

Strategy parse_strategy(const std::string& value) {
    for (Strategy s : {Strategy::UNIGRPO, Strategy::D1, Strategy::LLADA}) {
        if (value == strategy_name(s)) {
            return s;
        }
    }
    throw std::invalid_argument("config: unknown strategy '" + value + "'");
}

NoiseMode parse_noise_mode(const std::string& value) {
    if (value == "structured") return NoiseMode::STRUCTURED;
    if (value == "random") return NoiseMode::RANDOM;
    throw std::invalid_argument("config: unknown noise mode '" + value + "'");
}

RewardTaskKind parse_reward_kind(const std::string& value) {
    for (RewardTaskKind k :
         {RewardTaskKind::TEXT_REASONING, RewardTaskKind::MM_REASONING, RewardTaskKind::T2I}) {
        if (value == reward_task_name(k)) {
            return k;
        }
    }
    throw std::invalid_argument("config: unknown reward task kind '" + value + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"stage", [](RunConfig& c, const std::string&, const std::string& v) { c.stage = parse_stage(v); }},
        {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = static_cast<uint64_t>(parse_long(k, v)); }},
        {"steps", [](RunConfig& c, const std::string& k, const std::string& v) { c.steps = static_cast<int>(parse_long(k, v)); }},
        {"batch_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.batch_size = static_cast<int>(parse_long(k, v)); }},
        {"output_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
        {"vocab.image_codes", [](RunConfig& c, const std::string& k, const std::string& v) { c.vocab_image_codes = static_cast<int>(parse_long(k, v)); }},

        {"model.layers", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.layers = static_cast<int>(parse_long(k, v)); }},
        {"model.dim", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.model_dim = static_cast<int>(parse_long(k, v)); }},
        {"model.heads", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.heads = static_cast<int>(parse_long(k, v)); }},
        {"model.ffn_dim", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.ffn_dim = static_cast<int>(parse_long(k, v)); }},
        {"model.max_len", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.max_len = static_cast<int>(parse_long(k, v)); }},
        {"model.prompt_dropout", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.prompt_dropout = parse_double(k, v); }},

        {"sampler.length", [](RunConfig& c, const std::string& k, const std::string& v) { c.sampler.length = static_cast<int>(parse_long(k, v)); }},
        {"sampler.steps", [](RunConfig& c, const std::string& k, const std::string& v) { c.sampler.steps = static_cast<int>(parse_long(k, v)); }},
        {"sampler.block_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.sampler.block_size = static_cast<int>(parse_long(k, v)); }},
        {"sampler.schedule", [](RunConfig& c, const std::string&, const std::string& v) { c.sampler.schedule_kind = parse_schedule(v); }},
        {"sampler.unmask_rule", [](RunConfig& c, const std::string&, const std::string& v) { c.sampler.unmask_rule = parse_unmask_rule(v); }},
        {"sampler.unmask_k", [](RunConfig& c, const std::string& k, const std::string& v) { c.sampler.unmask_k = static_cast<int>(parse_long(k, v)); }},
        {"sampler.guidance", [](RunConfig& c, const std::string& k, const std::string& v) { c.sampler.guidance_scale = parse_double(k, v); }},
        {"sampler.temperature", [](RunConfig& c, const std::string& k, const std::string& v) { c.sampler.temperature = parse_double(k, v); }},

        {"rl.group_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.rl.group_size = static_cast<int>(parse_long(k, v)); }},
        {"rl.mu", [](RunConfig& c, const std::string& k, const std::string& v) { c.rl.mu = static_cast<int>(parse_long(k, v)); }},
        {"rl.epsilon", [](RunConfig& c, const std::string& k, const std::string& v) { c.rl.epsilon = parse_double(k, v); }},
        {"rl.beta", [](RunConfig& c, const std::string& k, const std::string& v) { c.rl.beta = parse_double(k, v); }},
        {"rl.diffusion_steps", [](RunConfig& c, const std::string& k, const std::string& v) { c.rl.diffusion_steps = static_cast<int>(parse_long(k, v)); }},
        {"rl.lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.rl.lr = parse_double(k, v); }},
        {"rl.strategy", [](RunConfig& c, const std::string&, const std::string& v) { c.rl.strategy = parse_strategy(v); }},
        {"rl.noise_mode", [](RunConfig& c, const std::string&, const std::string& v) { c.rl.noise_mode = parse_noise_mode(v); }},
        {"rl.llada_samples", [](RunConfig& c, const std::string& k, const std::string& v) { c.rl.llada_samples = static_cast<int>(parse_long(k, v)); }},

        {"reward.task_kind", [](RunConfig& c, const std::string&, const std::string& v) { c.reward_kind = parse_reward_kind(v); }},
        {"reward.components", [](RunConfig& c, const std::string&, const std::string& v) { c.reward_components = v; }},

        {"train.lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.lr = parse_double(k, v); }},
        {"train.ckpt_interval", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.ckpt_interval = static_cast<int>(parse_long(k, v)); }},
        {"train.probe_interval", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.probe_interval = static_cast<int>(parse_long(k, v)); }},
        {"train.probe_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.probe_size = static_cast<int>(parse_long(k, v)); }},
        {"train.text_fraction", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.text_fraction = parse_double(k, v); }},

        {"task.kind", [](RunConfig& c, const std::string&, const std::string& v) { c.task.kind = v; }},
        {"task.difficulty", [](RunConfig& c, const std::string& k, const std::string& v) { c.task.difficulty = static_cast<int>(parse_long(k, v)); }},
        {"task.response_len", [](RunConfig& c, const std::string& k, const std::string& v) { c.task.response_len = static_cast<int>(parse_long(k, v)); }},
        {"task.t2i_response_len", [](RunConfig& c, const std::string& k, const std::string& v) { c.task.t2i_response_len = static_cast<int>(parse_long(k, v)); }},
        {"task.pool_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.task.pool_size = static_cast<int>(parse_long(k, v)); }},
    };
    return table;
}

}  // namespace

const char* run_stage_name(RunStage s) {
    switch (s) {
        case RunStage::PRETRAIN: return "pretrain";
        case RunStage::SFT: return "sft";
        case RunStage::RL: return "rl";
        case RunStage::SAMPLE: return "sample";
        case RunStage::ABLATE: return "ablate";
    }
    return "?";
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) {
            continue;  // blank/comment line
        }
        std::string value;
        std::getline(ls, value);
        size_t begin = value.find_first_not_of(" \t");
        size_t end = value.find_last_not_of(" \t\r");
        value = begin == std::string::npos ? "" : value.substr(begin, end - begin + 1);
        if (value.empty()) {
            throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                        ": key '" + key + "' has no value");
        }
        const auto it = setters().find(key);
        if (it == setters().end()) {
            throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                        ": unknown key '" + key + "'");
        }
        it->second(cfg, key, value);
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("config: cannot open '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string serialize_run_config(const RunConfig& c) {
    std::ostringstream out;
    out << "stage " << run_stage_name(c.stage) << "\n";
    out << "seed " << c.seed << "\n";
    out << "steps " << c.steps << "\n";
    out << "batch_size " << c.batch_size << "\n";
    out << "output_dir " << c.output_dir << "\n";
    out << "vocab.image_codes " << c.vocab_image_codes << "\n";
    out << "model.layers " << c.model.layers << "\n";
    out << "model.dim " << c.model.model_dim << "\n";
    out << "model.heads " << c.model.heads << "\n";
    out << "model.ffn_dim " << c.model.ffn_dim << "\n";
    out << "model.max_len " << c.model.max_len << "\n";
    out << "model.prompt_dropout " << format_double(c.model.prompt_dropout) << "\n";
    out << "sampler.length " << c.sampler.length << "\n";
    out << "sampler.steps " << c.sampler.steps << "\n";
    out << "sampler.block_size " << c.sampler.block_size << "\n";
    out << "sampler.schedule "
        << (c.sampler.schedule_kind == ScheduleKind::LINEAR ? "linear" : "cosine") << "\n";
    out << "sampler.unmask_rule "
        << (c.sampler.unmask_rule == UnmaskRule::FIXED_K ? "fixed_k" : "schedule") << "\n";
    out << "sampler.unmask_k " << c.sampler.unmask_k << "\n";
    out << "sampler.guidance " << format_double(c.sampler.guidance_scale) << "\n";
    out << "sampler.temperature " << format_double(c.sampler.temperature) << "\n";
    out << "rl.group_size " << c.rl.group_size << "\n";
    out << "rl.mu " << c.rl.mu << "\n";
    out << "rl.epsilon " << format_double(c.rl.epsilon) << "\n";
    out << "rl.beta " << format_double(c.rl.beta) << "\n";
    out << "rl.diffusion_steps " << c.rl.diffusion_steps << "\n";
    out << "rl.lr " << format_double(c.rl.lr) << "\n";
    out << "rl.strategy " << strategy_name(c.rl.strategy) << "\n";
    out << "rl.noise_mode " << (c.rl.noise_mode == NoiseMode::STRUCTURED ? "structured" : "random")
        << "\n";
    out << "rl.llada_samples " << c.rl.llada_samples << "\n";
    out << "reward.task_kind " << reward_task_name(c.reward_kind) << "\n";
    if (!c.reward_components.empty()) {
        out << "reward.components " << c.reward_components << "\n";
    }
    out << "train.lr " << format_double(c.train.lr) << "\n";
    out << "train.ckpt_interval " << c.train.ckpt_interval << "\n";
    out << "train.probe_interval " << c.train.probe_interval << "\n";
    out << "train.probe_size " << c.train.probe_size << "\n";
    out << "train.text_fraction " << format_double(c.train.text_fraction) << "\n";
    out << "task.kind " << c.task.kind << "\n";
    out << "task.difficulty " << c.task.difficulty << "\n";
    out << "task.response_len " << c.task.response_len << "\n";
    out << "task.t2i_response_len " << c.task.t2i_response_len << "\n";
    out << "task.pool_size " << c.task.pool_size << "\n";
    return out.str();
}

RewardSpec reward_spec_from(const RunConfig& cfg) {
    RewardSpec spec = RewardSpec::defaults_for(cfg.reward_kind);
    if (cfg.reward_components.empty()) {
        return spec;
    }
    spec.components.clear();
    std::istringstream in(cfg.reward_components);
    std::string item;
    while (std::getline(in, item, ',')) {
        const size_t colon = item.find(':');
        if (colon == std::string::npos) {
            throw std::invalid_argument("config: reward.components expects scorer:weight pairs");
        }
        RewardComponent comp;
        comp.scorer = item.substr(0, colon);
        comp.weight = parse_double("reward.components", item.substr(colon + 1));
        spec.components.push_back(comp);
    }
    return spec;
}

}  // namespace udlm
