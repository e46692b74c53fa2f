#include "udlm/harness.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "udlm/objectives.hpp"
#include "udlm/sampler.hpp"
#include "udlm/tokenize.hpp"

namespace fs = std::filesystem;

namespace udlm {

namespace {

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", x);
    return buf;
}

struct MetricsFile {
    std::string path;
    std::string header;
    std::vector<std::string> rows;

    /// Keep rows with step < start_step (resume truncation), drop the rest.
    void load_truncated(int start_step) {
        rows.clear();
        std::ifstream in(path);
        if (!in) {
            return;
        }
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (first) {
                first = false;
                continue;
            }
            if (line.empty()) {
                continue;
            }
            const int step = std::atoi(line.c_str());
            if (step < start_step) {
                rows.push_back(line);
            }
        }
    }

    void append(std::string row) { rows.push_back(std::move(row)); }

    void flush() const {
        std::ofstream out(path, std::ios::trunc);
        out << header << "\n";
        for (const auto& row : rows) {
            out << row << "\n";
        }
    }
};

std::string ckpt_path(const std::string& run_dir, uint64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "step_%06llu.bin", static_cast<unsigned long long>(step));
    return run_dir + "/ckpt/" + buf;
}

Stage stage_of(RunStage s) {
    switch (s) {
        case RunStage::PRETRAIN: return Stage::PRETRAIN;
        case RunStage::SFT: return Stage::SFT;
        case RunStage::RL: return Stage::RL;
        default: return Stage::NONE;
    }
}

/// Per-task validation loss on a fixed probe set with frozen corruption
/// (the same masks every probe so the trend is comparable across steps).
double probe_loss(const MaskPredictor& model, const RunConfig& cfg, const Vocabulary& v,
                  bool text_tasks) {
    double total = 0.0;
    const int n = cfg.train.probe_size;
    for (int i = 0; i < n; ++i) {
        const char* tag = text_tasks ? "probe.task.text" : "probe.task.t2i";
        Rng task_rng = derive_rng(cfg.seed, tag, static_cast<uint64_t>(i));
        const TaskInstance task =
            text_tasks ? gen_arithmetic_task(task_rng, cfg.task.difficulty, v, cfg.task.response_len)
                       : gen_t2i_task(task_rng, v, cfg.task.t2i_response_len);
        Rng eval_rng = derive_rng(cfg.seed, text_tasks ? "probe.eval.text" : "probe.eval.t2i",
                                  static_cast<uint64_t>(i));
        LayoutSequence x0 = task.prompt;
        x0.append(task.sft_response);
        const double t = sample_mask_ratio(eval_rng);
        const MaskedSample sample = forward_mask(x0, t, MaskScope::RESPONSE_ONLY, v, eval_rng);
        total += masked_ce_loss(model, sample).value /
                 static_cast<double>(sample.mask_positions.size());
    }
    return total / static_cast<double>(n);
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("harness: cannot write '" + path + "'");
    }
    out << content;
}

struct ResumeState {
    int start_step = 0;
    bool resumed = false;
};

}  // namespace

std::string output_root() {
    const char* env = std::getenv("UDLM_OUTPUT_ROOT");
    return env && *env ? env : ".";
}

bool batch_slot_is_text(const RunConfig& cfg, int slot) {
    if (cfg.task.kind == "arithmetic") {
        return true;
    }
    if (cfg.task.kind == "t2i") {
        return false;
    }
    const int text_count = static_cast<int>(
        std::lround(cfg.train.text_fraction * static_cast<double>(cfg.batch_size)));
    return slot < text_count;
}

TaskInstance make_task(const RunConfig& cfg, const Vocabulary& v, uint64_t seed, uint64_t index) {
    Rng rng = derive_rng(seed, "task.stream", index);
    bool text = true;
    if (cfg.task.kind == "t2i") {
        text = false;
    } else if (cfg.task.kind == "mixed") {
        text = batch_slot_is_text(cfg, static_cast<int>(index % static_cast<uint64_t>(cfg.batch_size)));
    } else if (cfg.task.kind != "arithmetic") {
        throw std::invalid_argument("harness: unknown task.kind '" + cfg.task.kind + "'");
    }
    return text ? gen_arithmetic_task(rng, cfg.task.difficulty, v, cfg.task.response_len)
                : gen_t2i_task(rng, v, cfg.task.t2i_response_len);
}

std::vector<TaskInstance> make_task_pool(const RunConfig& cfg, const Vocabulary& v, uint64_t seed,
                                         int n) {
    std::vector<TaskInstance> pool;
    pool.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        pool.push_back(make_task(cfg, v, seed, static_cast<uint64_t>(i)));
    }
    return pool;
}

TaskSource make_rl_task_source(const RunConfig& cfg, const Vocabulary& v,
                               std::shared_ptr<std::vector<TaskInstance>>& pool_out) {
    if (cfg.task.pool_size > 0) {
        pool_out = std::make_shared<std::vector<TaskInstance>>(
            make_task_pool(cfg, v, cfg.seed, cfg.task.pool_size));
        auto pool = pool_out;
        return [pool](Rng& rng) { return (*pool)[uniform_below(rng, pool->size())]; };
    }
    const RunConfig cfg_copy = cfg;
    const Vocabulary* vp = &v;
    return [cfg_copy, vp](Rng& rng) {
        const uint64_t index = rng();
        return make_task(cfg_copy, *vp, cfg_copy.seed, index);
    };
}

std::string format_rl_row(const RLStepMetrics& m) {
    std::ostringstream row;
    row << m.step << "," << format_double(m.mean_reward) << "," << format_double(m.kl) << ","
        << format_double(m.clip_fraction) << "," << format_double(m.loss) << ","
        << strategy_name(m.strategy);
    return row.str();
}

std::string run_stage(const RunConfig& cfg, const std::string& init_ckpt) {
    const Vocabulary vocab = Vocabulary::make_default(cfg.vocab_image_codes);
    ModelConfig model_cfg = cfg.model;
    model_cfg.vocab_size = vocab.total_size();

    const std::string run_dir = output_root() + "/" + cfg.output_dir;
    fs::create_directories(run_dir + "/ckpt");
    write_text(run_dir + "/config.lock", serialize_run_config(cfg));
    write_text(run_dir + "/vocab.txt", vocab.serialize());

    if (cfg.stage == RunStage::SAMPLE || cfg.stage == RunStage::ABLATE) {
        throw std::invalid_argument("run_stage: sample/ablate are driven by the CLI");
    }
    const Stage target = stage_of(cfg.stage);

    // Resolve the initial model and resume point.
    ResumeState resume;
    MaskPredictor model(model_cfg);
    AdamState adam(model, cfg.stage == RunStage::RL ? cfg.rl.lr : cfg.train.lr);
    MaskPredictor ref_model(model_cfg);  // only used by RL

    if (init_ckpt.empty()) {
        if (cfg.stage != RunStage::PRETRAIN) {
            throw std::invalid_argument("run_stage: " + std::string(run_stage_name(cfg.stage)) +
                                        " requires an initial checkpoint");
        }
        Rng init_rng = derive_rng(cfg.seed, "init", 0);
        model = MaskPredictor(model_cfg, init_rng);
    } else {
        CheckpointData ckpt = load_checkpoint(init_ckpt, vocab);
        if (!(ckpt.config == model_cfg)) {
            throw std::invalid_argument("run_stage: checkpoint model config does not match");
        }
        if (ckpt.stage == target) {
            resume.resumed = true;
            resume.start_step = static_cast<int>(ckpt.step);
            model.params() = ckpt.params;
            if (ckpt.has_adam) {
                adam.restore(ckpt.adam_m, ckpt.adam_v, ckpt.adam_t);
            }
        } else {
            const Stage want = cfg.stage == RunStage::SFT ? Stage::PRETRAIN : Stage::SFT;
            if (cfg.stage == RunStage::PRETRAIN || ckpt.stage != want) {
                throw std::invalid_argument(
                    std::string("run_stage: stage ordering violated: ") + run_stage_name(cfg.stage) +
                    " cannot start from a " + stage_name(ckpt.stage) + " checkpoint");
            }
            model.params() = ckpt.params;
        }
    }

    if (cfg.stage == RunStage::RL) {
        // The reference policy is the (frozen) initial SFT policy. On
        // resume we reload it from the original init checkpoint, which the
        // run directory records.
        const std::string ref_path = run_dir + "/ref_ckpt.txt";
        std::string ref_source = init_ckpt;
        if (resume.resumed) {
            std::ifstream in(ref_path);
            if (!in || !std::getline(in, ref_source) || ref_source.empty()) {
                throw std::runtime_error("run_stage: resume needs " + ref_path);
            }
            CheckpointData ref_ckpt = load_checkpoint(ref_source, vocab);
            ref_model.params() = ref_ckpt.params;
        } else {
            write_text(ref_path, init_ckpt + "\n");
            ref_model.params() = model.params();
        }
    }

    MetricsFile metrics;
    metrics.path = run_dir + "/metrics.csv";
    metrics.header = cfg.stage == RunStage::RL ? kRLMetricsHeader : kTrainMetricsHeader;
    if (resume.resumed) {
        metrics.load_truncated(resume.start_step);
    }

    const auto checkpoint = [&](int completed_steps) {
        save_checkpoint(ckpt_path(run_dir, static_cast<uint64_t>(completed_steps)), model, vocab,
                        target, static_cast<uint64_t>(completed_steps), &adam);
        metrics.flush();
    };

    if (cfg.stage == RunStage::RL) {
        const RewardSpec spec = reward_spec_from(cfg);
        const ScorerRegistry registry = ScorerRegistry::with_defaults();
        std::shared_ptr<std::vector<TaskInstance>> pool;
        const TaskSource stream = make_rl_task_source(cfg, vocab, pool);
        unigrpo_train(
            model, ref_model, adam, stream, spec, registry, cfg.rl, cfg.sampler, vocab, cfg.steps,
            cfg.seed,
            [&](const RLStepMetrics& m) {
                metrics.append(format_rl_row(m));
                if ((m.step + 1) % cfg.train.ckpt_interval == 0) {
                    checkpoint(m.step + 1);
                }
            },
            resume.start_step);
        checkpoint(cfg.steps);
        metrics.flush();
        return run_dir;
    }

    // PRETRAIN / SFT loop.
    const bool pretrain = cfg.stage == RunStage::PRETRAIN;
    for (int step = resume.start_step; step < cfg.steps; ++step) {
        Rng loss_rng = derive_rng(cfg.seed, pretrain ? "pretrain.loss" : "sft.loss",
                                  static_cast<uint64_t>(step));

        std::vector<TaskInstance> tasks;
        tasks.reserve(static_cast<size_t>(cfg.batch_size));
        std::vector<LayoutSequence> full_sequences(static_cast<size_t>(cfg.batch_size));
        std::vector<BatchItem> batch(static_cast<size_t>(cfg.batch_size));
        for (int b = 0; b < cfg.batch_size; ++b) {
            tasks.push_back(make_task(cfg, vocab, cfg.seed,
                                      static_cast<uint64_t>(step) * static_cast<uint64_t>(cfg.batch_size) +
                                          static_cast<uint64_t>(b)));
        }
        for (int b = 0; b < cfg.batch_size; ++b) {
            auto& item = batch[static_cast<size_t>(b)];
            if (pretrain) {
                full_sequences[static_cast<size_t>(b)] = tasks[static_cast<size_t>(b)].prompt;
                full_sequences[static_cast<size_t>(b)].append(tasks[static_cast<size_t>(b)].sft_response);
                item.sequence = &full_sequences[static_cast<size_t>(b)];
            } else {
                item.prompt = &tasks[static_cast<size_t>(b)].prompt;
                item.sequence = &tasks[static_cast<size_t>(b)].sft_response;
            }
        }

        Params grads = model.zero_like();
        const LossReport report = batch_loss(
            model, batch, pretrain ? LossKind::UNIFIED : LossKind::MIXED_SFT, vocab, loss_rng, &grads);
        adam.step(model, grads);

        std::ostringstream row;
        row << step << "," << format_double(report.value) << ",";
        if (cfg.train.probe_interval > 0 &&
            (step % cfg.train.probe_interval == 0 || step + 1 == cfg.steps)) {
            // probe only the task families this run actually trains
            if (cfg.task.kind != "t2i") {
                row << format_double(probe_loss(model, cfg, vocab, true));
            }
            row << ",";
            if (cfg.task.kind != "arithmetic") {
                row << format_double(probe_loss(model, cfg, vocab, false));
            }
        } else {
            row << ",";
        }
        metrics.append(row.str());

        if ((step + 1) % cfg.train.ckpt_interval == 0) {
            checkpoint(step + 1);
        }
    }
    checkpoint(cfg.steps);
    metrics.flush();
    return run_dir;
}

std::string run_ablation(const std::vector<Strategy>& strategies,
                         const std::vector<uint64_t>& seeds, const RunConfig& cfg,
                         const std::string& init_ckpt) {
    const std::string ablation_dir = output_root() + "/" + cfg.output_dir + "/ablation";
    fs::create_directories(ablation_dir);

    std::ofstream combined(ablation_dir + "/comparison.csv", std::ios::trunc);
    combined << "strategy,seed,step,mean_reward\n";

    for (Strategy strategy : strategies) {
        for (uint64_t seed : seeds) {
            // Identical config except for the likelihood strategy and seed.
            RunConfig run_cfg = cfg;
            run_cfg.stage = RunStage::RL;
            run_cfg.rl.strategy = strategy;
            run_cfg.seed = seed;
            run_cfg.output_dir = cfg.output_dir + "/ablation/" + strategy_name(strategy) + "_seed" +
                                 std::to_string(seed);
            const std::string run_dir = run_stage(run_cfg, init_ckpt);

            std::ifstream in(run_dir + "/metrics.csv");
            std::string line;
            bool first = true;
            while (std::getline(in, line)) {
                if (first || line.empty()) {
                    first = false;
                    continue;
                }
                std::istringstream ls(line);
                std::string step_s, reward_s;
                std::getline(ls, step_s, ',');
                std::getline(ls, reward_s, ',');
                combined << strategy_name(strategy) << "," << seed << "," << step_s << ","
                         << reward_s << "\n";
            }
        }
    }
    return ablation_dir;
}

}  // namespace udlm
