// Command-line front end: train / sft / rl / sample / inpaint / ablate.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "udlm/checkpoint.hpp"
#include "udlm/config.hpp"
#include "udlm/harness.hpp"
#include "udlm/sampler.hpp"
#include "udlm/tokenize.hpp"

namespace {

using namespace udlm;

struct SampleArgs {
    std::string ckpt;
    std::string prompt_text;
    std::string mode = "text";  // text | image
    std::string out_file;
    int length = 40;
    int steps = 20;
    int block_size = 20;
    std::string schedule = "linear";
    std::string unmask_rule;
    int unmask_k = 2;
    double guidance = 0.0;
    double temperature = 0.0;
    uint64_t seed = 0;
};

SamplerConfig to_sampler_config(const SampleArgs& a) {
    SamplerConfig cfg;
    cfg.length = a.length;
    cfg.steps = a.steps;
    cfg.block_size = a.block_size;
    cfg.schedule_kind = a.schedule == "cosine" ? ScheduleKind::COSINE : ScheduleKind::LINEAR;
    if (a.unmask_rule.empty()) {
        cfg.unmask_rule = a.mode == "image" ? UnmaskRule::SCHEDULE_DERIVED : UnmaskRule::FIXED_K;
    } else {
        cfg.unmask_rule =
            a.unmask_rule == "schedule" ? UnmaskRule::SCHEDULE_DERIVED : UnmaskRule::FIXED_K;
    }
    cfg.unmask_k = a.unmask_k;
    cfg.guidance_scale = a.guidance;
    cfg.temperature = a.temperature;
    cfg.response_modality = a.mode == "image" ? Modality::IMAGE : Modality::TEXT;
    return cfg;
}

void write_grid(std::ostream& out, const CodeGrid& grid) {
    for (const auto& row : grid) {
        for (size_t c = 0; c < row.size(); ++c) {
            out << (c ? " " : "") << row[c];
        }
        out << "\n";
    }
}

int cmd_sample(const SampleArgs& args) {
    const CheckpointData ckpt = load_checkpoint(args.ckpt);
    const MaskPredictor model = ckpt.make_model();
    const Vocabulary& vocab = ckpt.vocab;
    Rng rng = make_rng(args.seed);

    const LayoutSequence prompt = encode_text(args.prompt_text, vocab, Segment::PROMPT);
    const SamplerConfig cfg = to_sampler_config(args);

    LayoutSequence full;
    if (args.mode == "image") {
        full = parallel_generate(model, prompt, vocab, cfg, rng);
        const LayoutSequence response = full.slice(prompt.size(), full.size());
        const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cfg.length))));
        if (side * side != cfg.length) {
            std::cerr << "sample: --length must be a perfect square in image mode\n";
            return 1;
        }
        const CodeGrid grid = tokens_to_grid(response, GridShape::from_tokens(side, side), vocab);
        if (args.out_file.empty()) {
            write_grid(std::cout, grid);
        } else {
            std::ofstream out(args.out_file, std::ios::trunc);
            write_grid(out, grid);
            std::cout << "wrote " << args.out_file << "\n";
        }
    } else {
        full = semi_ar_generate(model, prompt, vocab, cfg, rng);
        const LayoutSequence response = full.slice(prompt.size(), full.size());
        std::cout << render_tokens(response, vocab) << "\n";
    }
    return 0;
}

struct InpaintArgs {
    std::string ckpt;
    std::string text;
    std::string grid_file;
    std::string out_file;
    char mask_char = '?';
    int steps = 16;
    std::string schedule = "linear";
    double guidance = 0.0;
    double temperature = 0.0;
    uint64_t seed = 0;
};

int cmd_inpaint(const InpaintArgs& args) {
    const CheckpointData ckpt = load_checkpoint(args.ckpt);
    const MaskPredictor model = ckpt.make_model();
    const Vocabulary& vocab = ckpt.vocab;
    Rng rng = make_rng(args.seed);

    SamplerConfig cfg;
    cfg.steps = args.steps;
    cfg.schedule_kind = args.schedule == "cosine" ? ScheduleKind::COSINE : ScheduleKind::LINEAR;
    cfg.unmask_rule = UnmaskRule::SCHEDULE_DERIVED;
    cfg.guidance_scale = args.guidance;
    cfg.temperature = args.temperature;

    if (!args.grid_file.empty()) {
        std::ifstream in(args.grid_file);
        if (!in) {
            std::cerr << "inpaint: cannot open " << args.grid_file << "\n";
            return 1;
        }
        LayoutSequence partial;
        std::vector<int> row_lengths;
        std::string line;
        int width = -1;
        int rows = 0;
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            std::istringstream ls(line);
            int value = 0, count = 0;
            while (ls >> value) {
                // -1 marks a cell to fill
                partial.push_back(value < 0 ? vocab.mask_id() : vocab.image_id(value),
                                  Segment::RESPONSE, Modality::IMAGE);
                ++count;
            }
            if (width < 0) {
                width = count;
            } else if (width != count) {
                std::cerr << "inpaint: ragged grid file\n";
                return 1;
            }
            ++rows;
        }
        const LayoutSequence filled = inpaint(model, partial, vocab, cfg, rng);
        const CodeGrid grid =
            tokens_to_grid(filled, GridShape::from_tokens(rows, width), vocab);
        if (args.out_file.empty()) {
            write_grid(std::cout, grid);
        } else {
            std::ofstream out(args.out_file, std::ios::trunc);
            write_grid(out, grid);
            std::cout << "wrote " << args.out_file << "\n";
        }
        return 0;
    }

    LayoutSequence partial;
    for (char c : args.text) {
        if (c == args.mask_char) {
            partial.push_back(vocab.mask_id(), Segment::RESPONSE, Modality::TEXT);
        } else {
            const int id = vocab.char_id(c);
            if (id < 0) {
                std::cerr << "inpaint: unsupported character '" << c << "'\n";
                return 1;
            }
            partial.push_back(id, Segment::RESPONSE, Modality::TEXT);
        }
    }
    const LayoutSequence filled = inpaint(model, partial, vocab, cfg, rng);
    std::cout << render_tokens(filled, vocab) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale unified masked-diffusion language modeling"};
    app.require_subcommand(1);

    std::string config_path;
    std::string init_ckpt;

    auto add_stage = [&](const std::string& name, const std::string& desc, RunStage stage,
                         bool needs_init) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("--config", config_path, "run config file")->required();
        auto* init = sub->add_option("--init", init_ckpt, "initial checkpoint");
        if (needs_init) {
            init->required();
        }
        sub->callback([&, stage]() {
            RunConfig cfg = load_run_config(config_path);
            cfg.stage = stage;
            const std::string dir = run_stage(cfg, init_ckpt);
            std::cout << dir << "\n";
        });
        return sub;
    };

    add_stage("train", "unified pretraining over mixed text/image batches", RunStage::PRETRAIN,
              false);
    add_stage("sft", "mixed chain-of-thought finetuning", RunStage::SFT, true);
    add_stage("rl", "policy-gradient finetuning with rule-based rewards", RunStage::RL, true);

    SampleArgs sample_args;
    CLI::App* sample = app.add_subcommand("sample", "generate from a checkpoint");
    sample->add_option("--ckpt", sample_args.ckpt)->required();
    sample->add_option("--prompt", sample_args.prompt_text)->required();
    sample->add_option("--mode", sample_args.mode)->check(CLI::IsMember({"text", "image"}));
    sample->add_option("--length", sample_args.length);
    sample->add_option("--steps", sample_args.steps);
    sample->add_option("--block-size", sample_args.block_size);
    sample->add_option("--schedule", sample_args.schedule)
        ->check(CLI::IsMember({"linear", "cosine"}));
    sample->add_option("--unmask-rule", sample_args.unmask_rule)
        ->check(CLI::IsMember({"fixed_k", "schedule"}));
    sample->add_option("--unmask-k", sample_args.unmask_k);
    sample->add_option("--guidance", sample_args.guidance);
    sample->add_option("--temperature", sample_args.temperature);
    sample->add_option("--seed", sample_args.seed);
    sample->add_option("--out", sample_args.out_file, "grid output file (image mode)");
    sample->callback([&]() {
        if (cmd_sample(sample_args) != 0) {
            throw CLI::RuntimeError(1);
        }
    });

    InpaintArgs inpaint_args;
    CLI::App* inp = app.add_subcommand("inpaint", "fill MASK positions of a partial input");
    inp->add_option("--ckpt", inpaint_args.ckpt)->required();
    inp->add_option("--text", inpaint_args.text, "text with mask characters");
    inp->add_option("--grid", inpaint_args.grid_file, "integer grid file, -1 = fill");
    inp->add_option("--mask-char", inpaint_args.mask_char);
    inp->add_option("--steps", inpaint_args.steps);
    inp->add_option("--schedule", inpaint_args.schedule)
        ->check(CLI::IsMember({"linear", "cosine"}));
    inp->add_option("--guidance", inpaint_args.guidance);
    inp->add_option("--temperature", inpaint_args.temperature);
    inp->add_option("--seed", inpaint_args.seed);
    inp->add_option("--out", inpaint_args.out_file);
    inp->callback([&]() {
        if (inpaint_args.text.empty() == inpaint_args.grid_file.empty()) {
            std::cerr << "inpaint: pass exactly one of --text or --grid\n";
            throw CLI::RuntimeError(1);
        }
        if (cmd_inpaint(inpaint_args) != 0) {
            throw CLI::RuntimeError(1);
        }
    });

    std::string strategies_csv = "unigrpo,d1,llada";
    int n_seeds = 3;
    CLI::App* ablate = app.add_subcommand("ablate", "compare likelihood strategies");
    ablate->add_option("--config", config_path)->required();
    ablate->add_option("--init", init_ckpt)->required();
    ablate->add_option("--strategies", strategies_csv, "comma list of unigrpo,d1,llada");
    ablate->add_option("--seeds", n_seeds, "number of seeds (0..n-1)");
    ablate->callback([&]() {
        RunConfig cfg = load_run_config(config_path);
        cfg.stage = RunStage::ABLATE;
        std::vector<Strategy> strategies;
        std::istringstream in(strategies_csv);
        std::string item;
        while (std::getline(in, item, ',')) {
            if (item == "unigrpo") strategies.push_back(Strategy::UNIGRPO);
            else if (item == "d1") strategies.push_back(Strategy::D1);
            else if (item == "llada") strategies.push_back(Strategy::LLADA);
            else {
                std::cerr << "ablate: unknown strategy '" << item << "'\n";
                throw CLI::RuntimeError(1);
            }
        }
        std::vector<uint64_t> seeds;
        for (int s = 0; s < n_seeds; ++s) {
            seeds.push_back(static_cast<uint64_t>(s));
        }
        std::cout << run_ablation(strategies, seeds, cfg, init_ckpt) << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
