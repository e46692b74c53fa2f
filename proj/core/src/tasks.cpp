#include "udlm/tasks.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

namespace udlm {

namespace {

struct ShapePattern {
    std::string name;
    std::vector<std::pair<int, int>> cells;  // normalized (row, col) offsets
};

const std::vector<ShapePattern>& shape_patterns() {
    static const std::vector<ShapePattern> shapes = {
        {"square", {{0, 0}, {0, 1}, {1, 0}, {1, 1}}},
        {"line", {{0, 0}, {0, 1}, {0, 2}}},
        {"cross", {{0, 1}, {1, 0}, {1, 1}, {1, 2}, {2, 1}}},
    };
    return shapes;
}

const ShapePattern* find_shape(const std::string& name) {
    for (const auto& s : shape_patterns()) {
        if (s.name == name) {
            return &s;
        }
    }
    return nullptr;
}

const ColorBand* find_band(const std::string& name) {
    for (const auto& b : color_bands()) {
        if (b.name == name) {
            return &b;
        }
    }
    return nullptr;
}

std::vector<std::vector<std::pair<int, int>>> connected_components(const CodeGrid& grid) {
    const int rows = static_cast<int>(grid.size());
    const int cols = rows > 0 ? static_cast<int>(grid[0].size()) : 0;
    std::vector<std::vector<bool>> seen(static_cast<size_t>(rows),
                                        std::vector<bool>(static_cast<size_t>(cols), false));
    std::vector<std::vector<std::pair<int, int>>> comps;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (grid[static_cast<size_t>(r)][static_cast<size_t>(c)] == 0 ||
                seen[static_cast<size_t>(r)][static_cast<size_t>(c)]) {
                continue;
            }
            std::vector<std::pair<int, int>> comp;
            std::vector<std::pair<int, int>> stack{{r, c}};
            seen[static_cast<size_t>(r)][static_cast<size_t>(c)] = true;
            while (!stack.empty()) {
                auto [cr, cc] = stack.back();
                stack.pop_back();
                comp.push_back({cr, cc});
                const int dr[] = {1, -1, 0, 0};
                const int dc[] = {0, 0, 1, -1};
                for (int d = 0; d < 4; ++d) {
                    int nr = cr + dr[d], nc = cc + dc[d];
                    if (nr >= 0 && nr < rows && nc >= 0 && nc < cols &&
                        !seen[static_cast<size_t>(nr)][static_cast<size_t>(nc)] &&
                        grid[static_cast<size_t>(nr)][static_cast<size_t>(nc)] != 0) {
                        seen[static_cast<size_t>(nr)][static_cast<size_t>(nc)] = true;
                        stack.push_back({nr, nc});
                    }
                }
            }
            comps.push_back(std::move(comp));
        }
    }
    return comps;
}

bool component_matches(const std::vector<std::pair<int, int>>& comp, const ShapePattern& shape) {
    if (comp.size() != shape.cells.size()) {
        return false;
    }
    int min_r = comp[0].first, min_c = comp[0].second;
    for (const auto& [r, c] : comp) {
        min_r = std::min(min_r, r);
        min_c = std::min(min_c, c);
    }
    std::set<std::pair<int, int>> norm;
    for (const auto& [r, c] : comp) {
        norm.insert({r - min_r, c - min_c});
    }
    std::set<std::pair<int, int>> want(shape.cells.begin(), shape.cells.end());
    return norm == want;
}

/// Evaluate "p OP q" for single binary integer operations.
std::optional<long> eval_binop(const std::string& expr) {
    for (size_t i = 1; i < expr.size(); ++i) {
        const char op = expr[i];
        if (op == '+' || op == '-' || op == '*' || op == '/') {
            try {
                size_t used = 0;
                const long lhs = std::stol(expr.substr(0, i), &used);
                if (used != i) {
                    return std::nullopt;
                }
                const long rhs = std::stol(expr.substr(i + 1), &used);
                if (used != expr.size() - i - 1) {
                    return std::nullopt;
                }
                switch (op) {
                    case '+': return lhs + rhs;
                    case '-': return lhs - rhs;
                    case '*': return lhs * rhs;
                    case '/': return rhs != 0 && lhs % rhs == 0 ? std::optional<long>(lhs / rhs)
                                                               : std::nullopt;
                }
            } catch (const std::exception&) {
                return std::nullopt;
            }
        }
    }
    return std::nullopt;
}

}  // namespace

int arithmetic_operand_bound(int difficulty) {
    return 3 + 2 * std::max(0, difficulty);
}

TaskInstance gen_arithmetic_task(Rng& rng, int difficulty, const Vocabulary& v, int pad_to) {
    const int m = std::min(8, arithmetic_operand_bound(difficulty));

    const long x = uniform_int(rng, 1, m);              // a - b
    const long b = uniform_int(rng, 1, 9 - x);
    const long a = b + x;
    const long c = uniform_int(rng, 1, m);
    const long d = uniform_int(rng, 1, m);
    const long y = c + d;
    const long z = x * y;
    std::vector<long> divisors;
    for (long e = 1; e <= 9; ++e) {
        if (z % e == 0) {
            divisors.push_back(e);
        }
    }
    const long e = divisors[static_cast<size_t>(uniform_below(rng, divisors.size()))];
    const long w = z / e;

    std::ostringstream prompt;
    prompt << "compute (" << a << "-" << b << ")*(" << c << "+" << d << ")/" << e;
    std::ostringstream trace;
    trace << a << "-" << b << "=" << x << "; " << c << "+" << d << "=" << y << "; " << x << "*" << y
          << "=" << z << "; " << z << "/" << e << "=" << w;

    TaskInstance task;
    task.kind = RewardTaskKind::TEXT_REASONING;
    task.prompt_text = prompt.str();
    task.gold_answer = std::to_string(w);
    task.prompt = encode_text(task.prompt_text, v, Segment::PROMPT);

    LayoutSequence reasoning;
    reasoning.push_back(v.special_id(Special::THINK_OPEN), Segment::RESPONSE, Modality::TEXT);
    reasoning.append(encode_text(trace.str(), v));
    reasoning.push_back(v.special_id(Special::THINK_CLOSE), Segment::RESPONSE, Modality::TEXT);
    task.sft_response =
        pad_response(wrap_cot(reasoning, encode_text(task.gold_answer, v), v), pad_to, v);
    return task;
}

bool verify_arithmetic_trace(const std::string& trace, const std::string& gold) {
    std::string last_value;
    size_t start = 0;
    while (start < trace.size()) {
        size_t end = trace.find(';', start);
        if (end == std::string::npos) {
            end = trace.size();
        }
        std::string step = trace.substr(start, end - start);
        // strip surrounding spaces
        while (!step.empty() && step.front() == ' ') step.erase(step.begin());
        while (!step.empty() && step.back() == ' ') step.pop_back();
        const size_t eq = step.find('=');
        if (eq == std::string::npos) {
            return false;
        }
        const std::string lhs = step.substr(0, eq);
        const std::string rhs = step.substr(eq + 1);
        const auto value = eval_binop(lhs);
        if (!value || std::to_string(*value) != rhs) {
            return false;
        }
        last_value = rhs;
        start = end + 1;
    }
    return !last_value.empty() && last_value == gold;
}

const std::vector<ColorBand>& color_bands() {
    static const std::vector<ColorBand> bands = {
        {"red", 1, 16},
        {"green", 16, 32},
        {"blue", 32, 48},
        {"yellow", 48, 64},
    };
    return bands;
}

const std::vector<std::string>& shape_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& s : shape_patterns()) {
            n.push_back(s.name);
        }
        return n;
    }();
    return names;
}

std::optional<T2IPrompt> parse_t2i_prompt(const std::string& prompt) {
    T2IPrompt out;
    std::istringstream in(prompt);
    std::string field;
    bool have_count = false, have_color = false, have_shape = false;
    while (in >> field) {
        const size_t eq = field.find('=');
        if (eq == std::string::npos) {
            return std::nullopt;
        }
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        if (key == "count") {
            try {
                out.count = std::stoi(value);
            } catch (const std::exception&) {
                return std::nullopt;
            }
            have_count = true;
        } else if (key == "color") {
            out.color = value;
            have_color = true;
        } else if (key == "shape") {
            out.shape = value;
            have_shape = true;
        } else {
            return std::nullopt;
        }
    }
    if (!have_count || !have_color || !have_shape || out.count < 1) {
        return std::nullopt;
    }
    return out;
}

CodeGrid render_motif_grid(const T2IPrompt& p, Rng& rng) {
    const ShapePattern* shape = find_shape(p.shape);
    const ColorBand* band = find_band(p.color);
    if (!shape || !band) {
        throw std::invalid_argument("render_motif_grid: unknown shape or color");
    }
    CodeGrid grid(kGridSide, std::vector<int>(kGridSide, 0));
    std::set<std::pair<int, int>> occupied_or_border;

    int placed = 0;
    int attempts = 0;
    while (placed < p.count) {
        if (++attempts > 2000) {
            throw std::runtime_error("render_motif_grid: cannot place motifs without contact");
        }
        const int r0 = static_cast<int>(uniform_below(rng, kGridSide));
        const int c0 = static_cast<int>(uniform_below(rng, kGridSide));
        bool ok = true;
        for (const auto& [dr, dc] : shape->cells) {
            const int r = r0 + dr, c = c0 + dc;
            if (r >= kGridSide || c >= kGridSide || occupied_or_border.count({r, c})) {
                ok = false;
                break;
            }
        }
        if (!ok) {
            continue;
        }
        for (const auto& [dr, dc] : shape->cells) {
            const int r = r0 + dr, c = c0 + dc;
            grid[static_cast<size_t>(r)][static_cast<size_t>(c)] =
                band->begin + static_cast<int>(uniform_below(
                                  rng, static_cast<uint64_t>(band->end - band->begin)));
        }
        // Forbid the motif cells and their 4-neighbourhood for later motifs
        // so components never merge.
        for (const auto& [dr, dc] : shape->cells) {
            const int r = r0 + dr, c = c0 + dc;
            occupied_or_border.insert({r, c});
            occupied_or_border.insert({r + 1, c});
            occupied_or_border.insert({r - 1, c});
            occupied_or_border.insert({r, c + 1});
            occupied_or_border.insert({r, c - 1});
        }
        ++placed;
    }
    return grid;
}

TaskInstance gen_t2i_task(Rng& rng, const Vocabulary& v, int pad_to) {
    if (v.codebook_size() != kT2ICodebook) {
        throw std::invalid_argument("gen_t2i_task: the toy grammar requires a 64-code codebook");
    }
    T2IPrompt p;
    p.count = static_cast<int>(uniform_int(rng, 1, 3));
    p.color = color_bands()[static_cast<size_t>(uniform_below(rng, color_bands().size()))].name;
    p.shape = shape_names()[static_cast<size_t>(uniform_below(rng, shape_names().size()))];

    TaskInstance task;
    task.kind = RewardTaskKind::T2I;
    task.prompt_text =
        "count=" + std::to_string(p.count) + " color=" + p.color + " shape=" + p.shape;
    task.prompt = encode_text(task.prompt_text, v, Segment::PROMPT);
    task.gold_grid = render_motif_grid(p, rng);
    task.gold_answer = "";

    LayoutSequence reasoning;
    reasoning.push_back(v.special_id(Special::THINK_OPEN), Segment::RESPONSE, Modality::TEXT);
    reasoning.append(encode_text(
        "place " + std::to_string(p.count) + " " + p.color + " " + p.shape + " motifs", v));
    reasoning.push_back(v.special_id(Special::THINK_CLOSE), Segment::RESPONSE, Modality::TEXT);
    task.sft_response =
        pad_response(wrap_cot(reasoning, grid_to_tokens(task.gold_grid, v), v), pad_to, v);
    return task;
}

double constraint_match_score(const CodeGrid& grid, const std::string& prompt) {
    const auto parsed = parse_t2i_prompt(prompt);
    if (!parsed) {
        return 0.0;
    }
    const ShapePattern* shape = find_shape(parsed->shape);
    const ColorBand* band = find_band(parsed->color);
    if (!shape || !band) {
        return 0.0;
    }
    const auto comps = connected_components(grid);

    const int detected = static_cast<int>(comps.size());
    const int target = parsed->count;
    double count_score = 0.0;
    if (detected > 0) {
        count_score = 1.0 - static_cast<double>(std::abs(detected - target)) /
                                static_cast<double>(std::max(detected, target));
    }

    int colored = 0, total_cells = 0;
    for (const auto& row : grid) {
        for (int code : row) {
            if (code != 0) {
                ++total_cells;
                if (code >= band->begin && code < band->end) {
                    ++colored;
                }
            }
        }
    }
    const double color_score =
        total_cells > 0 ? static_cast<double>(colored) / static_cast<double>(total_cells) : 0.0;

    double shaped = 0.0;
    for (const auto& comp : comps) {
        if (component_matches(comp, *shape)) {
            shaped += 1.0;
        }
    }
    const double shape_score = comps.empty() ? 0.0 : shaped / static_cast<double>(comps.size());

    return 10.0 * (count_score + color_score + shape_score) / 3.0;
}

double motif_quality_score(const CodeGrid& grid, const std::string&) {
    const auto comps = connected_components(grid);
    int total_cells = 0;
    int shaped_cells = 0;
    for (const auto& comp : comps) {
        total_cells += static_cast<int>(comp.size());
        for (const auto& s : shape_patterns()) {
            if (component_matches(comp, s)) {
                shaped_cells += static_cast<int>(comp.size());
                break;
            }
        }
    }
    if (total_cells == 0) {
        return 0.0;
    }
    return 10.0 * static_cast<double>(shaped_cells) / static_cast<double>(total_cells);
}

LayoutSequence pad_response(LayoutSequence r, int pad_to, const Vocabulary& v) {
    if (pad_to > 0 && static_cast<int>(r.size()) > pad_to) {
        throw std::invalid_argument("pad_response: response longer than pad_to (" +
                                    std::to_string(r.size()) + " > " + std::to_string(pad_to) + ")");
    }
    while (pad_to > 0 && static_cast<int>(r.size()) < pad_to) {
        r.push_back(v.special_id(Special::EOS), Segment::RESPONSE, Modality::TEXT);
    }
    return r;
}

}  // namespace udlm
