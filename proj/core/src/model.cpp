#include "udlm/model.hpp"

#include <cmath>
#include <stdexcept>

namespace udlm {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;
constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599344;
constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_grad(double x) {
    const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    return phi + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

/// Row-wise layer norm. Caches xhat and rstd for the backward pass.
void layer_norm(const Mat& x, const Vec& g, const Vec& b, Mat& out, Mat& xhat, Vec& rstd) {
    const auto rows = x.rows();
    const auto cols = x.cols();
    out.resize(rows, cols);
    xhat.resize(rows, cols);
    rstd.resize(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().mean();
        const double rs = 1.0 / std::sqrt(var + kLnEps);
        rstd(r) = rs;
        xhat.row(r) = ((x.row(r).array() - mean) * rs).matrix();
        out.row(r) = (xhat.row(r).array() * g.transpose().array() + b.transpose().array()).matrix();
    }
}

void layer_norm_backward(const Mat& dout, const Mat& xhat, const Vec& rstd, const Vec& g,
                         Mat& dx, Vec& dg, Vec& db) {
    const auto rows = dout.rows();
    const auto cols = dout.cols();
    dx.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Eigen::RowVectorXd dxhat = dout.row(r).array() * g.transpose().array();
        const double mean_dxhat = dxhat.mean();
        const double mean_dxhat_xhat = (dxhat.array() * xhat.row(r).array()).mean();
        dx.row(r) =
            (rstd(r) * (dxhat.array() - mean_dxhat - xhat.row(r).array() * mean_dxhat_xhat)).matrix();
        (void)cols;
    }
    dg += (dout.array() * xhat.array()).colwise().sum().matrix().transpose();
    db += dout.colwise().sum().transpose();
}

/// Stable row-wise softmax.
Mat softmax_rows(const Mat& s) {
    Mat a(s.rows(), s.cols());
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const double m = s.row(r).maxCoeff();
        a.row(r) = (s.row(r).array() - m).exp().matrix();
        a.row(r) /= a.row(r).sum();
    }
    return a;
}

LayerParams make_layer(const ModelConfig& cfg) {
    LayerParams l;
    l.ln1_g = Vec::Zero(cfg.model_dim);
    l.ln1_b = Vec::Zero(cfg.model_dim);
    l.wq = Mat::Zero(cfg.model_dim, cfg.model_dim);
    l.wk = Mat::Zero(cfg.model_dim, cfg.model_dim);
    l.wv = Mat::Zero(cfg.model_dim, cfg.model_dim);
    l.wo = Mat::Zero(cfg.model_dim, cfg.model_dim);
    l.bq = Vec::Zero(cfg.model_dim);
    l.bk = Vec::Zero(cfg.model_dim);
    l.bv = Vec::Zero(cfg.model_dim);
    l.bo = Vec::Zero(cfg.model_dim);
    l.ln2_g = Vec::Zero(cfg.model_dim);
    l.ln2_b = Vec::Zero(cfg.model_dim);
    l.w1 = Mat::Zero(cfg.model_dim, cfg.ffn_dim);
    l.b1 = Vec::Zero(cfg.ffn_dim);
    l.w2 = Mat::Zero(cfg.ffn_dim, cfg.model_dim);
    l.b2 = Vec::Zero(cfg.model_dim);
    return l;
}

Params make_params(const ModelConfig& cfg) {
    Params p;
    p.tok_emb = Mat::Zero(cfg.vocab_size, cfg.model_dim);
    p.pos_emb = Mat::Zero(cfg.max_len, cfg.model_dim);
    p.layers.resize(static_cast<size_t>(cfg.layers));
    for (auto& l : p.layers) {
        l = make_layer(cfg);
    }
    p.lnf_g = Vec::Zero(cfg.model_dim);
    p.lnf_b = Vec::Zero(cfg.model_dim);
    return p;
}

void fill_normal(Mat& m, Rng& rng, double std) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            m(r, c) = std * normal01(rng);
        }
    }
}

struct TensorRefs {
    std::vector<std::pair<std::string, Mat*>> mats;
    std::vector<std::pair<std::string, Vec*>> vecs;
};

TensorRefs collect(Params& p) {
    TensorRefs t;
    t.mats.push_back({"tok_emb", &p.tok_emb});
    t.mats.push_back({"pos_emb", &p.pos_emb});
    for (size_t i = 0; i < p.layers.size(); ++i) {
        const std::string pre = "layer" + std::to_string(i) + ".";
        LayerParams& l = p.layers[i];
        t.vecs.push_back({pre + "ln1_g", &l.ln1_g});
        t.vecs.push_back({pre + "ln1_b", &l.ln1_b});
        t.mats.push_back({pre + "wq", &l.wq});
        t.mats.push_back({pre + "wk", &l.wk});
        t.mats.push_back({pre + "wv", &l.wv});
        t.mats.push_back({pre + "wo", &l.wo});
        t.vecs.push_back({pre + "bq", &l.bq});
        t.vecs.push_back({pre + "bk", &l.bk});
        t.vecs.push_back({pre + "bv", &l.bv});
        t.vecs.push_back({pre + "bo", &l.bo});
        t.vecs.push_back({pre + "ln2_g", &l.ln2_g});
        t.vecs.push_back({pre + "ln2_b", &l.ln2_b});
        t.mats.push_back({pre + "w1", &l.w1});
        t.vecs.push_back({pre + "b1", &l.b1});
        t.mats.push_back({pre + "w2", &l.w2});
        t.vecs.push_back({pre + "b2", &l.b2});
    }
    t.vecs.push_back({"lnf_g", &p.lnf_g});
    t.vecs.push_back({"lnf_b", &p.lnf_b});
    return t;
}

}  // namespace

void ModelConfig::validate() const {
    if (layers < 1 || model_dim < 1 || heads < 1 || ffn_dim < 1 || max_len < 1 || vocab_size < 1) {
        throw std::invalid_argument("model config: all dimensions must be positive");
    }
    if (model_dim % heads != 0) {
        throw std::invalid_argument("model config: model_dim must be divisible by heads");
    }
    if (prompt_dropout < 0.0 || prompt_dropout >= 1.0) {
        throw std::invalid_argument("model config: prompt_dropout must lie in [0, 1)");
    }
}

MaskPredictor::MaskPredictor(ModelConfig cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    params_ = make_params(cfg_);
    fill_normal(params_.tok_emb, rng, kInitStd);
    fill_normal(params_.pos_emb, rng, kInitStd);
    for (auto& l : params_.layers) {
        l.ln1_g.setOnes();
        l.ln2_g.setOnes();
        fill_normal(l.wq, rng, kInitStd);
        fill_normal(l.wk, rng, kInitStd);
        fill_normal(l.wv, rng, kInitStd);
        fill_normal(l.wo, rng, kInitStd);
        fill_normal(l.w1, rng, kInitStd);
        fill_normal(l.w2, rng, kInitStd);
    }
    params_.lnf_g.setOnes();
}

MaskPredictor::MaskPredictor(ModelConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    params_ = make_params(cfg_);
}

Mat MaskPredictor::forward(const std::vector<int>& tokens, ForwardCache* cache) const {
    const int L = static_cast<int>(tokens.size());
    if (L == 0) {
        throw std::invalid_argument("forward: empty input");
    }
    if (L > cfg_.max_len) {
        throw std::invalid_argument("forward: input length " + std::to_string(L) +
                                    " exceeds max_len " + std::to_string(cfg_.max_len));
    }
    for (int id : tokens) {
        if (id < 0 || id >= cfg_.vocab_size) {
            throw std::invalid_argument("forward: token id out of vocabulary");
        }
    }
    const int d = cfg_.model_dim;
    const int H = cfg_.heads;
    const int dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Mat x(L, d);
    for (int i = 0; i < L; ++i) {
        x.row(i) = params_.tok_emb.row(tokens[i]) + params_.pos_emb.row(i);
    }
    if (cache) {
        cache->tokens = tokens;
        cache->x0 = x;
        cache->layers.assign(params_.layers.size(), LayerCache{});
    }

    Mat ln_out, ln_xhat;
    Vec ln_rstd;
    for (size_t li = 0; li < params_.layers.size(); ++li) {
        const LayerParams& l = params_.layers[li];
        LayerCache* lc = cache ? &cache->layers[li] : nullptr;
        if (lc) {
            lc->x_in = x;
        }

        layer_norm(x, l.ln1_g, l.ln1_b, ln_out, ln_xhat, ln_rstd);
        Mat q = (ln_out * l.wq).rowwise() + l.bq.transpose();
        Mat k = (ln_out * l.wk).rowwise() + l.bk.transpose();
        Mat v = (ln_out * l.wv).rowwise() + l.bv.transpose();
        if (lc) {
            lc->ln1_out = ln_out;
            lc->ln1_xhat = ln_xhat;
            lc->ln1_rstd = ln_rstd;
            lc->q = q;
            lc->k = k;
            lc->v = v;
            lc->attn.resize(static_cast<size_t>(H));
        }

        Mat concat(L, d);
        for (int h = 0; h < H; ++h) {
            auto qh = q.middleCols(h * dh, dh);
            auto kh = k.middleCols(h * dh, dh);
            auto vh = v.middleCols(h * dh, dh);
            Mat attn = softmax_rows(qh * kh.transpose() * scale);
            concat.middleCols(h * dh, dh).noalias() = attn * vh;
            if (lc) {
                lc->attn[static_cast<size_t>(h)] = std::move(attn);
            }
        }
        Mat attn_out = (concat * l.wo).rowwise() + l.bo.transpose();
        Mat x_mid = x + attn_out;
        if (lc) {
            lc->attn_concat = std::move(concat);
            lc->x_mid = x_mid;
        }

        layer_norm(x_mid, l.ln2_g, l.ln2_b, ln_out, ln_xhat, ln_rstd);
        Mat pre = (ln_out * l.w1).rowwise() + l.b1.transpose();
        Mat act = pre.unaryExpr([](double z) { return gelu(z); });
        Mat ffn_out = (act * l.w2).rowwise() + l.b2.transpose();
        if (lc) {
            lc->ln2_out = ln_out;
            lc->ln2_xhat = ln_xhat;
            lc->ln2_rstd = ln_rstd;
            lc->ffn_pre = std::move(pre);
            lc->ffn_act = act;
        }
        x = x_mid + ffn_out;
    }

    layer_norm(x, params_.lnf_g, params_.lnf_b, ln_out, ln_xhat, ln_rstd);
    if (cache) {
        cache->lnf_out = ln_out;
        cache->lnf_xhat = ln_xhat;
        cache->lnf_rstd = ln_rstd;
    }
    return ln_out * params_.tok_emb.transpose();
}

void MaskPredictor::backward(const ForwardCache& cache, const Mat& dlogits, Params& grads) const {
    const int L = static_cast<int>(cache.tokens.size());
    const int d = cfg_.model_dim;
    const int H = cfg_.heads;
    const int dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // logits = lnf_out * tok_emb^T (tied head)
    grads.tok_emb.noalias() += dlogits.transpose() * cache.lnf_out;
    Mat dy = dlogits * params_.tok_emb;

    Mat dx;
    layer_norm_backward(dy, cache.lnf_xhat, cache.lnf_rstd, params_.lnf_g, dx, grads.lnf_g,
                        grads.lnf_b);

    for (int li = static_cast<int>(params_.layers.size()) - 1; li >= 0; --li) {
        const LayerParams& l = params_.layers[static_cast<size_t>(li)];
        const LayerCache& lc = cache.layers[static_cast<size_t>(li)];
        LayerParams& gl = grads.layers[static_cast<size_t>(li)];

        // x_out = x_mid + ffn(ln2(x_mid))
        Mat dffn_out = dx;  // residual branch keeps dx flowing into x_mid as well
        gl.w2.noalias() += lc.ffn_act.transpose() * dffn_out;
        gl.b2.noalias() += dffn_out.colwise().sum().transpose();
        Mat dact = dffn_out * l.w2.transpose();
        Mat dpre =
            (dact.array() * lc.ffn_pre.unaryExpr([](double z) { return gelu_grad(z); }).array()).matrix();
        gl.w1.noalias() += lc.ln2_out.transpose() * dpre;
        gl.b1.noalias() += dpre.colwise().sum().transpose();
        Mat dln2_out = dpre * l.w1.transpose();

        Mat dx_mid;
        layer_norm_backward(dln2_out, lc.ln2_xhat, lc.ln2_rstd, l.ln2_g, dx_mid, gl.ln2_g, gl.ln2_b);
        dx_mid += dx;

        // x_mid = x_in + attn_out
        Mat dattn_out = dx_mid;
        gl.wo.noalias() += lc.attn_concat.transpose() * dattn_out;
        gl.bo.noalias() += dattn_out.colwise().sum().transpose();
        Mat dconcat = dattn_out * l.wo.transpose();

        Mat dq = Mat::Zero(L, d);
        Mat dk = Mat::Zero(L, d);
        Mat dv = Mat::Zero(L, d);
        for (int h = 0; h < H; ++h) {
            const Mat& attn = lc.attn[static_cast<size_t>(h)];
            auto doh = dconcat.middleCols(h * dh, dh);
            auto vh = lc.v.middleCols(h * dh, dh);
            auto qh = lc.q.middleCols(h * dh, dh);
            auto kh = lc.k.middleCols(h * dh, dh);

            dv.middleCols(h * dh, dh).noalias() = attn.transpose() * doh;
            Mat dattn = doh * vh.transpose();
            // softmax backward per row
            Mat ds(L, L);
            for (int r = 0; r < L; ++r) {
                const double dot = dattn.row(r).dot(attn.row(r));
                ds.row(r) = (attn.row(r).array() * (dattn.row(r).array() - dot)).matrix();
            }
            dq.middleCols(h * dh, dh).noalias() = ds * kh * scale;
            dk.middleCols(h * dh, dh).noalias() = ds.transpose() * qh * scale;
        }

        gl.wq.noalias() += lc.ln1_out.transpose() * dq;
        gl.wk.noalias() += lc.ln1_out.transpose() * dk;
        gl.wv.noalias() += lc.ln1_out.transpose() * dv;
        gl.bq.noalias() += dq.colwise().sum().transpose();
        gl.bk.noalias() += dk.colwise().sum().transpose();
        gl.bv.noalias() += dv.colwise().sum().transpose();
        Mat dln1_out = dq * l.wq.transpose() + dk * l.wk.transpose() + dv * l.wv.transpose();

        Mat dx_in;
        layer_norm_backward(dln1_out, lc.ln1_xhat, lc.ln1_rstd, l.ln1_g, dx_in, gl.ln1_g, gl.ln1_b);
        dx = dx_in + dx_mid;
    }

    for (int i = 0; i < L; ++i) {
        grads.tok_emb.row(cache.tokens[static_cast<size_t>(i)]) += dx.row(i);
        grads.pos_emb.row(i) += dx.row(i);
    }
}

Params MaskPredictor::zero_like() const {
    return make_params(cfg_);
}

size_t MaskPredictor::param_count() const {
    size_t n = 0;
    auto refs = collect(const_cast<Params&>(params_));
    for (auto& [name, m] : refs.mats) {
        n += static_cast<size_t>(m->size());
    }
    for (auto& [name, v] : refs.vecs) {
        n += static_cast<size_t>(v->size());
    }
    return n;
}

void MaskPredictor::for_each_tensor(const std::function<void(const std::string&, Mat&)>& on_mat,
                                    const std::function<void(const std::string&, Vec&)>& on_vec) {
    auto refs = collect(params_);
    for (auto& [name, m] : refs.mats) {
        on_mat(name, *m);
    }
    for (auto& [name, v] : refs.vecs) {
        on_vec(name, *v);
    }
}

std::vector<double> MaskPredictor::flatten(const ModelConfig&, const Params& p) {
    std::vector<double> flat;
    auto refs = collect(const_cast<Params&>(p));
    for (auto& [name, m] : refs.mats) {
        flat.insert(flat.end(), m->data(), m->data() + m->size());
    }
    for (auto& [name, v] : refs.vecs) {
        flat.insert(flat.end(), v->data(), v->data() + v->size());
    }
    return flat;
}

std::vector<double> MaskPredictor::flatten_params() const {
    return flatten(cfg_, params_);
}

void MaskPredictor::unflatten_params(const std::vector<double>& flat) {
    auto refs = collect(params_);
    size_t off = 0;
    for (auto& [name, m] : refs.mats) {
        std::copy(flat.begin() + static_cast<long>(off),
                  flat.begin() + static_cast<long>(off + static_cast<size_t>(m->size())), m->data());
        off += static_cast<size_t>(m->size());
    }
    for (auto& [name, v] : refs.vecs) {
        std::copy(flat.begin() + static_cast<long>(off),
                  flat.begin() + static_cast<long>(off + static_cast<size_t>(v->size())), v->data());
        off += static_cast<size_t>(v->size());
    }
    if (off != flat.size()) {
        throw std::invalid_argument("unflatten_params: size mismatch");
    }
}

double log_softmax_at(const Eigen::Ref<const Eigen::RowVectorXd>& row, int index) {
    const double m = row.maxCoeff();
    const double lse = std::log((row.array() - m).exp().sum()) + m;
    return row(index) - lse;
}

std::vector<double> log_probs_at(const Mat& logits, const std::vector<size_t>& positions,
                                 const std::vector<int>& targets) {
    if (positions.size() != targets.size()) {
        throw std::invalid_argument("log_probs_at: positions/targets size mismatch");
    }
    std::vector<double> out(positions.size());
    for (size_t i = 0; i < positions.size(); ++i) {
        if (positions[i] >= static_cast<size_t>(logits.rows())) {
            throw std::invalid_argument("log_probs_at: position out of range");
        }
        out[i] = log_softmax_at(logits.row(static_cast<Eigen::Index>(positions[i])), targets[i]);
    }
    return out;
}

AdamState::AdamState(const MaskPredictor& model, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(model.zero_like()), v_(model.zero_like()) {}

void AdamState::restore(Params m, Params v, int64_t t) {
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
}

void AdamState::step(MaskPredictor& model, const Params& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));

    auto pr = collect(model.params());
    auto gr = collect(const_cast<Params&>(grads));
    auto mr = collect(m_);
    auto vr = collect(v_);

    for (size_t i = 0; i < pr.mats.size(); ++i) {
        auto& p = *pr.mats[i].second;
        const auto& g = *gr.mats[i].second;
        auto& m = *mr.mats[i].second;
        auto& v = *vr.mats[i].second;
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = (beta2_ * v.array() + (1.0 - beta2_) * g.array().square()).matrix();
        p.array() -= lr_ * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
    }
    for (size_t i = 0; i < pr.vecs.size(); ++i) {
        auto& p = *pr.vecs[i].second;
        const auto& g = *gr.vecs[i].second;
        auto& m = *mr.vecs[i].second;
        auto& v = *vr.vecs[i].second;
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = (beta2_ * v.array() + (1.0 - beta2_) * g.array().square()).matrix();
        p.array() -= lr_ * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
    }
}

void accumulate(Params& dst, const Params& src, double scale) {
    auto d = collect(dst);
    auto s = collect(const_cast<Params&>(src));
    for (size_t i = 0; i < d.mats.size(); ++i) {
        *d.mats[i].second += scale * (*s.mats[i].second);
    }
    for (size_t i = 0; i < d.vecs.size(); ++i) {
        *d.vecs[i].second += scale * (*s.vecs[i].second);
    }
}

void scale_params(Params& p, double scale) {
    auto refs = collect(p);
    for (auto& [name, m] : refs.mats) {
        *m *= scale;
    }
    for (auto& [name, v] : refs.vecs) {
        *v *= scale;
    }
}

void zero_params(Params& p) {
    auto refs = collect(p);
    for (auto& [name, m] : refs.mats) {
        m->setZero();
    }
    for (auto& [name, v] : refs.vecs) {
        v->setZero();
    }
}

void visit_params(Params& p, const std::function<void(const std::string&, Mat&)>& on_mat,
                  const std::function<void(const std::string&, Vec&)>& on_vec) {
    auto refs = collect(p);
    for (auto& [name, m] : refs.mats) {
        on_mat(name, *m);
    }
    for (auto& [name, v] : refs.vecs) {
        on_vec(name, *v);
    }
}

}  // namespace udlm
