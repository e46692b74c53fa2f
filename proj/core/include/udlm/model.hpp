#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "udlm/layout.hpp"
#include "udlm/rng.hpp"
#include "udlm/vocab.hpp"

namespace udlm {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct ModelConfig {
    int layers = 4;
    int model_dim = 128;
    int heads = 4;
    int ffn_dim = 512;
    int max_len = 256;
    int vocab_size = 0;
    double prompt_dropout = 0.1;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// Anything that maps a token sequence to per-position logits over the
/// vocabulary. Samplers are written against this so tests can drive them
/// with cheap stand-ins.
struct Predictor {
    virtual ~Predictor() = default;
    /// Returns an L x vocab_size matrix, one logit row per input position.
    virtual Mat logits(const std::vector<int>& tokens) const = 0;
};

struct LayerParams {
    Vec ln1_g, ln1_b;
    Mat wq, wk, wv, wo;       // model_dim x model_dim
    Vec bq, bk, bv, bo;
    Vec ln2_g, ln2_b;
    Mat w1;                    // model_dim x ffn_dim
    Vec b1;
    Mat w2;                    // ffn_dim x model_dim
    Vec b2;
};

/// Token + learned absolute position embeddings, pre-norm bidirectional
/// attention blocks, GELU feed-forward, final layer norm, and an output
/// head weight-tied to the token embedding.
struct Params {
    Mat tok_emb;               // vocab_size x model_dim (also the output head)
    Mat pos_emb;               // max_len x model_dim
    std::vector<LayerParams> layers;
    Vec lnf_g, lnf_b;
};

struct LayerCache {
    Mat x_in;
    Mat ln1_out, ln1_xhat;
    Vec ln1_rstd;
    Mat q, k, v;
    std::vector<Mat> attn;     // per-head L x L softmax rows
    Mat attn_concat;
    Mat x_mid;
    Mat ln2_out, ln2_xhat;
    Vec ln2_rstd;
    Mat ffn_pre;               // L x ffn_dim, pre-activation
    Mat ffn_act;
};

struct ForwardCache {
    std::vector<int> tokens;
    Mat x0;
    std::vector<LayerCache> layers;
    Mat lnf_out, lnf_xhat;
    Vec lnf_rstd;
};

/// The parametric denoiser p_theta(. | x_t): full-context attention (no
/// causal mask), logits for every position of the joint vocabulary. The
/// timestep is conveyed implicitly by how many MASK tokens the input holds.
class MaskPredictor : public Predictor {
  public:
    MaskPredictor(ModelConfig cfg, Rng& rng);
    explicit MaskPredictor(ModelConfig cfg);  // zero-initialized (uniform logits)

    const ModelConfig& config() const { return cfg_; }
    Params& params() { return params_; }
    const Params& params() const { return params_; }

    /// Rejects inputs longer than max_len or with ids outside the
    /// vocabulary; deterministic given parameters and input.
    Mat forward(const std::vector<int>& tokens, ForwardCache* cache = nullptr) const;
    Mat logits(const std::vector<int>& tokens) const override { return forward(tokens); }
    Mat forward(const LayoutSequence& x, ForwardCache* cache = nullptr) const {
        return forward(x.tokens, cache);
    }

    /// Accumulates dLoss/dparams into `grads` given dLoss/dlogits.
    void backward(const ForwardCache& cache, const Mat& dlogits, Params& grads) const;

    Params zero_like() const;
    size_t param_count() const;

    /// Visit every tensor (matrices and vectors as 1-column matrices are
    /// not mixed: vectors are visited via the vec overload).
    void for_each_tensor(const std::function<void(const std::string&, Mat&)>& on_mat,
                         const std::function<void(const std::string&, Vec&)>& on_vec);

    std::vector<double> flatten_params() const;
    void unflatten_params(const std::vector<double>& flat);
    static std::vector<double> flatten(const ModelConfig& cfg, const Params& p);

  private:
    ModelConfig cfg_;
    Params params_;
};

/// log softmax(logit_row)[target] for each (position, target) pair.
std::vector<double> log_probs_at(const Mat& logits, const std::vector<size_t>& positions,
                                 const std::vector<int>& targets);

/// Numerically stable row-wise log-softmax value at one index.
double log_softmax_at(const Eigen::Ref<const Eigen::RowVectorXd>& row, int index);

/// Adam with bias correction; moments have the same shape as the params.
class AdamState {
  public:
    AdamState(const MaskPredictor& model, double lr, double beta1 = 0.9, double beta2 = 0.999,
              double eps = 1e-8);

    void step(MaskPredictor& model, const Params& grads);
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

    /// Reinstate moments saved in a checkpoint.
    void restore(Params m, Params v, int64_t t);

    Params& m() { return m_; }
    Params& v() { return v_; }
    int64_t t() const { return t_; }
    void set_t(int64_t t) { t_ = t; }

  private:
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    Params m_, v_;
};

/// In-place axpy over every tensor: dst += scale * src.
void accumulate(Params& dst, const Params& src, double scale);
void scale_params(Params& p, double scale);
void zero_params(Params& p);

/// Visit every tensor of a parameter set in a fixed, named order.
void visit_params(Params& p, const std::function<void(const std::string&, Mat&)>& on_mat,
                  const std::function<void(const std::string&, Vec&)>& on_vec);

}  // namespace udlm
