#ifndef REFLECTSIM_NN_HPP_
#define REFLECTSIM_NN_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "reflectsim/rng.hpp"

namespace reflectsim::nn {

// Row-major matrix of doubles. Vectors are 1 x n.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double at(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }
  int size() const { return rows * cols; }
};

// One learnable tensor plus its Adam moments.
struct Param {
  std::string name;
  Tensor value;
  Tensor adam_m;
  Tensor adam_v;
};

struct ParamSet {
  std::vector<Param> params;
  std::int64_t step_count = 0;

  Param& add(const std::string& name, int rows, int cols);
  Param& get(std::string_view name);
  const Param& get(std::string_view name) const;
  const Param* find(std::string_view name) const;
};

// Gradients parallel to ParamSet::params.
struct GradSet {
  std::vector<Tensor> g;
};

GradSet zero_grads(const ParamSet& ps);
void accumulate(GradSet& into, const GradSet& from, double scale = 1.0);
void scale(GradSet& g, double s);
double global_norm(const GradSet& g);
void clip_by_global_norm(GradSet& g, double max_norm);
bool all_finite(const GradSet& g);

// ---------------------------------------------------------------------------
// MLP: affine chains with ReLU between hidden layers, linear head.
// Parameters are named W0/b0, W1/b1, ... with Wi of shape (in x out).

// Scaled-uniform fan-in init; the last layer is multiplied by final_scale.
ParamSet mlp_init(const std::vector<int>& dims, Rng& rng,
                  double final_scale = 1.0);

std::vector<int> mlp_dims(const ParamSet& ps);

struct MlpTape {
  std::vector<int> dims;
  // acts[0] is the input; acts[i] the post-ReLU output of layer i-1.
  std::vector<std::vector<double>> acts;
  std::vector<std::vector<double>> pre;
  bool consumed = false;
};

std::vector<double> mlp_forward(const ParamSet& ps,
                                const std::vector<double>& input,
                                MlpTape* tape = nullptr);

// Exact reverse-mode gradients of output . output_grad; consumes the tape.
GradSet mlp_backward(const ParamSet& ps, MlpTape& tape,
                     const std::vector<double>& output_grad,
                     std::vector<double>* input_grad = nullptr);

// ---------------------------------------------------------------------------
// Single-head self-attention trunk: token embed, scaled dot-product
// attention, residual, layer norm, mean pool.
// Parameters: We/be, Wq/bq, Wk/bk, Wv/bv, ln_gamma, ln_beta.

ParamSet attention_init(int token_dim, int d_model, Rng& rng);

int attention_d_model(const ParamSet& ps);

struct AttentionTape {
  Tensor X;     // n x token_dim
  Tensor E;     // n x d
  Tensor Q, K, V;
  Tensor S;     // n x n scores
  Tensor P;     // n x n softmax rows
  Tensor A;     // n x d attended values
  Tensor R;     // n x d residual input to layer norm
  Tensor Xhat;  // n x d normalized rows
  std::vector<double> mu, inv_sigma;
  bool consumed = false;
};

std::vector<double> attention_forward(
    const ParamSet& ps, const std::vector<std::vector<double>>& tokens,
    AttentionTape* tape = nullptr);

GradSet attention_backward(const ParamSet& ps, AttentionTape& tape,
                           const std::vector<double>& pooled_grad);

// ---------------------------------------------------------------------------
// Optimizer.

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam, in place. Non-finite gradients reject the whole
// update and leave the parameters untouched.
void adam_step(ParamSet& ps, const GradSet& grads, const AdamConfig& cfg);

// ---------------------------------------------------------------------------
// Binary serialization; round-trips bit-exact.

void write_param_set(std::ostream& os, const ParamSet& ps);
ParamSet read_param_set(std::istream& is);

}  // namespace reflectsim::nn

#endif  // REFLECTSIM_NN_HPP_
