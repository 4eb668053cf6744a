#include "reflectsim/nn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "reflectsim/errors.hpp"

namespace reflectsim::nn {

Param& ParamSet::add(const std::string& name, int rows, int cols) {
  params.push_back(Param{name, Tensor(rows, cols), Tensor(rows, cols),
                         Tensor(rows, cols)});
  return params.back();
}

Param& ParamSet::get(std::string_view name) {
  for (auto& p : params) {
    if (p.name == name) return p;
  }
  throw InvalidArgument("ParamSet: no parameter named " + std::string(name));
}

const Param& ParamSet::get(std::string_view name) const {
  for (const auto& p : params) {
    if (p.name == name) return p;
  }
  throw InvalidArgument("ParamSet: no parameter named " + std::string(name));
}

const Param* ParamSet::find(std::string_view name) const {
  for (const auto& p : params) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

GradSet zero_grads(const ParamSet& ps) {
  GradSet g;
  g.g.reserve(ps.params.size());
  for (const auto& p : ps.params) {
    g.g.emplace_back(p.value.rows, p.value.cols);
  }
  return g;
}

void accumulate(GradSet& into, const GradSet& from, double s) {
  for (std::size_t i = 0; i < into.g.size(); ++i) {
    for (int j = 0; j < into.g[i].size(); ++j) {
      into.g[i].a[j] += s * from.g[i].a[j];
    }
  }
}

void scale(GradSet& g, double s) {
  for (auto& t : g.g) {
    for (auto& v : t.a) v *= s;
  }
}

double global_norm(const GradSet& g) {
  double sq = 0.0;
  for (const auto& t : g.g) {
    for (double v : t.a) sq += v * v;
  }
  return std::sqrt(sq);
}

void clip_by_global_norm(GradSet& g, double max_norm) {
  const double n = global_norm(g);
  if (n > max_norm && n > 0.0) scale(g, max_norm / n);
}

bool all_finite(const GradSet& g) {
  for (const auto& t : g.g) {
    for (double v : t.a) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// MLP

ParamSet mlp_init(const std::vector<int>& dims, Rng& rng, double final_scale) {
  if (dims.size() < 2) {
    throw InvalidArgument("mlp_init: need at least input and output dims");
  }
  ParamSet ps;
  const int layers = static_cast<int>(dims.size()) - 1;
  for (int l = 0; l < layers; ++l) {
    const int in = dims[l];
    const int out = dims[l + 1];
    auto& w = ps.add("W" + std::to_string(l), in, out);
    ps.add("b" + std::to_string(l), 1, out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    const double s = (l == layers - 1) ? final_scale : 1.0;
    for (auto& v : w.value.a) v = s * rng.uniform(-bound, bound);
  }
  return ps;
}

std::vector<int> mlp_dims(const ParamSet& ps) {
  std::vector<int> dims;
  for (int l = 0;; ++l) {
    const Param* w = ps.find("W" + std::to_string(l));
    if (w == nullptr) break;
    if (dims.empty()) dims.push_back(w->value.rows);
    dims.push_back(w->value.cols);
  }
  return dims;
}

std::vector<double> mlp_forward(const ParamSet& ps,
                                const std::vector<double>& input,
                                MlpTape* tape) {
  const std::vector<int> dims = mlp_dims(ps);
  if (static_cast<int>(input.size()) != dims.front()) {
    throw InvalidArgument("mlp_forward: input dimension mismatch");
  }
  const int layers = static_cast<int>(dims.size()) - 1;

  std::vector<double> x = input;
  if (tape != nullptr) {
    tape->dims = dims;
    tape->acts.assign(1, x);
    tape->pre.clear();
    tape->consumed = false;
  }
  for (int l = 0; l < layers; ++l) {
    const Tensor& w = ps.get("W" + std::to_string(l)).value;
    const Tensor& b = ps.get("b" + std::to_string(l)).value;
    std::vector<double> y(w.cols);
    for (int j = 0; j < w.cols; ++j) {
      double s = b.a[j];
      for (int i = 0; i < w.rows; ++i) s += x[i] * w.at(i, j);
      y[j] = s;
    }
    if (tape != nullptr) tape->pre.push_back(y);
    if (l < layers - 1) {
      for (auto& v : y) v = std::max(v, 0.0);
    }
    if (tape != nullptr) tape->acts.push_back(y);
    x = std::move(y);
  }
  return x;
}

GradSet mlp_backward(const ParamSet& ps, MlpTape& tape,
                     const std::vector<double>& output_grad,
                     std::vector<double>* input_grad) {
  if (tape.consumed) {
    throw ProtocolViolation("mlp_backward: tape already consumed");
  }
  tape.consumed = true;

  const int layers = static_cast<int>(tape.dims.size()) - 1;
  GradSet grads = zero_grads(ps);

  std::vector<double> gy = output_grad;
  for (int l = layers - 1; l >= 0; --l) {
    const Tensor& w = ps.get("W" + std::to_string(l)).value;
    Tensor& gw = grads.g[static_cast<std::size_t>(2 * l)];
    Tensor& gb = grads.g[static_cast<std::size_t>(2 * l + 1)];
    const std::vector<double>& x = tape.acts[l];

    for (int j = 0; j < w.cols; ++j) {
      gb.a[j] += gy[j];
      for (int i = 0; i < w.rows; ++i) gw.at(i, j) += x[i] * gy[j];
    }
    std::vector<double> gx(w.rows, 0.0);
    for (int i = 0; i < w.rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < w.cols; ++j) s += w.at(i, j) * gy[j];
      gx[i] = s;
    }
    if (l > 0) {
      // Gate through the ReLU that produced acts[l].
      const std::vector<double>& pre = tape.pre[l - 1];
      for (int i = 0; i < w.rows; ++i) {
        if (pre[i] <= 0.0) gx[i] = 0.0;
      }
    }
    gy = std::move(gx);
  }
  if (input_grad != nullptr) *input_grad = gy;
  return grads;
}

// ---------------------------------------------------------------------------
// Attention trunk

ParamSet attention_init(int token_dim, int d_model, Rng& rng) {
  if (token_dim < 1 || d_model < 1) {
    throw InvalidArgument("attention_init: bad dimensions");
  }
  ParamSet ps;
  const auto init = [&rng](Tensor& t, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.a) v = rng.uniform(-bound, bound);
  };
  init(ps.add("We", token_dim, d_model).value, token_dim);
  ps.add("be", 1, d_model);
  init(ps.add("Wq", d_model, d_model).value, d_model);
  ps.add("bq", 1, d_model);
  init(ps.add("Wk", d_model, d_model).value, d_model);
  ps.add("bk", 1, d_model);
  init(ps.add("Wv", d_model, d_model).value, d_model);
  ps.add("bv", 1, d_model);
  auto& gamma = ps.add("ln_gamma", 1, d_model);
  std::fill(gamma.value.a.begin(), gamma.value.a.end(), 1.0);
  ps.add("ln_beta", 1, d_model);
  return ps;
}

int attention_d_model(const ParamSet& ps) { return ps.get("We").value.cols; }

namespace {

constexpr double kLnEps = 1e-6;

// out = X * W + b (row-wise bias)
Tensor affine_rows(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y(x.rows, w.cols);
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < w.cols; ++j) {
      double s = b.a[j];
      for (int k = 0; k < x.cols; ++k) s += x.at(i, k) * w.at(k, j);
      y.at(i, j) = s;
    }
  }
  return y;
}

}  // namespace

std::vector<double> attention_forward(
    const ParamSet& ps, const std::vector<std::vector<double>>& tokens,
    AttentionTape* tape) {
  if (tokens.empty()) {
    throw InvalidArgument("attention_forward: empty token list");
  }
  const int n = static_cast<int>(tokens.size());
  const int token_dim = ps.get("We").value.rows;
  const int d = attention_d_model(ps);

  Tensor X(n, token_dim);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(tokens[i].size()) != token_dim) {
      throw InvalidArgument("attention_forward: token dimension mismatch");
    }
    for (int j = 0; j < token_dim; ++j) X.at(i, j) = tokens[i][j];
  }

  const Tensor E = affine_rows(X, ps.get("We").value, ps.get("be").value);
  const Tensor Q = affine_rows(E, ps.get("Wq").value, ps.get("bq").value);
  const Tensor K = affine_rows(E, ps.get("Wk").value, ps.get("bk").value);
  const Tensor V = affine_rows(E, ps.get("Wv").value, ps.get("bv").value);

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor S(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += Q.at(i, k) * K.at(j, k);
      S.at(i, j) = s * inv_sqrt_d;
    }
  }

  Tensor P(n, n);
  for (int i = 0; i < n; ++i) {
    double mx = S.at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, S.at(i, j));
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      P.at(i, j) = std::exp(S.at(i, j) - mx);
      z += P.at(i, j);
    }
    for (int j = 0; j < n; ++j) P.at(i, j) /= z;
  }

  Tensor A(n, d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += P.at(i, j) * V.at(j, k);
      A.at(i, k) = s;
    }
  }

  // Residual + layer norm.
  Tensor R(n, d);
  for (int i = 0; i < n * d; ++i) R.a[i] = E.a[i] + A.a[i];

  const Tensor& gamma = ps.get("ln_gamma").value;
  const Tensor& beta = ps.get("ln_beta").value;
  Tensor Xhat(n, d);
  std::vector<double> mu(n), inv_sigma(n);
  Tensor H(n, d);
  for (int i = 0; i < n; ++i) {
    double m = 0.0;
    for (int k = 0; k < d; ++k) m += R.at(i, k);
    m /= d;
    double var = 0.0;
    for (int k = 0; k < d; ++k) {
      const double c = R.at(i, k) - m;
      var += c * c;
    }
    var /= d;
    const double is = 1.0 / std::sqrt(var + kLnEps);
    mu[i] = m;
    inv_sigma[i] = is;
    for (int k = 0; k < d; ++k) {
      Xhat.at(i, k) = (R.at(i, k) - m) * is;
      H.at(i, k) = gamma.a[k] * Xhat.at(i, k) + beta.a[k];
    }
  }

  std::vector<double> pooled(d, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) pooled[k] += H.at(i, k) / n;
  }

  if (tape != nullptr) {
    tape->X = X;
    tape->E = E;
    tape->Q = Q;
    tape->K = K;
    tape->V = V;
    tape->S = S;
    tape->P = P;
    tape->A = A;
    tape->R = R;
    tape->Xhat = Xhat;
    tape->mu = mu;
    tape->inv_sigma = inv_sigma;
    tape->consumed = false;
  }
  return pooled;
}

GradSet attention_backward(const ParamSet& ps, AttentionTape& tape,
                           const std::vector<double>& pooled_grad) {
  if (tape.consumed) {
    throw ProtocolViolation("attention_backward: tape already consumed");
  }
  tape.consumed = true;

  const int n = tape.E.rows;
  const int d = tape.E.cols;
  GradSet grads = zero_grads(ps);
  const auto gi = [&ps](std::string_view name) {
    for (std::size_t i = 0; i < ps.params.size(); ++i) {
      if (ps.params[i].name == name) return i;
    }
    throw InvalidArgument("attention_backward: missing param");
  };
  Tensor& gWe = grads.g[gi("We")];
  Tensor& gbe = grads.g[gi("be")];
  Tensor& gWq = grads.g[gi("Wq")];
  Tensor& gbq = grads.g[gi("bq")];
  Tensor& gWk = grads.g[gi("Wk")];
  Tensor& gbk = grads.g[gi("bk")];
  Tensor& gWv = grads.g[gi("Wv")];
  Tensor& gbv = grads.g[gi("bv")];
  Tensor& gGamma = grads.g[gi("ln_gamma")];
  Tensor& gBeta = grads.g[gi("ln_beta")];

  const Tensor& gamma = ps.get("ln_gamma").value;

  // Mean pool -> per-row layer norm.
  Tensor gR(n, d);
  for (int i = 0; i < n; ++i) {
    std::vector<double> gh(d);
    for (int k = 0; k < d; ++k) gh[k] = pooled_grad[k] / n;

    double g_dot_xhat = 0.0;
    std::vector<double> gxhat(d);
    for (int k = 0; k < d; ++k) {
      gGamma.a[k] += gh[k] * tape.Xhat.at(i, k);
      gBeta.a[k] += gh[k];
      gxhat[k] = gh[k] * gamma.a[k];
    }
    double mean_gxhat = 0.0;
    for (int k = 0; k < d; ++k) {
      mean_gxhat += gxhat[k];
      g_dot_xhat += gxhat[k] * tape.Xhat.at(i, k);
    }
    mean_gxhat /= d;
    g_dot_xhat /= d;
    for (int k = 0; k < d; ++k) {
      gR.at(i, k) = tape.inv_sigma[i] *
                    (gxhat[k] - mean_gxhat - tape.Xhat.at(i, k) * g_dot_xhat);
    }
  }

  // Residual split.
  Tensor gE = gR;
  Tensor gA = gR;

  // A = P V
  Tensor gP(n, n);
  Tensor gV(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += gA.at(i, k) * tape.V.at(j, k);
      gP.at(i, j) = s;
    }
  }
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < d; ++k) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += tape.P.at(i, j) * gA.at(i, k);
      gV.at(j, k) = s;
    }
  }

  // Softmax rows.
  Tensor gS(n, n);
  for (int i = 0; i < n; ++i) {
    double dot_pg = 0.0;
    for (int j = 0; j < n; ++j) dot_pg += gP.at(i, j) * tape.P.at(i, j);
    for (int j = 0; j < n; ++j) {
      gS.at(i, j) = tape.P.at(i, j) * (gP.at(i, j) - dot_pg);
    }
  }

  // S = Q K^T / sqrt(d)
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor gQ(n, d);
  Tensor gK(n, d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += gS.at(i, j) * tape.K.at(j, k);
      gQ.at(i, k) = s * inv_sqrt_d;
    }
  }
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < d; ++k) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += gS.at(i, j) * tape.Q.at(i, k);
      gK.at(j, k) = s * inv_sqrt_d;
    }
  }

  // Projections from E.
  const auto backprop_affine = [&](const Tensor& gy, const Tensor& w,
                                   Tensor& gw, Tensor& gb, Tensor& gx_accum) {
    for (int i = 0; i < gy.rows; ++i) {
      for (int j = 0; j < gy.cols; ++j) {
        gb.a[j] += gy.at(i, j);
        for (int k = 0; k < w.rows; ++k) {
          gw.at(k, j) += tape.E.at(i, k) * gy.at(i, j);
        }
      }
      for (int k = 0; k < w.rows; ++k) {
        double s = 0.0;
        for (int j = 0; j < gy.cols; ++j) s += w.at(k, j) * gy.at(i, j);
        gx_accum.at(i, k) += s;
      }
    }
  };
  backprop_affine(gQ, ps.get("Wq").value, gWq, gbq, gE);
  backprop_affine(gK, ps.get("Wk").value, gWk, gbk, gE);
  backprop_affine(gV, ps.get("Wv").value, gWv, gbv, gE);

  // E = X We + be
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      gbe.a[j] += gE.at(i, j);
      for (int k = 0; k < tape.X.cols; ++k) {
        gWe.at(k, j) += tape.X.at(i, k) * gE.at(i, j);
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(ParamSet& ps, const GradSet& grads, const AdamConfig& cfg) {
  if (grads.g.size() != ps.params.size()) {
    throw InvalidArgument("adam_step: gradient/parameter shape mismatch");
  }
  for (std::size_t i = 0; i < ps.params.size(); ++i) {
    if (grads.g[i].rows != ps.params[i].value.rows ||
        grads.g[i].cols != ps.params[i].value.cols) {
      throw InvalidArgument("adam_step: gradient/parameter shape mismatch");
    }
  }
  if (!all_finite(grads)) {
    throw UpdateRejected("adam_step: non-finite gradients");
  }

  ps.step_count += 1;
  const double t = static_cast<double>(ps.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < ps.params.size(); ++i) {
    Param& p = ps.params[i];
    const Tensor& g = grads.g[i];
    for (int j = 0; j < p.value.size(); ++j) {
      p.adam_m.a[j] = cfg.beta1 * p.adam_m.a[j] + (1.0 - cfg.beta1) * g.a[j];
      p.adam_v.a[j] =
          cfg.beta2 * p.adam_v.a[j] + (1.0 - cfg.beta2) * g.a[j] * g.a[j];
      const double mhat = p.adam_m.a[j] / bc1;
      const double vhat = p.adam_v.a[j] / bc2;
      p.value.a[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw InvalidArgument("read_param_set: truncated stream");
  return v;
}

void write_tensor(std::ostream& os, const Tensor& t) {
  write_pod<std::int32_t>(os, t.rows);
  write_pod<std::int32_t>(os, t.cols);
  os.write(reinterpret_cast<const char*>(t.a.data()),
           static_cast<std::streamsize>(t.a.size() * sizeof(double)));
}

Tensor read_tensor(std::istream& is) {
  const auto rows = read_pod<std::int32_t>(is);
  const auto cols = read_pod<std::int32_t>(is);
  if (rows < 0 || cols < 0) {
    throw InvalidArgument("read_param_set: bad tensor header");
  }
  Tensor t(rows, cols);
  is.read(reinterpret_cast<char*>(t.a.data()),
          static_cast<std::streamsize>(t.a.size() * sizeof(double)));
  if (!is) throw InvalidArgument("read_param_set: truncated tensor");
  return t;
}

}  // namespace

void write_param_set(std::ostream& os, const ParamSet& ps) {
  write_pod<std::int64_t>(os, ps.step_count);
  write_pod<std::int32_t>(os, static_cast<std::int32_t>(ps.params.size()));
  for (const auto& p : ps.params) {
    write_pod<std::int32_t>(os, static_cast<std::int32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_tensor(os, p.value);
    write_tensor(os, p.adam_m);
    write_tensor(os, p.adam_v);
  }
}

ParamSet read_param_set(std::istream& is) {
  ParamSet ps;
  ps.step_count = read_pod<std::int64_t>(is);
  const auto count = read_pod<std::int32_t>(is);
  for (std::int32_t i = 0; i < count; ++i) {
    const auto len = read_pod<std::int32_t>(is);
    std::string name(static_cast<std::size_t>(len), '\0');
    is.read(name.data(), len);
    Param p;
    p.name = name;
    p.value = read_tensor(is);
    p.adam_m = read_tensor(is);
    p.adam_v = read_tensor(is);
    ps.params.push_back(std::move(p));
  }
  return ps;
}

}  // namespace reflectsim::nn
