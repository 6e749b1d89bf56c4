#include "zubov/net.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "zubov/errors.hpp"
#include "zubov/rng.hpp"

namespace zubov {

namespace {

void check_widths(const std::vector<int>& widths) {
  if (widths.size() < 2) throw ConfigError("network needs at least two layers");
  for (int w : widths)
    if (w < 1) throw ConfigError("network layer width must be positive");
  if (widths.back() != 1) throw ConfigError("network output must be scalar");
}

std::size_t uz(int v) { return static_cast<std::size_t>(v); }

void ensure_scratch(const MLPParams& p, NetScratch& ws, bool tangents) {
  const auto layers = uz(p.layer_count());
  ws.z.resize(layers + 1);
  for (std::size_t l = 0; l <= layers; ++l) ws.z[l].resize(uz(p.widths[l]));
  if (tangents) {
    ws.t.resize(layers + 1);
    ws.ta.resize(layers);
    for (std::size_t l = 0; l <= layers; ++l) ws.t[l].resize(uz(p.widths[l]));
    for (std::size_t l = 0; l < layers; ++l) ws.ta[l].resize(uz(p.widths[l + 1]));
  }
  ws.off.resize(layers);
  std::size_t k = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    ws.off[l] = k;
    k += uz(p.widths[l + 1]) * uz(p.widths[l] + 1);
  }
}

// out = A z + b for layer l.
void affine(const MLPParams& p, std::size_t l, const std::vector<double>& z,
            std::vector<double>& out) {
  const int win = p.widths[l], wout = p.widths[l + 1];
  const double* w = p.weights[l].data();
  const double* b = p.biases[l].data();
  for (int j = 0; j < wout; ++j) {
    double acc = b[j];
    const double* row = w + uz(j) * uz(win);
    for (int i = 0; i < win; ++i) acc += row[i] * z[uz(i)];
    out[uz(j)] = acc;
  }
}

// out = A t (no bias), the tangent image of layer l.
void affine_tangent(const MLPParams& p, std::size_t l, const std::vector<double>& t,
                    std::vector<double>& out) {
  const int win = p.widths[l], wout = p.widths[l + 1];
  const double* w = p.weights[l].data();
  for (int j = 0; j < wout; ++j) {
    double acc = 0.0;
    const double* row = w + uz(j) * uz(win);
    for (int i = 0; i < win; ++i) acc += row[i] * t[uz(i)];
    out[uz(j)] = acc;
  }
}

}  // namespace

int param_count(const MLPParams& p) {
  int total = 0;
  for (int l = 0; l < p.layer_count(); ++l)
    total += p.widths[uz(l) + 1] * (p.widths[uz(l)] + 1);
  return total;
}

MLPParams init_mlp(const std::vector<int>& widths, std::uint64_t seed) {
  check_widths(widths);
  MLPParams p;
  p.widths = widths;
  p.seed = seed;
  Rng rng(seed);
  for (int l = 0; l + 1 < static_cast<int>(widths.size()); ++l) {
    const int win = widths[uz(l)], wout = widths[uz(l) + 1];
    const double bound = std::sqrt(6.0 / (win + wout));
    std::vector<double> w(uz(wout) * uz(win));
    for (double& v : w) v = rng.uniform(-bound, bound);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(uz(wout), 0.0);
  }
  return p;
}

void flatten(const MLPParams& p, std::span<double> out) {
  if (static_cast<int>(out.size()) != param_count(p))
    throw ConfigError("flatten: wrong buffer size");
  std::size_t k = 0;
  for (int l = 0; l < p.layer_count(); ++l) {
    for (double v : p.weights[uz(l)]) out[k++] = v;
    for (double v : p.biases[uz(l)]) out[k++] = v;
  }
}

void unflatten(MLPParams& p, std::span<const double> flat) {
  if (static_cast<int>(flat.size()) != param_count(p))
    throw ConfigError("unflatten: wrong buffer size");
  std::size_t k = 0;
  for (int l = 0; l < p.layer_count(); ++l) {
    for (double& v : p.weights[uz(l)]) v = flat[k++];
    for (double& v : p.biases[uz(l)]) v = flat[k++];
  }
}

double forward(const MLPParams& p, std::span<const double> x, NetScratch& ws) {
  if (static_cast<int>(x.size()) != p.input_dim())
    throw ConfigError("forward: input dimension mismatch");
  ensure_scratch(p, ws, false);
  const auto layers = uz(p.layer_count());
  ws.z[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers; ++l) {
    affine(p, l, ws.z[l], ws.z[l + 1]);
    if (l + 1 < layers)
      for (double& v : ws.z[l + 1]) v = std::tanh(v);
  }
  return ws.z[layers][0];
}

double forward(const MLPParams& p, std::span<const double> x) {
  NetScratch ws;
  return forward(p, x, ws);
}

void input_gradient(const MLPParams& p, std::span<const double> x,
                    std::span<double> out, NetScratch& ws) {
  if (static_cast<int>(out.size()) != p.input_dim())
    throw ConfigError("input_gradient: output buffer size mismatch");
  forward(p, x, ws);
  const auto layers = uz(p.layer_count());
  // zbar holds d y / d z_l while walking layers top down.
  ws.zbar.assign(1, 1.0);
  for (std::size_t l = layers; l-- > 0;) {
    if (l + 1 < layers) {
      // Undo the activation that produced z_{l+1}; tanh' = 1 - z^2.
      for (std::size_t j = 0; j < ws.z[l + 1].size(); ++j) {
        const double zj = ws.z[l + 1][j];
        ws.zbar[j] *= 1.0 - zj * zj;
      }
    }
    const int win = p.widths[l], wout = p.widths[l + 1];
    const double* w = p.weights[l].data();
    ws.zbar_next.assign(uz(win), 0.0);
    for (int j = 0; j < wout; ++j) {
      const double g = ws.zbar[uz(j)];
      const double* row = w + uz(j) * uz(win);
      for (int i = 0; i < win; ++i) ws.zbar_next[uz(i)] += row[i] * g;
    }
    std::swap(ws.zbar, ws.zbar_next);
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ws.zbar[i];
}

std::vector<double> input_gradient(const MLPParams& p, std::span<const double> x) {
  NetScratch ws;
  std::vector<double> g(uz(p.input_dim()));
  input_gradient(p, x, g, ws);
  return g;
}

double forward_tangent(const MLPParams& p, std::span<const double> x,
                       std::span<const double> v, NetScratch& ws,
                       double* tangent_out) {
  if (static_cast<int>(x.size()) != p.input_dim())
    throw ConfigError("forward_tangent: input dimension mismatch");
  const bool tg = !v.empty();
  if (tg && v.size() != x.size())
    throw ConfigError("forward_tangent: tangent dimension mismatch");

  ensure_scratch(p, ws, tg);
  ws.tangent_valid = tg;
  const auto layers = uz(p.layer_count());
  ws.z[0].assign(x.begin(), x.end());
  if (tg) ws.t[0].assign(v.begin(), v.end());
  for (std::size_t l = 0; l < layers; ++l) {
    affine(p, l, ws.z[l], ws.z[l + 1]);
    if (tg) affine_tangent(p, l, ws.t[l], ws.ta[l]);
    if (l + 1 < layers) {
      for (std::size_t j = 0; j < ws.z[l + 1].size(); ++j) {
        const double zj = std::tanh(ws.z[l + 1][j]);
        ws.z[l + 1][j] = zj;
        if (tg) ws.t[l + 1][j] = (1.0 - zj * zj) * ws.ta[l][j];
      }
    } else if (tg) {
      ws.t[l + 1] = ws.ta[l];
    }
  }
  if (tg && tangent_out) *tangent_out = ws.t[layers][0];
  return ws.z[layers][0];
}

void backward_param(const MLPParams& p, double c_y, double c_t,
                    std::span<double> grad, NetScratch& ws) {
  if (static_cast<int>(grad.size()) != param_count(p))
    throw ConfigError("backward_param: gradient buffer size mismatch");
  const bool tg = ws.tangent_valid;
  const auto layers = uz(p.layer_count());

  // Reverse pass over the (primal, tangent) pair. zbar/tbar are adjoints of
  // the pre-activations a_l and ta_l while layer l is being processed.
  ws.zbar.assign(1, c_y);
  if (tg) ws.tbar.assign(1, c_t);
  for (std::size_t l = layers; l-- > 0;) {
    if (l + 1 < layers) {
      // Adjoints arriving at post-activation (z_{l+1}, t_{l+1}); pull them
      // back through z = tanh(a), t = (1 - z^2) * ta. The second relation
      // feeds the primal adjoint via d/da (1 - tanh(a)^2) = -2 z (1 - z^2).
      for (std::size_t j = 0; j < ws.z[l + 1].size(); ++j) {
        const double zj = ws.z[l + 1][j];
        const double s1 = 1.0 - zj * zj;
        double ab = s1 * ws.zbar[j];
        if (tg) {
          ab += -2.0 * zj * s1 * ws.ta[l][j] * ws.tbar[j];
          ws.tbar[j] *= s1;
        }
        ws.zbar[j] = ab;
      }
    }
    const int win = p.widths[l], wout = p.widths[l + 1];
    const double* w = p.weights[l].data();
    double* gw = grad.data() + ws.off[l];
    double* gb = gw + uz(wout) * uz(win);
    ws.zbar_next.assign(uz(win), 0.0);
    if (tg) ws.tbar_next.assign(uz(win), 0.0);
    for (int j = 0; j < wout; ++j) {
      const double ab = ws.zbar[uz(j)];
      const double tb = tg ? ws.tbar[uz(j)] : 0.0;
      const double* row = w + uz(j) * uz(win);
      double* grow = gw + uz(j) * uz(win);
      for (int i = 0; i < win; ++i) {
        grow[i] += ab * ws.z[l][uz(i)];
        ws.zbar_next[uz(i)] += row[i] * ab;
      }
      if (tg) {
        for (int i = 0; i < win; ++i) {
          grow[i] += tb * ws.t[l][uz(i)];
          ws.tbar_next[uz(i)] += row[i] * tb;
        }
      }
      gb[j] += ab;
    }
    std::swap(ws.zbar, ws.zbar_next);
    if (tg) std::swap(ws.tbar, ws.tbar_next);
  }
}

double mixed_param_gradient(const MLPParams& p, std::span<const double> x,
                            double c_y, std::span<const double> v,
                            std::span<double> grad, NetScratch& ws) {
  double ty = 0.0;
  double w = forward_tangent(p, x, v, ws, &ty);
  backward_param(p, c_y, 1.0, grad, ws);
  return c_y * w + ty;
}

Interval interval_forward(const MLPParams& p, const Box& b) {
  if (b.size() != p.input_dim())
    throw ConfigError("interval_forward: box dimension mismatch");
  const auto layers = uz(p.layer_count());
  std::vector<Interval> z = b.dims, next;
  for (std::size_t l = 0; l < layers; ++l) {
    const int win = p.widths[l], wout = p.widths[l + 1];
    const double* w = p.weights[l].data();
    next.assign(uz(wout), Interval{});
    for (int j = 0; j < wout; ++j) {
      Interval acc{p.biases[l][uz(j)]};
      const double* row = w + uz(j) * uz(win);
      for (int i = 0; i < win; ++i) acc = acc + Interval{row[i]} * z[uz(i)];
      next[uz(j)] = (l + 1 < layers) ? tanh(acc) : acc;
    }
    std::swap(z, next);
  }
  return z[0];
}

std::vector<Interval> interval_input_gradient(const MLPParams& p, const Box& b) {
  if (b.size() != p.input_dim())
    throw ConfigError("interval_input_gradient: box dimension mismatch");
  const auto layers = uz(p.layer_count());
  // Forward pass keeping pre-activation enclosures of every hidden layer.
  std::vector<std::vector<Interval>> pre(layers);
  std::vector<Interval> z = b.dims, next;
  for (std::size_t l = 0; l < layers; ++l) {
    const int win = p.widths[l], wout = p.widths[l + 1];
    const double* w = p.weights[l].data();
    pre[l].assign(uz(wout), Interval{});
    next.assign(uz(wout), Interval{});
    for (int j = 0; j < wout; ++j) {
      Interval acc{p.biases[l][uz(j)]};
      const double* row = w + uz(j) * uz(win);
      for (int i = 0; i < win; ++i) acc = acc + Interval{row[i]} * z[uz(i)];
      pre[l][uz(j)] = acc;
      next[uz(j)] = (l + 1 < layers) ? tanh(acc) : acc;
    }
    std::swap(z, next);
  }
  // Reverse: g_{l} = A_l^T (tanh'(a_l) o g_{l+1}), output layer derivative 1.
  std::vector<Interval> g(1, Interval{1.0}), gprev;
  for (std::size_t l = layers; l-- > 0;) {
    if (l + 1 < layers)
      for (std::size_t j = 0; j < g.size(); ++j)
        g[j] = g[j] * tanh_derivative(pre[l][j]);
    const int win = p.widths[l], wout = p.widths[l + 1];
    const double* w = p.weights[l].data();
    gprev.assign(uz(win), Interval{0.0});
    for (int j = 0; j < wout; ++j) {
      const double* row = w + uz(j) * uz(win);
      for (int i = 0; i < win; ++i)
        gprev[uz(i)] = gprev[uz(i)] + Interval{row[i]} * g[uz(j)];
    }
    std::swap(g, gprev);
  }
  return g;
}

namespace {

void append_number(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

void append_array(std::string& out, const std::vector<double>& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    append_number(out, v[i]);
  }
  out += ']';
}

}  // namespace

void save_checkpoint(const MLPParams& p, const std::string& path) {
  std::string out = "{\n  \"version\": 1,\n  \"widths\": [";
  for (std::size_t i = 0; i < p.widths.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(p.widths[i]);
  }
  out += "],\n  \"seed\": " + std::to_string(p.seed) + ",\n  \"weights\": [";
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    if (l) out += ',';
    out += "\n    ";
    append_array(out, p.weights[l]);
  }
  out += "\n  ],\n  \"biases\": [";
  for (std::size_t l = 0; l < p.biases.size(); ++l) {
    if (l) out += ',';
    out += "\n    ";
    append_array(out, p.biases[l]);
  }
  out += "\n  ]\n}\n";
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open checkpoint file for writing: " + path);
  f << out;
  if (!f) throw ConfigError("failed writing checkpoint: " + path);
}

MLPParams load_checkpoint(const std::string& path, int expect_input_dim) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open checkpoint file: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("corrupt checkpoint " + path + ": " + e.what());
  }
  try {
    if (!j.is_object() || j.value("version", -1) != 1)
      throw ConfigError("unsupported checkpoint version in " + path);
    MLPParams p;
    p.widths = j.at("widths").get<std::vector<int>>();
    check_widths(p.widths);
    p.seed = j.at("seed").get<std::uint64_t>();
    p.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    p.biases = j.at("biases").get<std::vector<std::vector<double>>>();
    const auto layers = uz(p.layer_count());
    if (p.weights.size() != layers || p.biases.size() != layers)
      throw ConfigError("checkpoint layer count mismatch in " + path);
    for (std::size_t l = 0; l < layers; ++l) {
      if (p.weights[l].size() != uz(p.widths[l]) * uz(p.widths[l + 1]) ||
          p.biases[l].size() != uz(p.widths[l + 1]))
        throw ConfigError("checkpoint shape mismatch in " + path);
      for (double v : p.weights[l])
        if (!std::isfinite(v)) throw ConfigError("non-finite weight in " + path);
      for (double v : p.biases[l])
        if (!std::isfinite(v)) throw ConfigError("non-finite bias in " + path);
    }
    if (expect_input_dim >= 0 && p.input_dim() != expect_input_dim)
      throw ConfigError("checkpoint input dimension " +
                        std::to_string(p.input_dim()) + " does not match system dimension " +
                        std::to_string(expect_input_dim));
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed checkpoint " + path + ": " + e.what());
  }
}

}  // namespace zubov
