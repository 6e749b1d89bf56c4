#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "zubov/interval.hpp"

namespace zubov {

/// Fully connected network, tanh hidden layers, affine scalar output.
/// widths = [n, w1, ..., wk, 1]; layer l maps widths[l] -> widths[l+1].
/// weights[l] is row-major (widths[l+1] x widths[l]).
struct MLPParams {
  std::vector<int> widths;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  std::uint64_t seed = 0;

  int input_dim() const { return widths.empty() ? 0 : widths.front(); }
  int layer_count() const { return static_cast<int>(widths.size()) - 1; }
};

int param_count(const MLPParams& p);

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
/// Bit-identical for equal (widths, seed).
MLPParams init_mlp(const std::vector<int>& widths, std::uint64_t seed);

/// Flat parameter order: per layer, weights row-major, then biases.
void flatten(const MLPParams& p, std::span<double> out);
void unflatten(MLPParams& p, std::span<const double> flat);

/// Reusable per-layer work vectors; resized on first use with a given net.
struct NetScratch {
  std::vector<std::vector<double>> z;     // activations, z[0] = input copy
  std::vector<std::vector<double>> t;     // forward tangents along v
  std::vector<std::vector<double>> ta;    // pre-activation tangents
  std::vector<double> zbar, zbar_next;    // reverse accumulators
  std::vector<double> tbar, tbar_next;
  std::vector<std::size_t> off;           // flat offset of each layer's weights
  bool tangent_valid = false;             // set by forward_tangent
};

double forward(const MLPParams& p, std::span<const double> x, NetScratch& ws);
double forward(const MLPParams& p, std::span<const double> x);

void input_gradient(const MLPParams& p, std::span<const double> x,
                    std::span<double> out, NetScratch& ws);
std::vector<double> input_gradient(const MLPParams& p, std::span<const double> x);

/// Forward pass keeping the state backward_param needs, with an optional
/// input tangent direction v. Returns W(x); when v is nonempty,
/// *tangent_out = v . grad_x W(x). Pass an empty v for plain value terms;
/// the tangent work is then skipped entirely.
double forward_tangent(const MLPParams& p, std::span<const double> x,
                       std::span<const double> v, NetScratch& ws,
                       double* tangent_out = nullptr);

/// Accumulates into `grad` (flat layout, length param_count) the exact
/// parameter gradient of
///     S(theta) = c_y * W(x) + c_t * (v . grad_x W(x)),
/// the building block of losses whose residual contains grad_x W. Consumes
/// the state of the immediately preceding forward_tangent on this scratch;
/// c_t is ignored when that pass had no tangent.
void backward_param(const MLPParams& p, double c_y, double c_t,
                    std::span<double> grad, NetScratch& ws);

/// forward_tangent + backward_param(c_y, 1). Returns S.
double mixed_param_gradient(const MLPParams& p, std::span<const double> x,
                            double c_y, std::span<const double> v,
                            std::span<double> grad, NetScratch& ws);

/// Sound enclosure of W over the box: interval affine maps layer by layer,
/// tanh endpoint-wise.
Interval interval_forward(const MLPParams& p, const Box& b);

/// Sound enclosure of grad_x W over the box: interval reverse pass with
/// tanh' ranges taken on the pre-activation enclosures.
std::vector<Interval> interval_input_gradient(const MLPParams& p, const Box& b);

/// Checkpoint I/O. JSON with 17-significant-digit numbers; load(save(p))
/// reproduces p bitwise. `expect_input_dim` >= 0 rejects a mismatched net.
void save_checkpoint(const MLPParams& p, const std::string& path);
MLPParams load_checkpoint(const std::string& path, int expect_input_dim = -1);

}  // namespace zubov
