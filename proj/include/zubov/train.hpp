#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "zubov/net.hpp"
#include "zubov/oracle.hpp"
#include "zubov/rng.hpp"
#include "zubov/system.hpp"

namespace zubov {

struct TrainConfig {
  int n_collocation = 3000;
  int n_boundary = 600;
  int n_data = 3000;
  double c_res = 1.0;
  double c_bc = 1.0;
  double c_zero = 1.0;
  double c_data = 1.0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 30000;
  int batch_size = 0;  // 0 = full batch; > 0 = deterministic rotating window
  std::uint64_t seed = 0;
  int resample_every = 100;
  int threads = 1;
};

/// One sampled training set. Point coordinates are flat, stride = dim.
/// The scaled field and |x|^2 at collocation points are cached here because
/// they are fixed between resamples while the net is not.
struct TrainBatch {
  int dim = 0;
  std::vector<double> collocation;
  std::vector<double> colloc_field;  // scaled field at each collocation point
  std::vector<double> colloc_norm2;  // |x|^2 at each collocation point
  std::vector<double> boundary;
  std::vector<double> data_points;
  std::vector<double> data_labels;   // oracle W values

  int collocation_count() const {
    return dim ? static_cast<int>(collocation.size()) / dim : 0;
  }
  int boundary_count() const {
    return dim ? static_cast<int>(boundary.size()) / dim : 0;
  }
  int data_count() const { return static_cast<int>(data_labels.size()); }
};

/// Collocation uniform in the ROI; boundary points uniform on the ROI faces
/// with faces weighted by their area; data points drawn from the dataset
/// without replacement (all of it if n_data covers it). `data` may be null
/// when c_data = 0.
TrainBatch sample_batch(const SystemSpec& s, const TrainConfig& cfg, Rng& rng,
                        const Dataset* data = nullptr);

struct LossParts {
  double total = 0.0;
  double res = 0.0;   // mean squared PDE residual
  double bc = 0.0;    // mean squared (W - 1) on the boundary
  double zero = 0.0;  // W(0)^2
  double data = 0.0;  // mean squared (W - label)
};

/// total = c_res*res + c_bc*bc + c_zero*zero + c_data*data. A component
/// whose weight is zero is skipped and reported as 0. The residual term
/// evaluates phi through its smooth extension, so a net output outside
/// [0, 1] is a large loss rather than a domain error.
LossParts pinn_loss(const MLPParams& p, const TrainBatch& b,
                    const TrainConfig& cfg, const SystemSpec& s);

/// Same scan, also accumulating the exact parameter gradient of the total
/// into `grad` (overwritten, flat layout). Contributions are reduced in
/// fixed index-block order, so the result is independent of thread count.
LossParts loss_param_gradient(const MLPParams& p, const TrainBatch& b,
                              const TrainConfig& cfg, const SystemSpec& s,
                              std::span<double> grad);

struct EpochRecord {
  int epoch = 0;
  LossParts loss;
  double grad_norm = 0.0;
  double wall_time_s = 0.0;
};

struct TrainResult {
  MLPParams params;
  std::vector<EpochRecord> history;
};

/// Full-batch first-order training with bias-corrected moment estimates.
/// Collocation and boundary sets are redrawn every resample_every epochs;
/// the data subset stays fixed. Deterministic given (p0, cfg, dataset).
/// Throws TrainingAbort when any loss component or the gradient turns
/// non-finite.
TrainResult train(const MLPParams& p0, const SystemSpec& s,
                  const TrainConfig& cfg, const Dataset& data);

/// CSV: epoch,total,res,bc,zero,data,grad_norm,wall_time_s.
void write_history_csv(const std::vector<EpochRecord>& history, std::ostream& out);

}  // namespace zubov
