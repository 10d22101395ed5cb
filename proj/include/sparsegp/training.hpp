#pragma once

#include "sparsegp/params.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sparsegp {

enum class OptimizerKind { Adam, LBFGS };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct LbfgsConfig {
  int memory = 10;
  double armijo_c1 = 1e-4;
  int max_backtracks = 40;
  double grad_tol = 1e-7;  // stop when max |g| falls below this
  double rel_tol = 1e-12;  // stop when the objective stops moving
};

struct TrainConfig {
  std::string objective_id;
  OptimizerKind optimizer = OptimizerKind::Adam;
  AdamConfig adam;
  LbfgsConfig lbfgs;
  int iterations = 1000;
  Index batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 0;
  int trace_every = 1;
  std::string checkpoint_path;  // written on divergence and at the end when set
};

struct ValueAndGradient {
  double value = 0.0;
  Vector gradient;
};

/// Objective value and its gradient with respect to every flat parameter.
/// Throws NumericalError naming the offending block when either is not finite.
ValueAndGradient value_and_gradient(const Objective& obj, const ParamVector& params,
                                    const EvalContext& ctx = {});
Vector gradient(const Objective& obj, const ParamVector& params, const EvalContext& ctx = {});

struct FdReport {
  double max_rel_error = 0.0;
  Index worst_index = -1;
  std::string worst_param;
  Vector analytic;
  Vector numeric;
};

/// Central differences with step h_i = rel_step * (1 + |theta_i|); relative
/// error |g - fd| / max(|g|, |fd|, floor).
FdReport fd_check(const Objective& obj, const ParamVector& params, const EvalContext& ctx = {},
                  double rel_step = 1e-5, double floor = 1e-3);

struct TraceEntry {
  int iteration = 0;
  double objective = 0.0;
  double wall_seconds = 0.0;
};

struct FitResult {
  ParamVector params;
  std::vector<TraceEntry> trace;
  double final_objective = 0.0;
  int iterations_run = 0;
  bool diverged = false;
  std::string message;
};

/// Maximizes the objective from `init`.
FitResult fit(const TrainConfig& config, const Objective& obj, const ParamVector& init);

struct Checkpoint {
  int schema_version = 1;
  std::string objective_id;
  ParamVector params;
  std::string scaling_mode;
  std::string dataset_hash;
  std::vector<TraceEntry> trace_tail;
  std::map<std::string, std::string> meta;
};

inline constexpr int kCheckpointSchema = 1;

/// Writes to a temporary file in the same directory, then renames.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sparsegp
