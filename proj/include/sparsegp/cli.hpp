#pragma once

#include "sparsegp/data.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>

namespace sparsegp {

/// How a command names its data: a manifest entry, a generator
/// (synthetic-regression, synthetic-classification, oilflow) or a CSV path.
struct DatasetSpec {
  std::string name = "snelson";
  Index n = 500;
  Index d = 2;  // input dimension for synthetic-regression, outputs for oilflow
  int classes = 3;
  std::uint64_t seed = 0;
};

Dataset resolve_dataset(const DatasetSpec& spec);

/// $SPARSEGP_RESULTS_DIR, or ./results.
std::string results_dir();

/// Entry point behind the sparsegp binary. Returns 0 on success, 1 on a
/// runtime failure (an error record is still logged) and 2 on bad usage.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sparsegp
