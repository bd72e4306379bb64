#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sfk/data/manifest.hpp"
#include "sfk/eval/metrics.hpp"
#include "sfk/model/config.hpp"
#include "sfk/model/slowfast.hpp"
#include "sfk/rng.hpp"
#include "sfk/triage/triage.hpp"

namespace sfk::testing {

/// Fresh directory under the system temp dir; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// 8-frame clip, alpha 2, beta 1/4, width 8, one block per stage.
model::SlowFastConfig gradcheck_config();

/// 4x16 on a 64-frame clip with 32-pixel crops and one block per stage.
model::SlowFastConfig micro_4x16(int num_classes);

/// Random (N, 3, T, H, W) batch shaped for `config`.
Tensor random_clips(const model::SlowFastConfig& config, int n, std::uint64_t seed);

/// Gives every BatchNorm layer non-trivial statistics and affine parameters,
/// and un-zeroes the zero-initialized ones, so gradients reach every path.
void randomize_batchnorm(model::SlowFastNetwork& net, std::uint64_t seed);

struct GradCheckResult {
  double worst_relative_error = 0.0;
  int coordinates = 0;
  double slow_stem_grad_norm = 0.0;
  double fast_stem_grad_norm = 0.0;
};

/// Central differences of sum(logits * weights) wrt `coordinates` random input
/// entries, evaluated in training mode with dropout disabled.
GradCheckResult input_gradient_check(model::SlowFastNetwork& net, const Tensor& clips, int coordinates,
                                     std::uint64_t seed, double step = 1e-5);

/// THETIS-shaped manifest: 12 classes x 165 records, 55 players each doing
/// every class three times.
data::DatasetManifest thetis_shaped_manifest();

/// Random prediction records over `classes` classes.
std::vector<eval::PredictionRecord> random_records(Rng& rng, int n, int classes);

/// `n` misclassified cases with ids e00, e01, ... (true serve, predicted smash).
std::vector<triage::ErrorCase> error_cases(int n);

/// Category sets for the 54 cases of `error_cases(54)` giving counts
/// serve confusion 24, slice/volley 11, smash/serve 9, beginners 5, others 8.
std::map<std::string, std::set<std::string>> category_fixture();

}  // namespace sfk::testing
