#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace selfens {

enum class Algorithm { kSupervised, kPi, kTemporal };

/// Time-varying training scalars. Epochs are zero-based and schedules are
/// evaluated once per epoch.
struct ScheduleConfig {
  std::size_t total_epochs = 300;
  std::size_t rampup_epochs = 80;
  std::size_t rampdown_epochs = 50;
  double w_max = 30.0;
  double lr_max = 0.003;
  double beta1_start = 0.9;
  double beta1_end = 0.5;
  double beta2 = 0.999;
  /// Zero unsupervised weight on epoch 0. Forced for temporal ensembling,
  /// whose targets do not exist before the first epoch completes.
  bool temporal_first_epoch_zero = true;

  /// Throws ConfigError on a violated invariant; returns non-fatal warnings.
  std::vector<std::string> validate() const;

  friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

/// exp[-5(1-T)^2], T = min(epoch / rampup_epochs, 1). Returns 1 when
/// rampup_epochs is 0.
double rampup(double epoch, std::size_t rampup_epochs);

/// 1 until the last `rampdown_epochs` epochs, then exp[-12.5 T^2] with T going
/// linearly from 0 at epoch total-rampdown to 1 at epoch total.
double rampdown(double epoch, std::size_t total_epochs, std::size_t rampdown_epochs);

/// w_max * (M/N) * rampup(epoch); zero on epoch 0 for temporal ensembling.
/// Throws ConfigError unless 0 < M <= N.
double unsup_weight(std::size_t epoch, const ScheduleConfig& cfg, std::size_t labeled,
                    std::size_t total, Algorithm algorithm);

/// lr_max * rampup * rampdown.
double learning_rate(std::size_t epoch, const ScheduleConfig& cfg);

/// beta1_end + (beta1_start - beta1_end) * rampdown.
double adam_beta1(std::size_t epoch, const ScheduleConfig& cfg);

}  // namespace selfens
