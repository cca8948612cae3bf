#include "selfens/schedules.hpp"

#include <algorithm>
#include <cmath>

#include "selfens/errors.hpp"

namespace selfens {

std::vector<std::string> ScheduleConfig::validate() const {
  if (total_epochs == 0) throw ConfigError("schedule.epochs must be >= 1");
  if (rampup_epochs + rampdown_epochs > total_epochs) {
    throw ConfigError("schedule.rampup + schedule.rampdown must not exceed schedule.epochs (" +
                      std::to_string(total_epochs) + ")");
  }
  if (!(w_max >= 0.0)) throw ConfigError("schedule.w_max must be >= 0");
  if (!(lr_max > 0.0)) throw ConfigError("schedule.lr_max must be > 0");
  if (!(beta1_start >= 0.0 && beta1_start < 1.0)) throw ConfigError("schedule.beta1_start must be in [0,1)");
  if (!(beta1_end >= 0.0 && beta1_end < 1.0)) throw ConfigError("schedule.beta1_end must be in [0,1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("schedule.beta2 must be in (0,1)");
  std::vector<std::string> warnings;
  if (static_cast<double>(rampup_epochs) < 0.1 * static_cast<double>(total_epochs)) {
    warnings.push_back("schedule.rampup is shorter than 10% of schedule.epochs");
  }
  return warnings;
}

double rampup(double epoch, std::size_t rampup_epochs) {
  if (rampup_epochs == 0) return 1.0;
  const double t = std::clamp(epoch / static_cast<double>(rampup_epochs), 0.0, 1.0);
  const double p = 1.0 - t;
  return std::exp(-5.0 * p * p);
}

double rampdown(double epoch, std::size_t total_epochs, std::size_t rampdown_epochs) {
  if (rampdown_epochs == 0) return 1.0;
  const double start = static_cast<double>(total_epochs) - static_cast<double>(rampdown_epochs);
  if (epoch < start) return 1.0;
  const double t = std::min((epoch - start) / static_cast<double>(rampdown_epochs), 1.0);
  return std::exp(-12.5 * t * t);
}

double unsup_weight(std::size_t epoch, const ScheduleConfig& cfg, std::size_t labeled,
                    std::size_t total, Algorithm algorithm) {
  if (labeled == 0 || labeled > total) {
    throw ConfigError("labeled count must satisfy 0 < M <= N (M=" + std::to_string(labeled) +
                      ", N=" + std::to_string(total) + ")");
  }
  if (algorithm == Algorithm::kSupervised) return 0.0;
  if (algorithm == Algorithm::kTemporal && epoch == 0 && cfg.temporal_first_epoch_zero) return 0.0;
  const double scale = static_cast<double>(labeled) / static_cast<double>(total);
  return cfg.w_max * scale * rampup(static_cast<double>(epoch), cfg.rampup_epochs);
}

double learning_rate(std::size_t epoch, const ScheduleConfig& cfg) {
  const auto e = static_cast<double>(epoch);
  return cfg.lr_max * rampup(e, cfg.rampup_epochs) * rampdown(e, cfg.total_epochs, cfg.rampdown_epochs);
}

double adam_beta1(std::size_t epoch, const ScheduleConfig& cfg) {
  const double down = rampdown(static_cast<double>(epoch), cfg.total_epochs, cfg.rampdown_epochs);
  return cfg.beta1_end + (cfg.beta1_start - cfg.beta1_end) * down;
}

}  // namespace selfens
