#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "selfens/trainer.hpp"

namespace selfens {

// History files are JSONL: one object per completed epoch with the keys
// epoch, learning_rate, unsup_weight, beta1, supervised_loss,
// unsupervised_loss, train_error, test_error (null when not evaluated),
// wall_time and forward_passes.

std::string epoch_record_json(const EpochRecord& record);
EpochRecord parse_epoch_record(const std::string& line);

/// Appends one line per record.
void write_history(std::ostream& out, const RunHistory& history);
void save_history(const std::filesystem::path& path, const RunHistory& history);
RunHistory load_history(const std::filesystem::path& path);

struct CurveInput {
  std::string label;  // column prefix; may be empty for a single run
  std::filesystem::path path;
};

struct CurveExport {
  std::string csv;
  std::vector<std::string> warnings;  // e.g. mismatched epoch counts
};

/// CSV with an `epoch` column and one column per (run, metric). Metrics are
/// train_err, test_err, w and lambda; a single run gets all four, several
/// runs default to test_err only. Cells are copied from the JSONL text, so
/// every number appears verbatim in some record; missing values stay empty.
CurveExport export_curves(const std::vector<CurveInput>& inputs, std::vector<std::string> metrics = {});

struct EnsembleSummary {
  std::uint64_t rows = 0;
  std::uint64_t classes = 0;
  double alpha = 0.0;
  std::uint64_t epoch = 0;
  std::map<std::uint64_t, std::uint64_t> counter_histogram;  // counter value -> rows
  std::uint64_t zero_rows = 0;   // rows whose Z is entirely zero
  std::uint64_t target_rows = 0;  // rows with a counter above zero
  double row_sum_min = 0.0;       // over bias-corrected targets of those rows
  double row_sum_max = 0.0;
  double row_sum_mean = 0.0;
};

/// Reads a Z file; throws FormatError on a bad magic, version or length.
EnsembleSummary inspect_ensemble(const std::filesystem::path& path);
std::string ensemble_summary_text(const EnsembleSummary& summary);
std::string ensemble_summary_json(const EnsembleSummary& summary);

}  // namespace selfens
