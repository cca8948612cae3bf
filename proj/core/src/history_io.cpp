#include "selfens/history_io.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "selfens/errors.hpp"
#include "selfens/serialize.hpp"
#include "selfens/text.hpp"

namespace selfens {

namespace {

using nlohmann::ordered_json;

struct Metric {
  std::string_view column;
  std::string_view key;
};

constexpr Metric kMetrics[] = {{"train_err", "train_error"},
                               {"test_err", "test_error"},
                               {"w", "unsup_weight"},
                               {"lambda", "learning_rate"}};

std::string_view metric_key(const std::string& column) {
  for (const Metric& m : kMetrics) {
    if (m.column == column) return m.key;
  }
  throw ConfigError("unknown curve metric '" + column + "' (expected train_err, test_err, w or lambda)");
}

std::vector<ordered_json> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open history file " + path.string());
  std::vector<ordered_json> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      records.push_back(ordered_json::parse(line));
    } catch (const ordered_json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!records.back().is_object() || !records.back().contains("epoch")) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": not an epoch record");
    }
  }
  return records;
}

}  // namespace

std::string epoch_record_json(const EpochRecord& r) {
  ordered_json j;
  j["epoch"] = r.epoch;
  j["learning_rate"] = r.learning_rate;
  j["unsup_weight"] = r.unsup_weight;
  j["beta1"] = r.beta1;
  j["supervised_loss"] = r.supervised_loss;
  j["unsupervised_loss"] = r.unsupervised_loss;
  j["train_error"] = r.train_error;
  j["test_error"] = r.test_error ? ordered_json(*r.test_error) : ordered_json(nullptr);
  j["wall_time"] = r.wall_time;
  j["forward_passes"] = r.forward_passes;
  return j.dump();
}

EpochRecord parse_epoch_record(const std::string& line) {
  try {
    const ordered_json j = ordered_json::parse(line);
    EpochRecord r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.learning_rate = j.at("learning_rate").get<double>();
    r.unsup_weight = j.at("unsup_weight").get<double>();
    r.beta1 = j.at("beta1").get<double>();
    r.supervised_loss = j.at("supervised_loss").get<double>();
    r.unsupervised_loss = j.at("unsupervised_loss").get<double>();
    r.train_error = j.at("train_error").get<double>();
    if (!j.at("test_error").is_null()) r.test_error = j.at("test_error").get<double>();
    r.wall_time = j.at("wall_time").get<double>();
    r.forward_passes = j.at("forward_passes").get<std::uint64_t>();
    return r;
  } catch (const ordered_json::exception& e) {
    throw DataError(std::string("bad history record: ") + e.what());
  }
}

void write_history(std::ostream& out, const RunHistory& history) {
  for (const EpochRecord& r : history.epochs) out << epoch_record_json(r) << '\n';
}

void save_history(const std::filesystem::path& path, const RunHistory& history) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write history file " + path.string());
  write_history(out, history);
  if (!out) throw DataError("failed writing history file " + path.string());
}

RunHistory load_history(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open history file " + path.string());
  RunHistory h;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      h.epochs.push_back(parse_epoch_record(line));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return h;
}

CurveExport export_curves(const std::vector<CurveInput>& inputs, std::vector<std::string> metrics) {
  if (inputs.empty()) throw ConfigError("export_curves needs at least one history file");
  if (metrics.empty()) {
    if (inputs.size() == 1) {
      for (const Metric& m : kMetrics) metrics.emplace_back(m.column);
    } else {
      metrics = {"test_err"};
    }
  }
  for (const std::string& m : metrics) metric_key(m);

  CurveExport out;
  std::vector<std::vector<ordered_json>> runs;
  std::size_t longest = 0;
  for (const CurveInput& in : inputs) {
    runs.push_back(read_records(in.path));
    longest = std::max(longest, runs.back().size());
  }
  for (std::size_t k = 0; k < runs.size(); ++k) {
    if (runs[k].size() != longest) {
      out.warnings.push_back(inputs[k].path.string() + " has " + std::to_string(runs[k].size()) +
                             " epochs, others have up to " + std::to_string(longest));
    }
  }

  std::ostringstream csv;
  csv << "epoch";
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const std::string prefix = inputs[k].label.empty() ? (runs.size() == 1 ? "" : "run" + std::to_string(k) + "_")
                                                       : inputs[k].label + "_";
    for (const std::string& m : metrics) csv << ',' << prefix << m;
  }
  csv << '\n';
  for (std::size_t e = 0; e < longest; ++e) {
    // The epoch axis is taken from whichever run reaches this row.
    std::string epoch;
    for (const auto& run : runs) {
      if (e < run.size()) {
        epoch = run[e].at("epoch").dump();
        break;
      }
    }
    csv << epoch;
    for (const auto& run : runs) {
      for (const std::string& m : metrics) {
        csv << ',';
        if (e >= run.size()) continue;
        const auto it = run[e].find(std::string(metric_key(m)));
        if (it != run[e].end() && !it->is_null()) csv << it->dump();
      }
    }
    csv << '\n';
  }
  out.csv = csv.str();
  return out;
}

EnsembleSummary inspect_ensemble(const std::filesystem::path& path) {
  const EnsembleState<float> state = load_ensemble<float>(path);
  EnsembleSummary s;
  s.rows = state.rows();
  s.classes = state.classes();
  s.alpha = state.alpha();
  s.epoch = state.epoch();
  const auto& counters = state.counters();
  std::vector<std::size_t> touched;
  for (std::size_t i = 0; i < s.rows; ++i) {
    ++s.counter_histogram[counters[i]];
    const auto row = state.z().item(i);
    if (std::all_of(row.begin(), row.end(), [](float v) { return v == 0.0f; })) ++s.zero_rows;
    if (counters[i] > 0) touched.push_back(i);
  }
  s.target_rows = touched.size();
  if (!touched.empty()) {
    const Tensor<float> targets = state.targets(touched);
    s.row_sum_min = std::numeric_limits<double>::infinity();
    s.row_sum_max = -std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (std::size_t r = 0; r < touched.size(); ++r) {
      double sum = 0.0;
      for (float v : targets.item(r)) sum += v;
      s.row_sum_min = std::min(s.row_sum_min, sum);
      s.row_sum_max = std::max(s.row_sum_max, sum);
      total += sum;
    }
    s.row_sum_mean = total / static_cast<double>(touched.size());
  }
  return s;
}

std::string ensemble_summary_text(const EnsembleSummary& s) {
  std::ostringstream out;
  out << "rows: " << s.rows << "\nclasses: " << s.classes << "\nalpha: " << format_real(s.alpha)
      << "\nepoch: " << s.epoch << "\nall-zero rows: " << s.zero_rows << "\ncounters:\n";
  for (const auto& [value, count] : s.counter_histogram) out << "  " << value << ": " << count << " rows\n";
  if (s.target_rows > 0) {
    out << "corrected row sums over " << s.target_rows << " rows: min " << format_real(s.row_sum_min) << ", max "
        << format_real(s.row_sum_max) << ", mean " << format_real(s.row_sum_mean) << '\n';
  } else {
    out << "corrected row sums: no row has been accumulated\n";
  }
  return out.str();
}

std::string ensemble_summary_json(const EnsembleSummary& s) {
  ordered_json j;
  j["rows"] = s.rows;
  j["classes"] = s.classes;
  j["alpha"] = s.alpha;
  j["epoch"] = s.epoch;
  j["zero_rows"] = s.zero_rows;
  ordered_json hist = ordered_json::object();
  for (const auto& [value, count] : s.counter_histogram) hist[std::to_string(value)] = count;
  j["counter_histogram"] = hist;
  j["target_rows"] = s.target_rows;
  if (s.target_rows > 0) {
    j["row_sum"] = {{"min", s.row_sum_min}, {"max", s.row_sum_max}, {"mean", s.row_sum_mean}};
  } else {
    j["row_sum"] = nullptr;
  }
  return j.dump(2);
}

}  // namespace selfens
