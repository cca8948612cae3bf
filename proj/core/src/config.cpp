#include "selfens/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "selfens/errors.hpp"
#include "selfens/text.hpp"

namespace selfens {

namespace {

struct Entry {
  ConfigKey key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Ref>
Entry real_entry(ConfigKey key, Ref ref) {
  return {key, [ref](RunConfig& c, std::string_view v) { ref(c) = parse_real(v); },
          [ref](const RunConfig& c) { return format_real(ref(const_cast<RunConfig&>(c))); }};
}

template <typename Ref>
Entry size_entry(ConfigKey key, Ref ref) {
  return {key, [ref](RunConfig& c, std::string_view v) { ref(c) = parse_size(v); },
          [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
}

template <typename Ref>
Entry bool_entry(ConfigKey key, Ref ref) {
  return {key, [ref](RunConfig& c, std::string_view v) { ref(c) = parse_bool(v); },
          [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <typename Ref>
Entry text_entry(ConfigKey key, Ref ref) {
  return {key, [ref](RunConfig& c, std::string_view v) { ref(c) = std::string(v); },
          [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); }};
}

template <typename Ref, typename Parse, typename Name>
Entry enum_entry(ConfigKey key, Ref ref, Parse parse, Name name) {
  return {key, [ref, parse](RunConfig& c, std::string_view v) { ref(c) = parse(v); },
          [ref, name](const RunConfig& c) { return std::string(name(ref(const_cast<RunConfig&>(c)))); }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back(enum_entry({"run", "algorithm", "algorithm", "supervised | pi | temporal"},
                           [](RunConfig& c) -> Algorithm& { return c.algorithm; }, parse_algorithm, algorithm_name));
    t.push_back({{"run", "seed", "seed", "base seed every random stream derives from"},
                 [](RunConfig& c, std::string_view v) { c.seed = parse_u64(v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    t.push_back(size_entry({"run", "batch_size", "batch-size", "minibatch size"},
                           [](RunConfig& c) -> std::size_t& { return c.batch_size; }));
    t.push_back(size_entry({"run", "replicates", "replicates", "number of seeds for replicate runs"},
                           [](RunConfig& c) -> std::size_t& { return c.replicates; }));
    t.push_back(real_entry({"run", "alpha", "alpha", "ensemble accumulation decay in [0,1)"},
                           [](RunConfig& c) -> double& { return c.alpha; }));
    t.push_back(enum_entry({"run", "precision", "precision", "f32 | f64"},
                           [](RunConfig& c) -> Precision& { return c.precision; }, parse_precision, precision_name));
    t.push_back(enum_entry({"run", "supervised_norm", "supervised-norm", "labeled | batch"},
                           [](RunConfig& c) -> SupervisedNorm& { return c.supervised_norm; }, parse_supervised_norm,
                           supervised_norm_name));
    t.push_back(bool_entry({"run", "data_dependent_init", "data-dependent-init", "initialize gains from a first batch"},
                           [](RunConfig& c) -> bool& { return c.data_dependent_init; }));
    t.push_back(bool_entry({"run", "ensemble_post_epoch_sweep", "ensemble-post-epoch-sweep",
                            "accumulate Z from an extra pass after each epoch"},
                           [](RunConfig& c) -> bool& { return c.ensemble_post_epoch_sweep; }));
    t.push_back(size_entry({"run", "eval_every", "eval-every", "test evaluation interval in epochs"},
                           [](RunConfig& c) -> std::size_t& { return c.eval_every; }));
    t.push_back(size_entry({"run", "eval_batch", "eval-batch", "evaluation minibatch size"},
                           [](RunConfig& c) -> std::size_t& { return c.eval_batch; }));
    t.push_back(text_entry({"run", "history_path", "history", "JSONL history output"},
                           [](RunConfig& c) -> std::string& { return c.history_path; }));
    t.push_back(text_entry({"run", "checkpoint_path", "checkpoint", "checkpoint output"},
                           [](RunConfig& c) -> std::string& { return c.checkpoint_path; }));
    t.push_back(text_entry({"run", "ensemble_path", "ensemble", "ensemble (Z) output"},
                           [](RunConfig& c) -> std::string& { return c.ensemble_path; }));

    t.push_back(size_entry({"schedule", "epochs", "epochs", "total training epochs"},
                           [](RunConfig& c) -> std::size_t& { return c.schedule.total_epochs; }));
    t.push_back(size_entry({"schedule", "rampup", "rampup", "ramp-up length in epochs"},
                           [](RunConfig& c) -> std::size_t& { return c.schedule.rampup_epochs; }));
    t.push_back(size_entry({"schedule", "rampdown", "rampdown", "ramp-down length in epochs"},
                           [](RunConfig& c) -> std::size_t& { return c.schedule.rampdown_epochs; }));
    t.push_back(real_entry({"schedule", "w_max", "w-max", "maximum unsupervised weight before M/N scaling"},
                           [](RunConfig& c) -> double& { return c.schedule.w_max; }));
    t.push_back(real_entry({"schedule", "lr_max", "lr-max", "maximum learning rate"},
                           [](RunConfig& c) -> double& { return c.schedule.lr_max; }));
    t.push_back(real_entry({"schedule", "beta1_start", "beta1-start", "Adam beta1 before ramp-down"},
                           [](RunConfig& c) -> double& { return c.schedule.beta1_start; }));
    t.push_back(real_entry({"schedule", "beta1_end", "beta1-end", "Adam beta1 at the last epoch"},
                           [](RunConfig& c) -> double& { return c.schedule.beta1_end; }));
    t.push_back(real_entry({"schedule", "beta2", "beta2", "Adam beta2"},
                           [](RunConfig& c) -> double& { return c.schedule.beta2; }));
    t.push_back(bool_entry({"schedule", "temporal_first_epoch_zero", "temporal-first-epoch-zero",
                            "zero unsupervised weight on epoch 0"},
                           [](RunConfig& c) -> bool& { return c.schedule.temporal_first_epoch_zero; }));

    t.push_back(real_entry({"optimizer", "epsilon", "adam-epsilon", "Adam epsilon"},
                           [](RunConfig& c) -> double& { return c.adam_epsilon; }));

    t.push_back(text_entry({"network", "preset", "network", "mlp | cnn_small | cifar | custom"},
                           [](RunConfig& c) -> std::string& { return c.network.preset; }));
    t.push_back(size_entry({"network", "hidden", "hidden", "width of the small presets"},
                           [](RunConfig& c) -> std::size_t& { return c.network.options.hidden; }));
    t.push_back(size_entry({"network", "hidden_layers", "hidden-layers", "hidden layers of the mlp preset"},
                           [](RunConfig& c) -> std::size_t& { return c.network.options.hidden_layers; }));
    t.push_back(real_entry({"network", "input_noise", "input-noise", "gaussian input noise sigma"},
                           [](RunConfig& c) -> double& { return c.network.options.input_noise; }));
    t.push_back(real_entry({"network", "dropout", "dropout", "dropout probability"},
                           [](RunConfig& c) -> double& { return c.network.options.dropout; }));
    t.push_back(bool_entry({"network", "weight_norm", "weight-norm", "weight-normalized layers"},
                           [](RunConfig& c) -> bool& { return c.network.options.weight_norm; }));
    t.push_back(bool_entry({"network", "mean_only_bn", "mean-only-bn", "mean-only batch normalization"},
                           [](RunConfig& c) -> bool& { return c.network.options.mean_only_bn; }));
    t.push_back(text_entry({"network", "layers", "layers", "layer string for preset custom"},
                           [](RunConfig& c) -> std::string& { return c.network.layers; }));

    t.push_back({{"augment", "translate", "translate", "maximum translation in pixels"},
                 [](RunConfig& c, std::string_view v) {
                   const std::size_t n = parse_size(v);
                   if (n > 1024) throw ConfigError("translation of " + std::to_string(n) + " pixels is too large");
                   c.augment.max_translation = static_cast<int>(n);
                 },
                 [](const RunConfig& c) { return std::to_string(c.augment.max_translation); }});
    t.push_back(bool_entry({"augment", "flip", "flip", "random horizontal flips"},
                           [](RunConfig& c) -> bool& { return c.augment.flip; }));
    t.push_back(real_entry({"augment", "noise", "augment-noise", "additive gaussian noise sigma"},
                           [](RunConfig& c) -> double& { return c.augment.noise_sigma; }));
    t.push_back(enum_entry({"augment", "pairing", "pairing", "independent | shared_per_pair"},
                           [](RunConfig& c) -> Pairing& { return c.augment.pairing; }, parse_pairing, pairing_name));

    t.push_back(enum_entry({"data", "source", "data", "two_moons | cifar_binary | raw_tensor | csv"},
                           [](RunConfig& c) -> DataSource& { return c.data.source; }, parse_data_source,
                           data_source_name));
    t.push_back(text_entry({"data", "train_path", "train", "training file"},
                           [](RunConfig& c) -> std::string& { return c.data.train_path; }));
    t.push_back(text_entry({"data", "test_path", "test", "test file"},
                           [](RunConfig& c) -> std::string& { return c.data.test_path; }));
    t.push_back(text_entry({"data", "pool_path", "pool", "extra unlabeled inputs"},
                           [](RunConfig& c) -> std::string& { return c.data.pool_path; }));
    t.push_back(size_entry({"data", "moons_train", "moons-train", "generated training points"},
                           [](RunConfig& c) -> std::size_t& { return c.data.moons_train; }));
    t.push_back(size_entry({"data", "moons_test", "moons-test", "generated test points"},
                           [](RunConfig& c) -> std::size_t& { return c.data.moons_test; }));
    t.push_back(size_entry({"data", "moons_pool", "moons-pool", "generated extra unlabeled points"},
                           [](RunConfig& c) -> std::size_t& { return c.data.moons_pool; }));
    t.push_back(real_entry({"data", "moons_noise", "moons-noise", "two-moons coordinate noise"},
                           [](RunConfig& c) -> double& { return c.data.moons_noise; }));
    t.push_back(size_entry({"data", "labels_per_class", "labels-per-class", "labels kept per class; 0 keeps all"},
                           [](RunConfig& c) -> std::size_t& { return c.data.labels_per_class; }));
    t.push_back(real_entry({"data", "corruption", "corruption", "fraction of labels randomized"},
                           [](RunConfig& c) -> double& { return c.data.corruption; }));
    t.push_back({{"data", "pool_cap", "pool-cap", "extra items per epoch, or none"},
                 [](RunConfig& c, std::string_view v) {
                   if (trim(v) == "none") {
                     c.data.pool_cap.reset();
                   } else {
                     c.data.pool_cap = parse_size(v);
                   }
                 },
                 [](const RunConfig& c) {
                   return c.data.pool_cap ? std::to_string(*c.data.pool_cap) : std::string("none");
                 }});
    t.push_back(enum_entry({"data", "preprocess", "preprocess", "none | zca | standardize"},
                           [](RunConfig& c) -> Preprocess& { return c.data.preprocess; }, parse_preprocess,
                           preprocess_name));
    t.push_back(real_entry({"data", "zca_epsilon", "zca-epsilon", "ZCA regularizer"},
                           [](RunConfig& c) -> double& { return c.data.zca_epsilon; }));
    return t;
  }();
  return table;
}

const Entry& find_entry(std::string_view name) {
  for (const Entry& e : entries()) {
    if (e.key.qualified() == name || e.key.name == name || e.key.flag == name) return e;
  }
  throw ConfigError("unknown config key '" + std::string(name) + "'");
}

}  // namespace

std::span<const ConfigKey> config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const Entry& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

const ConfigKey& find_config_key(std::string_view name) { return find_entry(name).key; }

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  const Entry& e = find_entry(key);
  try {
    e.set(config, trim(value));
  } catch (const ConfigError& err) {
    throw ConfigError(e.key.qualified() + ": " + err.what());
  }
}

std::string get_config_value(const RunConfig& config, std::string_view key) { return find_entry(key).get(config); }

void apply_config_text(RunConfig& config, std::string_view text, std::string_view origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no) + ": ";
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string s = trim(line);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(where + "malformed section header '" + s + "'");
      section = trim(std::string_view(s).substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + s + "'");
    const std::string name = trim(std::string_view(s).substr(0, eq));
    const std::string value = trim(std::string_view(s).substr(eq + 1));
    const std::string qualified = section.empty() ? name : section + "." + name;
    try {
      if (!section.empty()) {
        // Inside a section only that section's keys are accepted.
        bool known = false;
        for (const ConfigKey& k : config_keys()) known = known || k.qualified() == qualified;
        if (!known) throw ConfigError("unknown config key '" + qualified + "'");
      }
      set_config_value(config, qualified, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

RunConfig parse_config_text(std::string_view text, const ConfigOverrides& overrides) {
  RunConfig config;
  apply_config_text(config, text);
  for (const auto& [key, value] : overrides) set_config_value(config, key, value);
  config.validate();
  return config;
}

RunConfig parse_config(const std::optional<std::filesystem::path>& file, const ConfigOverrides& overrides) {
  RunConfig config;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot read config file " + file->string());
    std::ostringstream text;
    text << in.rdbuf();
    apply_config_text(config, text.str(), file->string());
  }
  for (const auto& [key, value] : overrides) set_config_value(config, key, value);
  config.validate();
  return config;
}

std::string serialize_config(const RunConfig& config) {
  std::ostringstream out;
  std::string_view section;
  for (const Entry& e : entries()) {
    if (e.key.section != section) {
      if (!section.empty()) out << '\n';
      section = e.key.section;
      out << '[' << section << "]\n";
    }
    out << e.key.name << " = " << e.get(config) << '\n';
  }
  return out.str();
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << serialize_config(config);
  if (!out) throw ConfigError("failed writing config file " + path.string());
}

}  // namespace selfens
