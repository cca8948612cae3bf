#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "selfens/config.hpp"
#include "selfens/history_io.hpp"
#include "selfens/serialize.hpp"
#include "selfens/text.hpp"
#include "test_support.hpp"

using namespace selfens;
using selfens::testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

RunHistory fake_history(std::size_t epochs, double scale) {
  RunHistory h;
  for (std::size_t e = 0; e < epochs; ++e) {
    EpochRecord r;
    r.epoch = e;
    r.learning_rate = 0.003 * scale / static_cast<double>(e + 1);
    r.unsup_weight = scale * static_cast<double>(e) / 7.0;
    r.beta1 = 0.9;
    r.supervised_loss = 1.0 / (3.0 + static_cast<double>(e));
    r.unsupervised_loss = 0.1;
    r.train_error = 0.5 / (1.0 + static_cast<double>(e));
    if (e % 2 == 1) r.test_error = 0.25 * scale / static_cast<double>(e);
    r.wall_time = 0.01;
    r.forward_passes = 100;
    h.epochs.push_back(r);
  }
  return h;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

TEST(Config, EmptyFileGivesDefaults) {
  const RunConfig c = parse_config_text("");
  EXPECT_EQ(c, RunConfig{});
  EXPECT_EQ(c.schedule.total_epochs, 300u);
  EXPECT_EQ(c.schedule.rampup_epochs, 80u);
  EXPECT_EQ(c.schedule.rampdown_epochs, 50u);
  EXPECT_EQ(c.schedule.lr_max, 0.003);
  EXPECT_EQ(c.schedule.beta2, 0.999);
  EXPECT_EQ(c.alpha, 0.6);
  EXPECT_EQ(c.batch_size, 100u);
}

TEST(Config, FileThenFlagsPrecedence) {
  const std::string text = "[schedule]\nw_max = 100  # file value\n\n[run]\nalpha=0.5\n";
  const RunConfig f = parse_config_text(text);
  EXPECT_EQ(f.schedule.w_max, 100.0);
  EXPECT_EQ(f.alpha, 0.5);
  const RunConfig o = parse_config_text(text, {{"w-max", "30"}, {"run.alpha", "0.7"}});
  EXPECT_EQ(o.schedule.w_max, 30.0);
  EXPECT_EQ(o.alpha, 0.7);
}

TEST(Config, RejectsBadInputNamingTheKey) {
  try {
    parse_config_text("[run]\nalpha = 1.0\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("alpha"), std::string::npos);
  }
  try {
    parse_config_text("[run]\nseed = 1\nbogus = 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config_text("[schedule]\nepochs = many\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[schedule]\nepochs\n"), ConfigError);
  EXPECT_THROW(parse_config_text("", {{"rampdown", "-1"}}), ConfigError);
  EXPECT_THROW(parse_config_text("", {{"algorithm", "mean_teacher"}}), ConfigError);
  EXPECT_THROW(find_config_key("nonexistent"), ConfigError);
}

TEST(Config, KeyLookupForms) {
  EXPECT_EQ(find_config_key("schedule.w_max").qualified(), "schedule.w_max");
  EXPECT_EQ(find_config_key("w_max").qualified(), "schedule.w_max");
  EXPECT_EQ(find_config_key("w-max").qualified(), "schedule.w_max");
  for (const ConfigKey& k : config_keys()) {
    EXPECT_EQ(find_config_key(k.flag).qualified(), k.qualified());
    EXPECT_EQ(find_config_key(k.qualified()).flag, k.flag);
  }
}

TEST(Config, DefaultRoundTrip) {
  const RunConfig c;
  EXPECT_EQ(parse_config_text(serialize_config(c)), c);
}

TEST(Config, RandomConfigsRoundTrip) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    RunConfig c;
    c.algorithm = static_cast<Algorithm>(rng() % 3);
    c.seed = rng();
    c.batch_size = 1 + rng() % 500;
    c.alpha = unit(rng) * 0.999;
    c.precision = rng() % 2 ? Precision::kF64 : Precision::kF32;
    c.supervised_norm = rng() % 2 ? SupervisedNorm::kBatch : SupervisedNorm::kLabeledRows;
    c.data_dependent_init = rng() % 2;
    c.ensemble_post_epoch_sweep = rng() % 2;
    c.history_path = "runs/h" + std::to_string(rng() % 1000) + ".jsonl";
    c.schedule.total_epochs = 10 + rng() % 400;
    c.schedule.rampup_epochs = rng() % (c.schedule.total_epochs / 2);
    c.schedule.rampdown_epochs = rng() % (c.schedule.total_epochs / 2);
    c.schedule.w_max = unit(rng) * 1e4;
    c.schedule.lr_max = unit(rng) * 0.01;
    c.schedule.beta1_start = 0.5 + 0.49 * unit(rng);
    c.schedule.beta1_end = 0.5 * unit(rng);
    c.schedule.beta2 = 0.9 + 0.0999 * unit(rng);
    c.adam_epsilon = 1e-9 + unit(rng) * 1e-6;
    c.network.preset = rng() % 2 ? "mlp" : "cnn_small";
    c.network.options.hidden = 1 + rng() % 200;
    c.network.options.dropout = unit(rng) * 0.9;
    c.network.options.input_noise = unit(rng);
    c.network.options.weight_norm = rng() % 2;
    c.augment.max_translation = static_cast<int>(rng() % 4);
    c.augment.flip = rng() % 2;
    c.augment.noise_sigma = unit(rng) * 0.2;
    c.augment.pairing = rng() % 2 ? Pairing::kSharedPerPair : Pairing::kIndependent;
    c.data.labels_per_class = rng() % 50;
    c.data.corruption = unit(rng);
    if (rng() % 2) c.data.pool_cap = rng() % 1000;
    c.data.preprocess = static_cast<Preprocess>(rng() % 3);
    c.data.moons_noise = unit(rng) * 0.3;
    const std::string text = serialize_config(c);
    const RunConfig back = parse_config_text(text);
    ASSERT_EQ(back, c) << text;
    ASSERT_EQ(serialize_config(back), text);
  }
}

TEST(Config, SaveAndLoadFile) {
  TempDir dir;
  RunConfig c;
  c.schedule.w_max = 0.1 + 0.2;
  c.data.pool_cap = 200;
  save_config(dir / "run.ini", c);
  EXPECT_EQ(parse_config(dir / "run.ini"), c);
  EXPECT_THROW(parse_config(dir / "missing.ini"), Error);
}

TEST(History, RecordRoundTripIsExact) {
  const RunHistory h = fake_history(9, 1.0 / 3.0);
  for (const EpochRecord& r : h.epochs) {
    const EpochRecord back = parse_epoch_record(epoch_record_json(r));
    EXPECT_EQ(back.epoch, r.epoch);
    EXPECT_EQ(back.learning_rate, r.learning_rate);
    EXPECT_EQ(back.unsup_weight, r.unsup_weight);
    EXPECT_EQ(back.supervised_loss, r.supervised_loss);
    EXPECT_EQ(back.train_error, r.train_error);
    EXPECT_EQ(back.test_error, r.test_error);
    EXPECT_EQ(back.forward_passes, r.forward_passes);
  }
  TempDir dir;
  save_history(dir / "h.jsonl", h);
  EXPECT_EQ(load_history(dir / "h.jsonl").epochs.size(), 9u);
  EXPECT_THROW(parse_epoch_record("{\"epoch\": 1"), Error);
}

TEST(ExportCurves, SingleRunHasAllMetrics) {
  TempDir dir;
  save_history(dir / "a.jsonl", fake_history(4, 1.0));
  const CurveExport out = export_curves({{"", dir / "a.jsonl"}});
  std::stringstream ss(out.csv);
  std::string header;
  std::getline(ss, header);
  const std::vector<std::string> cols = split_line(header);
  ASSERT_EQ(cols.size(), 5u);
  EXPECT_EQ(cols[0], "epoch");
  std::size_t rows = 0;
  for (std::string line; std::getline(ss, line);) {
    EXPECT_EQ(split_line(line).size(), 5u) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 4u);
  EXPECT_TRUE(out.warnings.empty());
}

TEST(ExportCurves, SweepGivesOneErrorColumnPerRunWithVerbatimCells) {
  TempDir dir;
  std::vector<CurveInput> inputs;
  std::string all_jsonl;
  for (int k = 0; k < 3; ++k) {
    const auto p = dir / ("run" + std::to_string(k) + ".jsonl");
    save_history(p, fake_history(6, 1.0 / (k + 3.0)));
    all_jsonl += slurp(p);
    inputs.push_back({"f" + std::to_string(k), p});
  }
  const CurveExport out = export_curves(inputs);
  std::stringstream ss(out.csv);
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, "epoch,f0_test_err,f1_test_err,f2_test_err");
  std::size_t filled = 0;
  for (std::string line; std::getline(ss, line);) {
    const std::vector<std::string> cells = split_line(line);
    ASSERT_EQ(cells.size(), 4u);
    for (std::size_t i = 1; i < cells.size(); ++i) {
      if (cells[i].empty()) continue;
      const bool verbatim = all_jsonl.find(":" + cells[i] + ",") != std::string::npos ||
                            all_jsonl.find(":" + cells[i] + "}") != std::string::npos;
      EXPECT_TRUE(verbatim) << cells[i];
      ++filled;
    }
  }
  EXPECT_EQ(filled, 9u);
}

TEST(ExportCurves, MismatchWarnsAndMissingFileFails) {
  TempDir dir;
  save_history(dir / "a.jsonl", fake_history(4, 1.0));
  save_history(dir / "b.jsonl", fake_history(6, 1.0));
  const CurveExport out = export_curves({{"a", dir / "a.jsonl"}, {"b", dir / "b.jsonl"}});
  EXPECT_FALSE(out.warnings.empty());
  try {
    export_curves({{"a", dir / "a.jsonl"}, {"gone", dir / "gone.jsonl"}});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("gone.jsonl"), std::string::npos);
  }
  EXPECT_THROW(export_curves({{"a", dir / "a.jsonl"}}, {"bogus"}), ConfigError);
}

TEST(InspectEnsemble, FreshAndUpdated) {
  TempDir dir;
  EnsembleState<float> z(20, 3, 0.6);
  save_ensemble(dir / "z0.bin", z);
  const EnsembleSummary fresh = inspect_ensemble(dir / "z0.bin");
  EXPECT_EQ(fresh.rows, 20u);
  EXPECT_EQ(fresh.zero_rows, 20u);
  EXPECT_EQ(fresh.target_rows, 0u);
  EXPECT_EQ(fresh.counter_histogram.at(0), 20u);

  const Tensor<float> preds = selfens::testing::random_simplex<float>(20, 3, 4);
  std::vector<std::size_t> all(20);
  for (std::size_t i = 0; i < 20; ++i) all[i] = i;
  z.update(all, preds);
  z.advance_epoch();
  save_ensemble(dir / "z1.bin", z);
  const EnsembleSummary one = inspect_ensemble(dir / "z1.bin");
  EXPECT_EQ(one.epoch, 1u);
  EXPECT_EQ(one.counter_histogram.at(1), 20u);
  EXPECT_EQ(one.target_rows, 20u);
  EXPECT_NEAR(one.row_sum_min, 1.0, 1e-5);
  EXPECT_NEAR(one.row_sum_max, 1.0, 1e-5);
  EXPECT_NE(ensemble_summary_text(one).find("rows"), std::string::npos);
  EXPECT_NE(ensemble_summary_json(one).find("\"rows\""), std::string::npos);

  const std::string bytes = slurp(dir / "z1.bin");
  spit(dir / "cut.bin", bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(inspect_ensemble(dir / "cut.bin"), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  spit(dir / "bad.bin", bad);
  EXPECT_THROW(inspect_ensemble(dir / "bad.bin"), FormatError);
}

TEST(Serialize, CheckpointRoundTripIsBitExact) {
  TempDir dir;
  Network<float> net({LayerSpec::dense(5), LayerSpec::leaky_relu(), LayerSpec::dense(3), LayerSpec::softmax()}, {4});
  NetworkParams<float> params = net.init_params(9);
  AdamState<float> adam = AdamState<float>::for_params(params);
  Gradients<float> grads;
  for (const ParamTensor<float>& p : params.tensors) {
    grads.push_back(p.trainable ? selfens::testing::random_tensor<float>(p.value.shape(), 3) : Tensor<float>(p.value.shape()));
  }
  adam_step(params, grads, adam, 0.01, 0.9);
  save_checkpoint(dir / "a.ckpt", params, &adam);
  NetworkParams<float> back = net.init_params(10);
  AdamState<float> back_adam = AdamState<float>::for_params(back);
  load_checkpoint(dir / "a.ckpt", back, &back_adam);
  for (std::size_t i = 0; i < params.size(); ++i) EXPECT_EQ(back.tensors[i].value, params.tensors[i].value);
  for (std::size_t i = 0; i < params.size(); ++i) EXPECT_EQ(back_adam.m[i], adam.m[i]);
  EXPECT_EQ(back_adam.step, adam.step);
  save_checkpoint(dir / "b.ckpt", back, &back_adam);
  EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));

  const std::string bytes = slurp(dir / "a.ckpt");
  EXPECT_EQ(bytes.substr(0, 8), "SETENSOR");
  spit(dir / "cut.ckpt", bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_checkpoint(dir / "cut.ckpt", back), FormatError);
}

TEST(Serialize, EnsembleRoundTripIsBitExact) {
  TempDir dir;
  EnsembleState<float> z(7, 4, 0.6);
  const Tensor<float> preds = selfens::testing::random_simplex<float>(3, 4, 8);
  const std::vector<std::size_t> rows{1, 4, 6};
  z.update(rows, preds);
  z.advance_epoch();
  save_ensemble(dir / "z.bin", z);
  const EnsembleState<float> back = load_ensemble<float>(dir / "z.bin");
  EXPECT_EQ(back.z(), z.z());
  EXPECT_EQ(back.counters(), z.counters());
  EXPECT_EQ(back.alpha(), z.alpha());
  EXPECT_EQ(back.epoch(), z.epoch());
  save_ensemble(dir / "z2.bin", back);
  const std::string bytes = slurp(dir / "z.bin");
  EXPECT_EQ(bytes, slurp(dir / "z2.bin"));
  EXPECT_EQ(bytes.size(), 8u + 4 + 8 + 8 + 8 + 8 + 7 * 8 + 7 * 4 * 4);
}
