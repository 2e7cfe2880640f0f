#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>

#include "probts/experiment.hpp"
#include "probts/neuralqr.hpp"
#include "probts/npts.hpp"
#include "probts/ssm.hpp"
#include "probts/transform.hpp"

using namespace probts;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST(ConfigText, ScalarFormatting) {
  ConfigNode n("Thing");
  n.set("i", 3).set("d", 3.0).set("neg", -0.125).set("s", "it's").set("b", true).set("none", nullptr);
  n.set("inf", kInf).set("list", ConfigValue::list_of(std::vector<double>{0.1, 0.5}));
  const auto text = to_text(n);
  EXPECT_NE(text.find("i=3,"), std::string::npos);
  EXPECT_NE(text.find("d=3.0,"), std::string::npos);
  EXPECT_NE(text.find("b=True"), std::string::npos);
  EXPECT_NE(text.find("none=None"), std::string::npos);
  EXPECT_EQ(parse_text(text), n);
  EXPECT_EQ(from_json(to_json(n)), n);
}

TEST(ConfigText, FormatDoubleRoundTrips) {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double x = u(rng) * std::pow(10.0, static_cast<int>(i % 40) - 20);
    EXPECT_EQ(std::stod(format_double(x)), x);
  }
  EXPECT_EQ(format_double(1.0), "1.0");
  EXPECT_EQ(format_double(0.1), "0.1");
}

TEST(ConfigText, ParseErrorsAreConfigErrors) {
  EXPECT_THROW(parse_text("Npts(alpha=)"), ConfigError);
  EXPECT_THROW(parse_text("Npts(alpha=1"), ConfigError);
  EXPECT_THROW(parse_text("(x=1)"), ConfigError);
  EXPECT_THROW(ConfigNode("A").at("missing"), ConfigError);
  try {
    ConfigNode("Comp").at("arg");
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("Comp"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("arg"), std::string::npos);
  }
}

TEST(Serialize, NptsTextListsEveryDefault) {
  NptsConfig c;
  c.alpha = 1.5;
  const auto text = serialize_config(c.to_config());
  EXPECT_EQ(text.rfind("NptsEstimator(", 0), 0u);
  for (const char* field : {"alpha=1.5", "kernel='exponential'", "seasonal=False", "season_length=0",
                            "num_sample_paths=100", "context_length=0", "seed=0"}) {
    EXPECT_NE(text.find(field), std::string::npos) << field << "\n" << text;
  }
}

TEST(Serialize, MlpQrNestsTheTrainerWithDefaults) {
  const MlpQrEstimator est(MlpQrConfig{}, TrainerConfig{});
  const auto text = serialize_config(est.config());
  EXPECT_NE(text.find("trainer=Trainer("), std::string::npos);
  for (const char* field : {"batch_size=32", "num_batches=5000", "initial_lr=0.001", "lr_patience_batches=",
                            "min_lr=", "clip_gradient=10.0"}) {
    EXPECT_NE(text.find(field), std::string::npos) << field;
  }
  const auto back = make_estimator(deserialize_config(text));
  EXPECT_EQ(to_text(back->config()), text);
}

TEST(Serialize, UnregisteredTypesAreNamed) {
  ConfigNode inner("Mystery");
  ConfigNode outer("Experiment");
  outer.set("estimator", inner);
  try {
    serialize_config(outer);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("Mystery"), std::string::npos);
  }
  EXPECT_THROW(make_estimator(ConfigNode("Mystery")), ConfigError);
  EXPECT_THROW(make_estimator(SplitSpec{}.to_config()), ConfigError);
}

TEST(Serialize, EstimatorsRoundTripThroughFactory) {
  SsmEstimatorConfig s;
  s.preset = SsmPreset::level_trend();
  NptsConfig n;
  n.seasonal = true;
  n.alpha = kInf;
  for (const auto& node : {s.to_config(), n.to_config(), MlpQrEstimator(MlpQrConfig{}, TrainerConfig{}).config()}) {
    const auto est = make_estimator(deserialize_config(serialize_config(node)));
    EXPECT_EQ(est->config(), node);
  }
}

TEST(Experiment, FullBacktestConfigRoundTrip) {
  ExperimentConfig e;
  e.command = "backtest";
  e.seed = 42;
  e.data = "/tmp/data.jsonl";
  e.freq = "D";
  e.split = SplitSpec{7, 3, 2};
  e.quantiles = {0.1, 0.5, 0.9};
  e.season_length = 7;
  e.estimator = MlpQrEstimator(MlpQrConfig{}, TrainerConfig{}).config();
  const auto node = e.to_config();
  EXPECT_EQ(ExperimentConfig::from_config(deserialize_config(serialize_config(node))), e);
  EXPECT_EQ(ExperimentConfig::from_config(from_json(to_json(node))), e);
}

TEST(Experiment, DefaultStrideIsLoggedAsItsEffectiveValue) {
  const SplitSpec s{24, 7, 0};
  const auto back = SplitSpec::from_config(parse_text(to_text(s.to_config())));
  EXPECT_EQ(back.stride, 24);
  EXPECT_EQ(back.effective_stride(), s.effective_stride());
}

TEST(Experiment, LogFilesReadBackInBothFormats) {
  ExperimentConfig e;
  e.estimator = NptsConfig{}.to_config();
  e.split.stride = e.split.effective_stride();
  const auto dir = fresh_dir("probts_config_log");
  write_config_log(dir, e.to_config());
  ASSERT_TRUE(std::filesystem::exists(dir / "config.txt"));
  ASSERT_TRUE(std::filesystem::exists(dir / "config.json"));
  EXPECT_EQ(ExperimentConfig::from_config(read_config_log(dir / "config.txt")), e);
  EXPECT_EQ(ExperimentConfig::from_config(read_config_log(dir / "config.json")), e);
  EXPECT_THROW(read_config_log(dir / "absent.txt"), Error);
  std::filesystem::remove_all(dir);
}

TEST(Experiment, PipelineAndSynthSpecAreRegistered) {
  const Pipeline p({MarkMissingStep{}, BoxCoxStep{0.5}});
  EXPECT_NO_THROW(check_registered(p.to_config()));
  SynthSpec s;
  s.num_series = 3;
  s.noise = StudentTNoise{0.5, 3.0};
  s.freq = Frequency::parse("H");
  EXPECT_EQ(synth_spec_from_config(deserialize_config(serialize_config(synth_spec_to_config(s)))), s);
}

TEST(Experiment, SynthSpecJson) {
  const auto j = nlohmann::json::parse(R"({"num_series": 2, "length": 48, "level": 3.0, "season_length": 24,
      "season_amplitude": 1.0, "noise": {"type": "gaussian", "sigma": 0.5}, "seed": 9, "freq": "H"})");
  const auto s = synth_spec_from_json(j);
  EXPECT_EQ(s.num_series, 2);
  EXPECT_EQ(s.length, 48);
  EXPECT_EQ(s.rng_seed, 9u);
  EXPECT_EQ(std::get<GaussianNoise>(s.noise).sigma, 0.5);
  EXPECT_THROW(synth_spec_from_json(nlohmann::json::parse(R"({"lenght": 3})")), ConfigError);
  EXPECT_THROW(synth_spec_from_json(nlohmann::json::parse(R"({"noise": {"type": "pink"}})")), ConfigError);
}

TEST(Seeds, DerivedSeedsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(7, "estimator"), derive_seed(7, "estimator"));
  EXPECT_NE(derive_seed(7, "estimator"), derive_seed(8, "estimator"));
  EXPECT_NE(derive_seed(7, "estimator"), derive_seed(7, "sampler"));
  for (std::uint64_t m = 0; m < 1000; ++m) {
    EXPECT_LE(derive_seed(m, "x"), static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()));
  }
}
