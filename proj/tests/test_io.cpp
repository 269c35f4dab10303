#include <gtest/gtest.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "bnn/bnn.hpp"
#include "oracles.hpp"

namespace {

namespace fs = std::filesystem;

fs::path source_dir() {
  const char* env = std::getenv("BNN_SOURCE_DIR");
  return env ? fs::path(env) : fs::path(BNN_SOURCE_DIR_FALLBACK);
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bnn_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

bnn::LabConfig small_config() {
  bnn::LabConfig c;
  bnn::apply_config_text(c,
                         "[sweep]\nwidths = 16,32,64,128\nseeds = 2\ndirections = 1\nt_points = 9\n"
                         "[perturb]\nwidth = 64\nseeds = 2\ndirections = 1\nt_points = 9\n"
                         "[hessian]\nwidths = 16,32\nseeds = 3\n"
                         "[bounds]\nwidths = 32\nseeds = 3\n[tails]\ntrials = 50\nmatrix_rows = 16\nmatrix_cols = 8\n");
  return c;
}

TEST(ConfigText, SectionsCommentsAndOverrides) {
  bnn::LabConfig c;
  bnn::apply_config_text(c,
                         "# comment\n[network]\ndepths = 2, 3\ndims = 4,2,1  # trailing\n"
                         "activation = tanh\n\n[run]\nseed = 7\n[sweep]\nwidths = 8,16,32,64\n");
  EXPECT_EQ(c.network.depths, (std::vector<int>{2, 3}));
  EXPECT_EQ(c.network.dims, (std::vector<bnn::Index>{4, 2, 1}));
  EXPECT_EQ(c.network.activation, bnn::Activation::tanh);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.sweep.widths.size(), 4u);
  bnn::apply_override(c, "sweep.seeds=3");
  EXPECT_EQ(bnn::get_config_value(c, "sweep.seeds"), "3");
  EXPECT_EQ(c.sweep_config().master_seed, 7u);
}

TEST(ConfigText, Errors) {
  bnn::LabConfig c;
  EXPECT_THROW(bnn::apply_config_text(c, "[sweep]\nnope = 1\n"), bnn::ConfigError);
  EXPECT_THROW(bnn::apply_config_text(c, "seeds = 1\n"), bnn::ConfigError);
  EXPECT_THROW(bnn::apply_config_text(c, "[sweep\n"), bnn::ConfigError);
  EXPECT_THROW(bnn::apply_config_text(c, "[sweep]\nseeds\n"), bnn::ConfigError);
  EXPECT_THROW(bnn::apply_override(c, "sweep.seeds"), bnn::ConfigError);
  EXPECT_THROW(bnn::apply_override(c, "sweep.seeds=abc"), bnn::ConfigError);
  EXPECT_THROW(bnn::apply_override(c, "sweep.seeds=3x"), bnn::ConfigError);
  EXPECT_THROW(bnn::apply_override(c, "network.activation=relu"), bnn::ConfigError);
  EXPECT_THROW(bnn::apply_override(c, "sweep.direction_mode=random"), bnn::ConfigError);
  try {
    bnn::apply_config_text(c, "[sweep]\n\nbogus = 2\n", "file.conf");
    FAIL();
  } catch (const bnn::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("file.conf:3"), std::string::npos);
  }
}

TEST(ConfigText, RoundTripThroughText) {
  bnn::LabConfig c = small_config();
  bnn::apply_override(c, "input.kind=gaussian");
  bnn::apply_override(c, "bounds.only=R3,H_lower");
  bnn::apply_override(c, "sweep.radius=0.125");
  const std::string text = bnn::config_to_text(c);
  bnn::LabConfig back;
  bnn::apply_config_text(back, text);
  EXPECT_EQ(bnn::config_to_text(back), text);
  EXPECT_EQ(back.bounds.only, (std::vector<std::string>{"R3", "H_lower"}));
}

TEST(ConfigFiles, ShippedDefaultsMatchBuiltIn) {
  bnn::LabConfig c;
  bnn::apply_config_file(c, source_dir() / "configs" / "default.conf");
  EXPECT_EQ(bnn::config_to_text(c), bnn::config_to_text(bnn::LabConfig{}));
  bnn::LabConfig fig, preset;
  bnn::apply_config_file(fig, source_dir() / "configs" / "paper-fig1.conf");
  bnn::apply_preset(preset, "paper-fig1");
  EXPECT_EQ(bnn::config_to_text(fig), bnn::config_to_text(preset));
  EXPECT_THROW(bnn::apply_config_file(c, "/nonexistent/bnn.conf"), bnn::ConfigError);
}

TEST(ConfigFiles, Presets) {
  bnn::LabConfig c;
  bnn::apply_preset(c, "quick");
  EXPECT_EQ(c.sweep.widths, (std::vector<bnn::Index>{32, 64, 128, 256}));
  bnn::LabConfig d;
  bnn::apply_preset(d, "default");
  EXPECT_EQ(bnn::config_to_text(d), bnn::config_to_text(bnn::LabConfig{}));
  EXPECT_THROW(bnn::apply_preset(c, "slow"), bnn::ConfigError);
}

TEST(ConfigJson, ReportEchoReproducesRun) {
  bnn::LabConfig c = small_config();
  bnn::apply_override(c, "run.seed=99");
  bnn::apply_override(c, "sweep.t_max=0.5");
  const bnn::SweepReport first = bnn::run_width_sweep(c.sweep_config());
  const bnn::Json doc = bnn::sweep_json(first);

  bnn::LabConfig back;
  bnn::apply_config_json(back, doc);
  const bnn::SweepReport second = bnn::run_width_sweep(back.sweep_config());
  EXPECT_EQ(bnn::sweep_json(second).dump(), doc.dump());
  EXPECT_EQ(bnn::sweep_csv(second), bnn::sweep_csv(first));

  const fs::path dir = scratch("echo");
  bnn::write_atomic(dir / "r.json", doc.dump(2));
  bnn::LabConfig from_file;
  bnn::apply_config_file(from_file, dir / "r.json");
  EXPECT_EQ(bnn::sweep_csv(bnn::run_width_sweep(from_file.sweep_config())), bnn::sweep_csv(first));
  bnn::write_atomic(dir / "bad.json", "{not json");
  EXPECT_THROW(bnn::apply_config_file(from_file, dir / "bad.json"), bnn::ConfigError);
}

class SchemaTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const std::string text = slurp(source_dir() / "docs" / "report.schema.json");
    ASSERT_FALSE(text.empty());
    validator_ = new oracle::SchemaValidator(nlohmann::json::parse(text));
  }
  static void TearDownTestSuite() {
    delete validator_;
    validator_ = nullptr;
  }
  static void expect_valid(const bnn::Json& doc) {
    const auto errors = validator_->validate(nlohmann::json::parse(doc.dump()));
    for (const auto& e : errors) ADD_FAILURE() << e;
  }
  static oracle::SchemaValidator* validator_;
};

oracle::SchemaValidator* SchemaTest::validator_ = nullptr;

TEST_F(SchemaTest, SweepReport) { expect_valid(bnn::sweep_json(bnn::run_width_sweep(small_config().sweep_config()))); }

TEST_F(SchemaTest, ZeroRadiusSweepHasNullSlope) {
  bnn::LabConfig c = small_config();
  bnn::apply_override(c, "sweep.radius=0");
  const bnn::Json doc = bnn::sweep_json(bnn::run_width_sweep(c.sweep_config()));
  EXPECT_TRUE(doc["slope"].is_null());
  expect_valid(doc);
}

TEST_F(SchemaTest, CurvesReport) {
  expect_valid(bnn::curves_json(bnn::run_perturbation_curves(small_config().perturb_config())));
}

TEST_F(SchemaTest, HessianReport) {
  expect_valid(bnn::hessian_json(bnn::run_hessian_scan(small_config().hessian_config())));
}

TEST_F(SchemaTest, VerifyReport) {
  expect_valid(bnn::bounds_report_json(bnn::run_bound_suite(small_config().bounds_config())));
}

TEST_F(SchemaTest, RejectsBrokenDocuments) {
  bnn::Json doc = bnn::sweep_json(bnn::run_width_sweep(small_config().sweep_config()));
  doc.erase("kind");
  EXPECT_FALSE(validator_->validate(nlohmann::json::parse(doc.dump())).empty());
  doc["kind"] = "sweep";
  doc["unexpected"] = 1;
  EXPECT_FALSE(validator_->validate(nlohmann::json::parse(doc.dump())).empty());
}

TEST(Emit, WritesCsvAndJson) {
  const fs::path dir = scratch("emit");
  const bnn::SweepReport r = bnn::run_width_sweep(small_config().sweep_config());
  const bnn::EmittedFiles f = bnn::emit_report(r, dir);
  EXPECT_EQ(slurp(f.csv), bnn::sweep_csv(r));
  EXPECT_EQ(nlohmann::json::parse(slurp(f.json)).at("kind"), "sweep");
  for (const auto& entry : fs::directory_iterator(dir)) {
    EXPECT_NE(entry.path().filename().string().front(), '.') << entry.path();
  }
  const std::string csv = slurp(f.csv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "m,seed,direction,max_residual_jet,max_residual_surrogate");
}

TEST(Emit, EmptyReportWritesNothing) {
  const fs::path dir = scratch("empty");
  EXPECT_THROW(bnn::emit_report(bnn::SweepReport{}, dir), bnn::Error);
  EXPECT_THROW(bnn::emit_report(bnn::PerturbReport{}, dir), bnn::Error);
  EXPECT_THROW(bnn::emit_report(bnn::HessianReport{}, dir), bnn::Error);
  EXPECT_THROW(bnn::emit_report(bnn::BoundSuiteReport{}, dir), bnn::Error);
  EXPECT_TRUE(fs::is_empty(dir));
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(bnn::format_double(0.1), "0.1");
  EXPECT_EQ(bnn::format_double(-2.0), "-2");
  bnn::NormalStream rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng() * std::pow(10.0, static_cast<int>(rng() * 30.0));
    EXPECT_EQ(std::strtod(bnn::format_double(v).c_str(), nullptr), v);
  }
  const double tiny = std::numeric_limits<double>::denorm_min();
  EXPECT_EQ(std::strtod(bnn::format_double(tiny).c_str(), nullptr), tiny);
}

TEST(Weights, BitExactRoundTrip) {
  const bnn::NetworkSpec spec({2, 3}, {3, 2, 1}, 12, bnn::Activation::tanh);
  const bnn::WeightSet w = bnn::init_weights(spec, 8);
  const bnn::WeightSet back = bnn::decode_weights(bnn::encode_weights(w));
  ASSERT_TRUE(back.spec() == spec);
  for (int s = 0; s < spec.slot_count(); ++s) {
    EXPECT_EQ(std::memcmp(back.slot(s).data(), w.slot(s).data(), sizeof(double) * w.slot(s).size()), 0);
  }
}

TEST(Weights, FileAndSidecar) {
  const fs::path dir = scratch("weights");
  const bnn::WeightSet w = bnn::init_weights(bnn::NetworkSpec::single_bottleneck(2, 1, 1, 16), 3);
  bnn::save_weights(w, dir / "w.bnnw", 3);
  const bnn::WeightSet back = bnn::load_weights(dir / "w.bnnw");
  for (int s = 0; s < w.slot_count(); ++s) EXPECT_EQ(back.slot(s), w.slot(s));
  const auto side = nlohmann::json::parse(slurp(dir / "w.bnnw.json"));
  EXPECT_EQ(side.at("bytes").get<std::uintmax_t>(), fs::file_size(dir / "w.bnnw"));
  EXPECT_EQ(side.at("seed"), 3);
  EXPECT_EQ(side.at("slots").size(), 4u);
  const bnn::InputVector x = bnn::InputVector::basis(2);
  EXPECT_EQ(bnn::network_output(back, x), bnn::network_output(w, x));
}

TEST(Weights, CorruptionIsDetected) {
  const std::string good =
      bnn::encode_weights(bnn::init_weights(bnn::NetworkSpec::single_bottleneck(2, 1, 1, 4), 1));
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(bnn::decode_weights(bad_magic), bnn::Error);
  EXPECT_THROW(bnn::decode_weights(good.substr(0, good.size() - 8)), bnn::Error);
  EXPECT_THROW(bnn::decode_weights(good + "extra"), bnn::Error);
  EXPECT_THROW(bnn::decode_weights(good.substr(0, 10)), bnn::Error);
  std::string bad_version = good;
  bad_version[4] = 9;
  EXPECT_THROW(bnn::decode_weights(bad_version), bnn::Error);
  EXPECT_THROW(bnn::load_weights("/nonexistent/w.bnnw"), bnn::Error);
}

}  // namespace
