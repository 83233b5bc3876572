#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "ssrec/cli.hpp"
#include "ssrec/config.hpp"

namespace ssrec {
namespace {

std::string write_temp(const std::string& name, const std::string& text) {
  const auto path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream(path) << text;
  return path;
}

TEST(Config, DefaultsValidate) {
  const RunConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.window, 5u);
  EXPECT_DOUBLE_EQ(cfg.scoring.lambda_s, 0.4);
  EXPECT_EQ(cfg.index.hash.table_size, std::uint64_t{1} << 17);
}

TEST(Config, JsonOverlaysOnlyGivenKeys) {
  RunConfig cfg;
  apply_config_json(cfg, nlohmann::json::parse(R"({"window": 7, "scoring": {"lambda_s": 0.2}, "harness": {"k": [3]}})"));
  EXPECT_EQ(cfg.window, 7u);
  EXPECT_DOUBLE_EQ(cfg.scoring.lambda_s, 0.2);
  EXPECT_DOUBLE_EQ(cfg.scoring.mu_producer, 50.0);
  EXPECT_EQ(cfg.harness.k, std::vector<std::size_t>{3});
}

TEST(Config, UnknownKeysAndWrongTypesAreRejected) {
  RunConfig cfg;
  EXPECT_THROW(apply_config_json(cfg, nlohmann::json::parse(R"({"windw": 3})")), ConfigError);
  EXPECT_THROW(apply_config_json(cfg, nlohmann::json::parse(R"({"scoring": {"lambda": 3}})")), ConfigError);
  EXPECT_THROW(apply_config_json(cfg, nlohmann::json::parse(R"({"window": "five"})")), ConfigError);
  EXPECT_THROW(apply_config_json(cfg, nlohmann::json::parse("[1]")), ConfigError);
}

TEST(Config, RoundTripThroughJson) {
  RunConfig a;
  a.seed = 9;
  a.index.fanout = 4;
  a.expansion.per_entity = 2;
  RunConfig b;
  apply_config_json(b, config_to_json(a));
  EXPECT_EQ(config_to_json(b), config_to_json(a));
}

TEST(Config, FlagsBeatFileBeatDefaults) {
  const auto path = write_temp("ssrec_cfg_prec.json", R"({"seed": 5, "window": 8, "scoring": {"lambda_s": 0.7}})");
  cli::Flags f;
  f.config = path;
  f.window = 3;
  const auto cfg = cli::resolve_config(f);
  EXPECT_EQ(cfg.window, 3u);
  EXPECT_EQ(cfg.seed, 5u);
  EXPECT_DOUBLE_EQ(cfg.scoring.lambda_s, 0.7);
  EXPECT_DOUBLE_EQ(cfg.scoring.mu_entity, 100.0);
}

TEST(Config, EnvironmentVariableNamesTheFile) {
  const auto path = write_temp("ssrec_cfg_env.json", R"({"seed": 77})");
  ::setenv("SSREC_CONFIG", path.c_str(), 1);
  EXPECT_EQ(config_path(""), path);
  EXPECT_EQ(config_path("/explicit.json"), "/explicit.json");
  EXPECT_EQ(cli::resolve_config(cli::Flags{}).seed, 77u);
  ::unsetenv("SSREC_CONFIG");
  EXPECT_FALSE(config_path("").has_value());
}

TEST(Config, MissingOrMalformedFile) {
  RunConfig cfg;
  EXPECT_THROW(apply_config_file(cfg, "/nonexistent/ssrec.json"), ConfigError);
  EXPECT_THROW(apply_config_file(cfg, write_temp("ssrec_cfg_bad.json", "{not json")), ConfigError);
}

TEST(Config, OutOfRangeValuesFailValidation) {
  RunConfig cfg;
  cfg.scoring.lambda_s = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = RunConfig{};
  cfg.harness.k = {0};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = RunConfig{};
  cfg.harness.partitions = 2;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = RunConfig{};
  cfg.window = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Config, TrainingCarriesSeedAndFloor) {
  RunConfig cfg;
  cfg.seed = 11;
  cfg.scoring.floor = 1e-9;
  const auto t = cfg.training();
  EXPECT_EQ(t.train.seed, 11u);
  EXPECT_EQ(t.train.floor, 1e-9);
}

}  // namespace
}  // namespace ssrec
