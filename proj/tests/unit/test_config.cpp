#include <doctest.h>

#include <filesystem>

#include "taegcn/config.hpp"
#include "taegcn/error.hpp"
#include "taegcn/io.hpp"

using namespace taegcn;
using nlohmann::json;

TEST_CASE("defaults serialize exactly") {
  const json t = config::to_json(train::TrainConfig{});
  CHECK(t.at("lr").get<double>() == 1e-4);
  CHECK(t.at("weight_decay").get<double>() == 1e-4);
  CHECK(t.at("batch_size").get<int>() == 8);
  CHECK(t.at("epochs").get<int>() == 40);
  CHECK(t.dump().find("\"lr\":0.0001") != std::string::npos);
  const json m = config::to_json(model::ModelConfig{});
  CHECK(m.at("windows") == json::array({1, 3, 6, 12}));
  CHECK(m.at("window_mode") == "per_layer");
}

TEST_CASE("config round trip and unknown keys") {
  model::ModelConfig c;
  c.layers = 2;
  c.windows = {2, 4};
  c.window_mode = model::WindowMode::kPerHead;
  c.heads = 2;
  c.seed = 77;
  CHECK(config::model_config_from_json(config::to_json(c)) == c);
  train::TrainConfig t;
  t.patience = 3;
  t.clip_norm = 5.0;
  CHECK(config::train_config_from_json(config::to_json(t)) == t);
  CHECK_THROWS_AS(config::model_config_from_json(json{{"layer", 3}}), ConfigError);
  CHECK_THROWS_AS(config::train_config_from_json(json{{"lr", "fast"}}), ConfigError);
  CHECK_THROWS_AS(config::run_config_from_json(json{{"data", {{"path", "x"}}}, {"extra", 1}}), ConfigError);
  CHECK_THROWS_AS(config::run_config_from_json(json{{"data", {{"missing_marker", 0}}}}), ConfigError);
}

TEST_CASE("run config resolves paths and variant") {
  const json j{{"data", {{"path", "d/series.csv"}}},
               {"model", {{"variant", "ablate_egc"}, {"horizon", 6}}},
               {"output", {{"dir", "runs/a"}}}};
  const auto c = config::run_config_from_json(j, "/base");
  CHECK(c.data.path == "/base/d/series.csv");
  CHECK(c.output.dir == "/base/runs/a");
  CHECK(c.variant == model::Variant::kAblateEgc);
  CHECK(c.model.horizon == 6);
  const auto again = config::run_config_from_json(config::to_json(c), "/elsewhere");
  CHECK(again.data == c.data);
  CHECK(again.model == c.model);
  CHECK(again.output == c.output);
  CHECK(again.variant == c.variant);
}

TEST_CASE("missing config file names the path") {
  try {
    config::load_run_config("/nonexistent/run.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/run.json") != std::string::npos);
  }
}

TEST_CASE("atomic writes leave no temporary files") {
  const auto dir = std::filesystem::temp_directory_path() / "taegcn_unit_atomic";
  std::filesystem::create_directories(dir);
  io::write_file_atomic(dir / "a.txt", "one");
  io::write_file_atomic(dir / "a.txt", "two");
  CHECK(io::read_file(dir / "a.txt") == "two");
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files += e.is_regular_file();
  CHECK(files == 1);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(io::read_file(dir / "a.txt"), ParseError);
}
