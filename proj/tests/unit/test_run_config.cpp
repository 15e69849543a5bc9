#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "grasame/errors.hpp"
#include "grasame/run_config.hpp"

using namespace grasame;

namespace {

std::string error_of(const nlohmann::json& j) {
  try {
    merge_config(RunConfig{}, j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_CASE("to_json round-trips through merge_config") {
  RunConfig c;
  c.model.d_model = 48;
  c.model.variation = Variation::kVar2;
  c.model.gnn.family = GnnFamily::kRgcn;
  c.model.gnn.sage_aggregator = SageAggregator::kMax;
  c.model.gnn.activation = Activation::kLinear;
  c.model.tie_embeddings = false;
  c.train.lambda_gr = 0.25;
  c.train.freeze_mode = FreezeMode::kFreezeBase;
  c.train.seed = 77;
  c.decode.mode = DecodeMode::kGreedy;
  c.decode.length_penalty = 0.6;
  c.data.train = "train.jsonl";
  c.output_dir = "out";
  const auto j = to_json(c);
  const RunConfig back = merge_config(RunConfig{}, nlohmann::json::parse(j.dump()));
  CHECK(to_json(back) == j);
  CHECK(back.model.variation == Variation::kVar2);
  CHECK(back.model.gnn.family == GnnFamily::kRgcn);
  CHECK(back.train.freeze_mode == FreezeMode::kFreezeBase);
  CHECK(back.decode.mode == DecodeMode::kGreedy);
}

TEST_CASE("defaults are documented") {
  const auto j = to_json(RunConfig{});
  CHECK(j["train"]["lambda_gr"] == 0.08);
  CHECK(j["train"]["seed"] == 123);
  CHECK(j["decode"]["beam_size"] == 3);
  CHECK(j["model"]["variation"].is_string());
  CHECK(j["model"]["gnn"]["family"].is_string());
}

TEST_CASE("partial overlays keep the rest") {
  RunConfig base;
  base.train.epochs = 7;
  const RunConfig c = merge_config(base, nlohmann::json::parse(R"({"train": {"lr": 0.01}})"));
  CHECK(c.train.lr == 0.01);
  CHECK(c.train.epochs == 7);
  CHECK(merge_config(base, nlohmann::json::object()).train.epochs == 7);
}

TEST_CASE("unknown keys are named") {
  CHECK(error_of({{"a", {{"b", 1}}}}) == "unknown config key 'a'");
  CHECK(error_of({{"model", {{"b", 1}}}}) == "unknown config key 'model.b'");
  CHECK(error_of({{"model", {{"gnn", {{"hops", 2}}}}}}) == "unknown config key 'model.gnn.hops'");
}

TEST_CASE("ill-typed values are named") {
  CHECK(error_of({{"train", {{"epochs", -1}}}}) == "config key 'train.epochs' must be a non-negative integer");
  CHECK(error_of({{"train", {{"epochs", 2.5}}}}) == "config key 'train.epochs' must be a non-negative integer");
  CHECK(error_of({{"train", {{"lr", "fast"}}}}) == "config key 'train.lr' must be a number");
  CHECK(error_of({{"model", {{"tie_embeddings", 1}}}}) == "config key 'model.tie_embeddings' must be true or false");
  CHECK(error_of({{"data", {{"train", 3}}}}) == "config key 'data.train' must be a string");
  CHECK(error_of({{"model", 3}}) == "config key 'model' must be an object");
  CHECK(error_of(nlohmann::json::array()) == "config key '<root>' must be an object");
}

TEST_CASE("enum values") {
  CHECK(parse_freeze_mode("freeze_base") == FreezeMode::kFreezeBase);
  CHECK(parse_decode_mode("beam") == DecodeMode::kBeam);
  CHECK(std::string(freeze_mode_name(FreezeMode::kNone)) == "none");
  CHECK(std::string(decode_mode_name(DecodeMode::kGreedy)) == "greedy");
  CHECK_THROWS_AS(parse_freeze_mode("all"), ConfigError);
  CHECK_THROWS_AS(parse_decode_mode("sample"), ConfigError);
  CHECK(error_of({{"model", {{"gnn", {{"sage_aggregator", "median"}}}}}}).find("median") != std::string::npos);
  CHECK(error_of({{"model", {{"variation", "VAR9"}}}}).find("VAR9") != std::string::npos);
  for (Variation v : {Variation::kBase, Variation::kGrasame, Variation::kVar1, Variation::kVar2}) {
    CHECK(parse_variation(variation_name(v)) == v);
  }
  for (GnnFamily f : {GnnFamily::kSage, GnnFamily::kGat, GnnFamily::kRgcn}) {
    CHECK(parse_family(family_name(f)) == f);
  }
}

TEST_CASE("load_config") {
  const auto good = write_temp("grasame_cfg_good.json", R"({"train": {"epochs": 3}, "output_dir": "x"})");
  const RunConfig c = load_config(good);
  CHECK(c.train.epochs == 3);
  CHECK(c.output_dir == "x");
  CHECK_THROWS_AS(load_config(write_temp("grasame_cfg_bad.json", "{ nope")), DataError);
  CHECK_THROWS_AS(load_config("/nonexistent/grasame.json"), DataError);
  CHECK_THROWS_AS(load_config(write_temp("grasame_cfg_key.json", R"({"x": 1})")), ConfigError);
}
