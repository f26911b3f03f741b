#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "test_util.hpp"
#include "ucds/errors.hpp"
#include "ucds/experiment.hpp"
#include "ucds/synthetic.hpp"

using namespace ucds;
using testutil::read_file;
using testutil::TempDir;
using testutil::write_file;

namespace {

std::filesystem::path make_dataset(const TempDir& dir, const std::string& name,
                                   std::uint64_t seed = 7) {
  SyntheticConfig sc;
  sc.users = 60;
  sc.items = 150;
  sc.max_activity = 40;
  sc.seed = seed;
  const auto ds = dir / name;
  write_records(generate_synthetic(sc), ds / (name + "_data.txt"));
  return ds;
}

ExperimentSpec small_spec(const std::filesystem::path& ds, const std::filesystem::path& out) {
  auto spec = parse_config(
      "model=pmf\nnum_epoch=3\nbatch_size=64\nadam_lr=0.01\nlatent_dim_mf=4\n");
  spec.dataset_dir = ds;
  spec.out_dir = out;
  return spec;
}

std::size_t count_files(const std::filesystem::path& dir) {
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++n;
  return n;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("config defaults and parsing") {
  const auto spec = parse_config("model=neumf\ndataset=data/epinion\n");
  CHECK(spec.train == TrainConfig{});
  CHECK(spec.fairness == FairnessConfig{});
  CHECK(spec.model == ModelKind::neumf);
  CHECK(spec.dataset_dir == "data/epinion");
  CHECK(parse_config("num_negative=4\n").train.num_negative == 4);
  CHECK(parse_config("layers=32,16,8\nlatent_dim_mlp=16\n").train.layers ==
        std::vector<int>{32, 16, 8});
}

TEST_CASE("config errors name the key") {
  auto key_of = [](const std::string& text) {
    try {
      parse_config(text).validate();
    } catch (const ConfigError& e) {
      return e.key();
    }
    return std::string("<none>");
  };
  CHECK(key_of("layers=10,8\n") == "layers");
  CHECK(key_of("colour=blue\n") == "colour");
  CHECK(key_of("num_epoch=many\n") == "num_epoch");
  CHECK(key_of("optimizer=sgd\n") == "optimizer");
  CHECK(key_of("lambda=-1\n") == "lambda");
  CHECK(key_of("method=s-dro\n") == "method");
  CHECK(key_of("model=pmf\n") == "<none>");
}

TEST_CASE("config render round trip") {
  auto spec = parse_config("model=pmf\nlambda=0.37\nlayers=24,12,6\nlatent_dim_mlp=12\n"
                           "method=in-naive\nseed=123\ndump_clusters=true\n");
  spec.dataset_dir = "x/y";
  CHECK(parse_config(render_config(spec)) == spec);
}

TEST_CASE("missing dataset fails before training") {
  TempDir dir;
  auto spec = small_spec(dir / "nope", dir / "out");
  try {
    cmd_train(spec);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "dataset");
  }
  CHECK_FALSE(std::filesystem::exists(dir / "out"));
}

TEST_CASE("train writes the output contract and is deterministic") {
  TempDir dir;
  const auto ds = make_dataset(dir, "toy");
  auto spec = small_spec(ds, dir / "out");
  const auto m = cmd_train(spec);
  CHECK(m.run_id == "toy_pmf_in-ucds_42");
  CHECK(count_files(dir / "out/logs") == 1);
  CHECK(std::filesystem::exists(m.checkpoint_path));
  CHECK(std::filesystem::exists(m.result_path));
  CHECK(m.result_path.parent_path() == dir / "out/result");
  CHECK(std::filesystem::exists(m.curve_path));
  CHECK(m.history.size() == 3);

  const auto manifest = nlohmann::json::parse(read_file(m.manifest_path));
  CHECK(manifest.contains("config"));
  CHECK(manifest.contains("code_version"));
  CHECK(manifest.contains("wall_clock_seconds"));

  const auto result = read_file(m.result_path);
  const auto ckpt = read_file(m.checkpoint_path);
  const auto curve = read_file(m.curve_path);
  spec.out_dir = dir / "again";
  const auto m2 = cmd_train(spec);
  CHECK(read_file(m2.result_path) == result);
  CHECK(read_file(m2.checkpoint_path) == ckpt);
  CHECK(read_file(m2.curve_path) == curve);
  CHECK(m2.test_report == m.test_report);
}

TEST_CASE("evaluate replays the reported metrics") {
  TempDir dir;
  const auto ds = make_dataset(dir, "toy");
  auto spec = small_spec(ds, dir / "out");
  spec.model = ModelKind::neumf;
  spec.train.latent_dim_mlp = 4;
  spec.train.layers = {8, 4};
  const auto m = cmd_train(spec);
  const auto eval = cmd_evaluate(ModelKind::neumf, ds, m.checkpoint_path);
  CHECK(eval.report == m.test_report);

  CHECK_THROWS_AS(cmd_evaluate(ModelKind::pmf, ds, m.checkpoint_path), DataError);

  const auto other = make_dataset(dir, "other", 8);
  try {
    cmd_evaluate(ModelKind::neumf, other, m.checkpoint_path);
    FAIL("expected digest mismatch");
  } catch (const DataError& e) {
    CHECK(e.code() == DataErrc::digest_mismatch);
  }
}

TEST_CASE("compare produces one row per method") {
  TempDir dir;
  const auto ds = make_dataset(dir, "toy");
  auto spec = small_spec(ds, dir / "out");
  const auto r = cmd_compare(spec, parse_method_list("original,in-ucds,in-naive"));
  CHECK(r.runs.size() == 3);
  const auto table = read_file(r.table_path);
  std::istringstream in(table);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 8);
    ++rows;
  }
  CHECK(rows == 4);
  const auto curve = read_file(r.curve_path);
  CHECK(std::count(curve.begin(), curve.end(), '\n') == 1 + 3 * 3);
  CHECK_THROWS_AS(parse_method_list("original,sdro"), ConfigError);
}

TEST_CASE("split and group files are used when present") {
  TempDir dir;
  const auto ds = make_dataset(dir, "toy");
  const auto derived = load_dataset(ds, 1, 0.05);
  CHECK_FALSE(derived.split_from_files);
  CHECK_FALSE(derived.groups_from_files);

  export_split(derived.split, ds, "toy");
  std::string active, inactive;
  for (UserIndex u = 0; u < derived.full.n_users(); ++u)
    (u < 3 ? active : inactive) += std::to_string(derived.full.external_user(u)) + "\n";
  write_file(ds / "groups/users/active_ids.txt", active);
  write_file(ds / "groups/users/inactive_ids.txt", inactive);

  const auto loaded = load_dataset(ds, 2, 0.05);
  CHECK(loaded.split_from_files);
  CHECK(loaded.groups_from_files);
  CHECK(loaded.grouping.advantaged() == std::vector<UserIndex>{0, 1, 2});
  for (const auto& [u, h] : derived.split.test) CHECK(loaded.split.test.at(u).item == h.item);
}

}  // TEST_SUITE
