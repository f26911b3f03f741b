#include "ucds/experiment.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <json.hpp>
#include <sstream>

#include "ucds/errors.hpp"

#ifndef UCDS_VERSION
#define UCDS_VERSION "0.0.0"
#endif

namespace ucds {

namespace fs = std::filesystem;

std::string code_version() { return UCDS_VERSION; }

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"model", "backbone recommender: pmf or neumf"},
      {"dataset", "dataset directory (<name>_data.txt or split files, optional groups/)"},
      {"method", "training method: original, in-ucds or in-naive"},
      {"out_dir", "output root; logs/ and result/ are created below it"},
      {"num_epoch", "total training epochs"},
      {"batch_size", "training batch size"},
      {"optimizer", "the optimizer used for training (adam)"},
      {"adam_lr", "the learning rate of the optimizer"},
      {"latent_dim_mf", "embedding dimension of the matrix factorization part"},
      {"latent_dim_mlp", "embedding dimension of the multi-layer perceptron part"},
      {"num_negative", "number of negative samples for each positive sample"},
      {"layers", "widths of the fully connected layers, first = 2 * latent_dim_mlp"},
      {"l2_regularization", "weight coefficient of the regularization loss"},
      {"device_id", "computing device label; recorded only, training runs on the CPU"},
      {"seed", "seed for splitting, sampling and initialization"},
      {"lambda", "weight of the fairness loss (ignored for original)"},
      {"refresh_period", "epochs between cluster recomputations"},
      {"naive_k", "partners per disadvantaged user for in-naive"},
      {"candidate_pool", "advantaged users considered per clustering problem"},
      {"ucds_tol", "replicator dynamics stopping tolerance (L1 step)"},
      {"ucds_max_iter", "replicator dynamics iteration cap"},
      {"support_threshold", "minimum weight for cluster membership"},
      {"top_k", "ranking cut-off for NDCG and F1"},
      {"advantaged_fraction", "share of most active users marked advantaged"},
      {"dump_clusters", "write the final cluster assignment (true/false)"},
  };
  return keys;
}

void ExperimentSpec::validate() const {
  train.validate();
  fairness.validate();
  eval.validate();
  if (!(advantaged_fraction > 0.0 && advantaged_fraction < 1.0))
    throw ConfigError("advantaged_fraction", "must lie in (0, 1)");
  if (out_dir.empty()) throw ConfigError("out_dir", "must not be empty");
}

void ExperimentSpec::validate_paths() const {
  if (dataset_dir.empty()) throw ConfigError("dataset", "no dataset directory given");
  if (!fs::is_directory(dataset_dir))
    throw ConfigError("dataset", "directory " + dataset_dir.string() + " does not exist");
}

namespace {

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + value + "'");
}

}  // namespace

ExperimentSpec parse_config(const std::string& text) {
  ExperimentSpec spec;
  for (const auto& [key, value] : kv::parse(text)) {
    if (set_train_config_field(spec.train, key, value)) continue;
    auto& f = spec.fairness;
    if (key == "model") spec.model = parse_model_kind(value);
    else if (key == "dataset") spec.dataset_dir = value;
    else if (key == "method") f.method = parse_method(value);
    else if (key == "out_dir") spec.out_dir = value;
    else if (key == "optimizer") {
      if (value != "adam") throw ConfigError(key, "only adam is supported");
    } else if (key == "device_id") spec.device_id = value;
    else if (key == "lambda") f.weight = kv::to_real(key, value);
    else if (key == "refresh_period") f.refresh_period = static_cast<int>(kv::to_int(key, value));
    else if (key == "naive_k") f.naive_k = static_cast<int>(kv::to_int(key, value));
    else if (key == "candidate_pool") f.ucds.candidate_pool = kv::to_uint(key, value);
    else if (key == "ucds_tol") f.ucds.tol = kv::to_real(key, value);
    else if (key == "ucds_max_iter") f.ucds.max_iter = kv::to_uint(key, value);
    else if (key == "support_threshold") f.ucds.support_threshold = kv::to_real(key, value);
    else if (key == "top_k") spec.eval.k = static_cast<int>(kv::to_int(key, value));
    else if (key == "advantaged_fraction") spec.advantaged_fraction = kv::to_real(key, value);
    else if (key == "dump_clusters") spec.dump_clusters = to_bool(key, value);
    else throw ConfigError(key, "unknown key");
  }
  spec.validate();
  return spec;
}

ExperimentSpec load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

kv::Entries spec_entries(const ExperimentSpec& spec) {
  const auto& f = spec.fairness;
  kv::Entries out = {
      {"model", to_string(spec.model)},
      {"dataset", spec.dataset_dir.string()},
      {"method", to_string(f.method)},
      {"out_dir", spec.out_dir.string()},
  };
  for (auto& entry : train_config_entries(spec.train)) {
    if (entry.first == "adam_lr") out.emplace_back("optimizer", "adam");
    out.push_back(std::move(entry));
  }
  kv::Entries tail = {
      {"device_id", spec.device_id},
      {"lambda", kv::format_real(f.weight)},
      {"refresh_period", std::to_string(f.refresh_period)},
      {"naive_k", std::to_string(f.naive_k)},
      {"candidate_pool", std::to_string(f.ucds.candidate_pool)},
      {"ucds_tol", kv::format_real(f.ucds.tol)},
      {"ucds_max_iter", std::to_string(f.ucds.max_iter)},
      {"support_threshold", kv::format_real(f.ucds.support_threshold)},
      {"top_k", std::to_string(spec.eval.k)},
      {"advantaged_fraction", kv::format_real(spec.advantaged_fraction)},
      {"dump_clusters", spec.dump_clusters ? "true" : "false"},
  };
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

std::string render_config(const ExperimentSpec& spec) {
  return kv::render(spec_entries(spec));
}

std::string dataset_name(const fs::path& dir) {
  auto normal = fs::absolute(dir).lexically_normal();
  if (normal.filename().empty()) normal = normal.parent_path();
  return normal.filename().string();
}

DatasetBundle load_dataset(const fs::path& dir, std::uint64_t seed,
                           double advantaged_fraction, int n_negatives) {
  const std::string name = dataset_name(dir);
  auto has = [&](const char* suffix) { return fs::exists(dir / (name + suffix)); };

  std::optional<InteractionLog> full;
  std::optional<SplitDataset> split;
  bool from_files = false;
  if (has("_train.txt") && has("_tune.txt") && has("_test.txt")) {
    auto loaded = load_split(dir, name);
    full.emplace(std::move(loaded.full));
    split.emplace(std::move(loaded.split));
    from_files = true;
  } else if (has("_data.txt")) {
    full.emplace(parse_interactions(dir / (name + "_data.txt")));
    Rng rng = make_rng(seed, rng_stream::split);
    split.emplace(leave_one_out_split(*full, rng));
  } else {
    throw DataError(DataErrc::io, "no " + name + "_data.txt or split files in " +
                                      dir.string());
  }

  const bool groups_from_files = fs::exists(dir / "groups" / "users" / "active_ids.txt");
  UserGrouping grouping = groups_from_files
                              ? load_group_files(dir / "groups", *full)
                              : group_users_by_activity(*full, advantaged_fraction);

  Rng tune_rng = make_rng(seed, rng_stream::tune_candidates);
  Rng test_rng = make_rng(seed, rng_stream::test_candidates);
  auto tune = build_eval_candidates(split->tune, *full, n_negatives, tune_rng);
  auto test = build_eval_candidates(split->test, *full, n_negatives, test_rng);
  return {name,
          std::move(*full),
          std::move(*split),
          std::move(grouping),
          std::move(tune),
          std::move(test),
          from_files,
          groups_from_files};
}

std::string run_id(const ExperimentSpec& spec) {
  return dataset_name(spec.dataset_dir) + "_" + to_string(spec.model) + "_" +
         to_string(spec.method()) + "_" + std::to_string(spec.seed());
}

namespace {

using json = nlohmann::ordered_json;

json summary_json(const MetricSummary& s) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"overall", s.overall},
          {"advantaged", opt(s.advantaged)},
          {"disadvantaged", opt(s.disadvantaged)},
          {"uof", opt(s.uof)}};
}

json report_json(const MetricReport& r) {
  return {{"ndcg", summary_json(r.ndcg)},
          {"f1", summary_json(r.f1)},
          {"users", r.n_users},
          {"advantaged_users", r.n_advantaged},
          {"disadvantaged_users", r.n_disadvantaged}};
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

void write_manifest(const RunManifest& m, const std::string& started_at) {
  json history = json::array();
  for (const auto& r : m.history)
    history.push_back({{"epoch", r.epoch},
                       {"train_loss", r.train_loss},
                       {"l_fairness", r.l_fairness},
                       {"tune_ndcg", r.tune_ndcg},
                       {"assigned_users", r.assigned_users}});
  json doc = {
      {"run_id", m.run_id},
      {"code_version", m.code_version},
      {"config", render_config(m.spec)},
      {"device_id", m.spec.device_id},
      {"started_at", started_at},
      {"wall_clock_seconds", m.wall_clock_seconds},
      {"best_epoch", m.best_epoch},
      {"best_tune_ndcg", m.best_tune_ndcg},
      {"test", report_json(m.test_report)},
      {"checkpoint", m.checkpoint_path.string()},
      {"result", m.result_path.string()},
      {"curve", m.curve_path.string()},
      {"metrics", m.metrics_path.string()},
      {"history", history},
  };
  std::ofstream out(m.manifest_path, std::ios::trunc);
  if (!out) throw DataError(DataErrc::io, "cannot write " + m.manifest_path.string());
  out << doc.dump(2) << '\n';
}

void write_id_map(const InteractionLog& log, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(DataErrc::io, "cannot write " + path.string());
  out << "kind,index,external_id\n";
  for (std::size_t u = 0; u < log.n_users(); ++u)
    out << "user," << u << ',' << log.external_user(static_cast<UserIndex>(u)) << '\n';
  for (std::size_t i = 0; i < log.n_items(); ++i)
    out << "item," << i << ',' << log.external_item(static_cast<ItemIndex>(i)) << '\n';
}

}  // namespace

RunManifest cmd_train(const ExperimentSpec& spec) {
  spec.validate();
  spec.validate_paths();
  const auto started = std::chrono::steady_clock::now();
  const auto started_at = utc_now();

  const auto data = load_dataset(spec.dataset_dir, spec.seed(), spec.advantaged_fraction);
  spdlog::info("{}: {} users, {} items, {} train interactions, {} evaluated users "
               "({} advantaged)",
               data.name, data.full.n_users(), data.full.n_items(),
               data.split.train.size(), data.test_candidates.users.size(),
               data.grouping.advantaged().size());

  RunManifest m;
  m.spec = spec;
  m.run_id = run_id(spec);
  m.code_version = code_version();
  const auto logs = spec.out_dir / "logs";
  const auto results = spec.out_dir / "result";
  fs::create_directories(logs);
  fs::create_directories(results);
  m.checkpoint_path = logs / (m.run_id + ".ckpt");
  m.result_path = results / (m.run_id + ".csv");
  m.curve_path = spec.out_dir / (m.run_id + "_curve.csv");
  m.metrics_path = spec.out_dir / (m.run_id + "_metrics.txt");
  m.manifest_path = spec.out_dir / (m.run_id + "_manifest.json");

  CheckpointMeta meta;
  meta.id_digest = data.full.id_digest();
  meta.fields = {{"dataset", data.name},
                 {"method", to_string(spec.method())},
                 {"run_id", m.run_id},
                 {"top_k", std::to_string(spec.eval.k)},
                 {"advantaged_fraction", kv::format_real(spec.advantaged_fraction)}};

  TrainingHooks hooks;
  hooks.on_best = [&](const Backbone& model, const AdamState& state, int epoch) {
    auto best = meta;
    best.fields["best_epoch"] = std::to_string(epoch);
    save_checkpoint(m.checkpoint_path, model, state, best);
  };
  const TrainingData td{&data.full, &data.split, &data.grouping, &data.tune_candidates};
  auto trained = run_training(spec.model, spec.train, spec.fairness, spec.eval, td, hooks);
  m.history = trained.history;
  m.best_epoch = trained.best_epoch;
  m.best_tune_ndcg = trained.best_tune_ndcg;

  const auto test = evaluate(*trained.best_model, data.test_candidates, data.full,
                             data.grouping, spec.eval);
  m.test_report = test.report;
  write_results(test.rows, m.result_path);
  write_metric_report(test.report, m.metrics_path);
  const auto curve = curve_points(spec.method(), trained.history);
  write_curve(curve, m.curve_path);
  write_id_map(data.full, spec.out_dir / (m.run_id + "_idmap.csv"));
  {
    std::ofstream echo(spec.out_dir / (m.run_id + ".config"), std::ios::trunc);
    echo << render_config(spec);
  }
  if (!data.split_from_files) export_split(data.split, spec.out_dir / "splits", data.name);
  if (spec.dump_clusters) {
    const auto assignment =
        spec.method() == Method::in_naive
            ? naive_assign(data.split.train, data.grouping,
                           static_cast<std::size_t>(spec.fairness.naive_k))
            : ucds_assign_all(*trained.best_model, data.grouping, spec.fairness.ucds);
    write_assignment(assignment, data.full, spec.out_dir / (m.run_id + "_clusters.csv"));
  }

  m.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  write_manifest(m, started_at);
  spdlog::info("{}: best epoch {} (tune NDCG@{} {:.4f}), test NDCG@{} {:.4f}", m.run_id,
               m.best_epoch, spec.eval.k, m.best_tune_ndcg, spec.eval.k,
               m.test_report.ndcg.overall);
  return m;
}

Evaluation cmd_evaluate(ModelKind model, const fs::path& dataset_dir,
                        const fs::path& checkpoint) {
  if (!fs::is_directory(dataset_dir))
    throw ConfigError("dataset", "directory " + dataset_dir.string() + " does not exist");
  auto ckpt = load_checkpoint(checkpoint, model);
  const auto& fields = ckpt.meta.fields;
  EvalConfig eval;
  double fraction = 0.05;
  if (auto it = fields.find("top_k"); it != fields.end())
    eval.k = static_cast<int>(kv::to_int("top_k", it->second));
  if (auto it = fields.find("advantaged_fraction"); it != fields.end())
    fraction = kv::to_real("advantaged_fraction", it->second);

  const auto data = load_dataset(dataset_dir, ckpt.model->config().seed, fraction);
  if (data.full.id_digest() != ckpt.meta.id_digest)
    throw DataError(DataErrc::digest_mismatch,
                    "checkpoint was trained on a different id space (digest " +
                        ckpt.meta.id_digest + ", dataset " + data.full.id_digest() + ")");
  return evaluate(*ckpt.model, data.test_candidates, data.full, data.grouping, eval);
}

std::vector<Method> parse_method_list(const std::string& csv) {
  std::vector<Method> out;
  std::stringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    out.push_back(parse_method(item));
  }
  if (out.empty()) throw ConfigError("methods", "no methods given");
  return out;
}

CompareResult cmd_compare(const ExperimentSpec& base, const std::vector<Method>& methods) {
  base.validate();
  base.validate_paths();
  CompareResult out;
  const std::string stem = "compare_" + dataset_name(base.dataset_dir) + "_" +
                           to_string(base.model) + "_" + std::to_string(base.seed());
  out.table_path = base.out_dir / (stem + ".csv");
  out.curve_path = base.out_dir / (stem + "_curve.csv");

  std::vector<CurvePoint> joint;
  for (Method method : methods) {
    auto spec = base;
    spec.fairness.method = method;
    try {
      out.runs.push_back(cmd_train(spec));
    } catch (...) {
      std::ofstream partial(base.out_dir / (stem + "_partial.json"), std::ios::trunc);
      json done = json::array();
      for (const auto& r : out.runs) done.push_back(r.manifest_path.string());
      partial << json{{"failed_method", to_string(method)}, {"completed", done}}.dump(2)
              << '\n';
      throw;
    }
    const auto points = curve_points(method, out.runs.back().history);
    joint.insert(joint.end(), points.begin(), points.end());
  }
  write_curve(joint, out.curve_path);

  std::ofstream table(out.table_path, std::ios::trunc);
  if (!table) throw DataError(DataErrc::io, "cannot write " + out.table_path.string());
  table << "method,ndcg_overall,ndcg_adv,ndcg_disadv,ndcg_uof,"
           "f1_overall,f1_adv,f1_disadv,f1_uof\n";
  std::ostringstream pretty;
  pretty << std::left << std::setw(10) << "method"
         << "   NDCG: Overall   Adv. Disadv.  M_UOF |  F1: Overall   Adv. Disadv.  M_UOF\n";
  auto num = [](const std::optional<double>& v) {
    if (!v) return std::string("nan");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return std::string(buf);
  };
  for (const auto& run : out.runs) {
    const auto& r = run.test_report;
    const auto m = to_string(run.spec.method());
    table << m;
    pretty << std::left << std::setw(10) << m << "         ";
    for (const auto* s : {&r.ndcg, &r.f1}) {
      for (const auto& v : {std::optional<double>(s->overall), s->advantaged,
                            s->disadvantaged, s->uof}) {
        table << ',' << num(v);
        pretty << ' ' << std::right << std::setw(6) << num(v);
      }
      pretty << (s == &r.ndcg ? " |       " : "");
    }
    table << '\n';
    pretty << '\n';
  }
  out.table = pretty.str();
  return out;
}

}  // namespace ucds
