#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ucds/dataset.hpp"
#include "ucds/fairness.hpp"
#include "ucds/kv.hpp"
#include "ucds/metrics.hpp"
#include "ucds/models.hpp"

namespace ucds {

struct ExperimentSpec {
  ModelKind model = ModelKind::neumf;
  std::filesystem::path dataset_dir;
  std::filesystem::path out_dir = "runs";
  std::string device_id = "cpu";  // recorded, execution is on the host CPU
  double advantaged_fraction = 0.05;
  bool dump_clusters = false;
  TrainConfig train;
  FairnessConfig fairness;
  EvalConfig eval;

  Method method() const { return fairness.method; }
  std::uint64_t seed() const { return train.seed; }
  // Cross-field checks; does not touch the filesystem.
  void validate() const;
  // Throws ConfigError("dataset") when the dataset directory is missing.
  void validate_paths() const;
  bool operator==(const ExperimentSpec&) const = default;
};

struct ConfigKey {
  const char* name;
  const char* description;
};
// Every accepted key, in the order they are rendered.
const std::vector<ConfigKey>& config_keys();

ExperimentSpec parse_config(const std::string& text);
ExperimentSpec load_config(const std::filesystem::path& path);
kv::Entries spec_entries(const ExperimentSpec& spec);
std::string render_config(const ExperimentSpec& spec);

// Everything needed to train and evaluate on one dataset directory.
struct DatasetBundle {
  std::string name;
  InteractionLog full;
  SplitDataset split;
  UserGrouping grouping;
  EvalCandidateSet tune_candidates;
  EvalCandidateSet test_candidates;
  bool split_from_files = false;
  bool groups_from_files = false;
};

// <dir>/<name>_{train,tune,test}.txt when present, else <dir>/<name>_data.txt
// split with `seed`. Groups come from <dir>/groups when present.
DatasetBundle load_dataset(const std::filesystem::path& dir, std::uint64_t seed,
                           double advantaged_fraction, int n_negatives = 99);

// Last path component of the dataset directory.
std::string dataset_name(const std::filesystem::path& dir);
// <dataset>_<model>_<method>_<seed>
std::string run_id(const ExperimentSpec& spec);

struct RunManifest {
  ExperimentSpec spec;
  std::string run_id;
  std::string code_version;
  double wall_clock_seconds = 0.0;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_tune_ndcg = 0.0;
  MetricReport test_report;
  std::filesystem::path checkpoint_path;
  std::filesystem::path result_path;
  std::filesystem::path curve_path;
  std::filesystem::path metrics_path;
  std::filesystem::path manifest_path;
};

RunManifest cmd_train(const ExperimentSpec& spec);

Evaluation cmd_evaluate(ModelKind model, const std::filesystem::path& dataset_dir,
                        const std::filesystem::path& checkpoint);

struct CompareResult {
  std::vector<RunManifest> runs;
  std::filesystem::path table_path;
  std::filesystem::path curve_path;
  std::string table;  // printable form of the table file
};

CompareResult cmd_compare(const ExperimentSpec& base,
                          const std::vector<Method>& methods);

std::vector<Method> parse_method_list(const std::string& csv);

std::string code_version();

}  // namespace ucds
