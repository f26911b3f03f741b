#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ucds {

using UserIndex = std::uint32_t;
using ItemIndex = std::uint32_t;
using ExternalId = long long;
using Rng = std::mt19937_64;

// Independent generator per (seed, stream) so that e.g. evaluation candidates
// can be rebuilt without replaying training.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

namespace rng_stream {
inline constexpr std::uint64_t split = 1;
inline constexpr std::uint64_t tune_candidates = 2;
inline constexpr std::uint64_t test_candidates = 3;
inline constexpr std::uint64_t model_init = 4;
inline constexpr std::uint64_t training = 5;
}  // namespace rng_stream

struct Interaction {
  UserIndex user = 0;
  ItemIndex item = 0;
  double rating = 1.0;
};

struct RawRecord {
  ExternalId user = 0;
  ExternalId item = 0;
  double rating = 1.0;
};

// Immutable implicit-feedback log over a dense id space. External ids are
// kept sorted so that dense order agrees with external order.
class InteractionLog {
 public:
  InteractionLog(std::vector<ExternalId> user_ids,
                 std::vector<ExternalId> item_ids,
                 std::vector<Interaction> records);

  // Builds the vocabulary from the records themselves.
  static InteractionLog from_raw(std::span<const RawRecord> records);

  std::size_t n_users() const { return user_ids_.size(); }
  std::size_t n_items() const { return item_ids_.size(); }
  std::size_t size() const { return interactions_.size(); }

  std::span<const Interaction> interactions() const { return interactions_; }
  std::span<const ItemIndex> items_of(UserIndex u) const;
  std::span<const UserIndex> users_of(ItemIndex i) const;
  bool contains(UserIndex u, ItemIndex i) const;
  std::optional<double> rating(UserIndex u, ItemIndex i) const;

  ExternalId external_user(UserIndex u) const { return user_ids_.at(u); }
  ExternalId external_item(ItemIndex i) const { return item_ids_.at(i); }
  std::optional<UserIndex> user_index(ExternalId id) const;
  std::optional<ItemIndex> item_index(ExternalId id) const;
  const std::vector<ExternalId>& user_ids() const { return user_ids_; }
  const std::vector<ExternalId>& item_ids() const { return item_ids_; }

  // CRC-32 over both vocabularies, hex encoded. Identifies the id space a
  // checkpoint was trained against.
  std::string id_digest() const;

 private:
  std::vector<ExternalId> user_ids_;
  std::vector<ExternalId> item_ids_;
  std::vector<Interaction> interactions_;  // sorted by (user, item)
  std::vector<std::size_t> user_offsets_;
  std::vector<ItemIndex> user_items_;
  std::vector<std::size_t> item_offsets_;
  std::vector<UserIndex> item_users_;
};

struct HeldOut {
  ItemIndex item = 0;
  double rating = 1.0;
};

struct SplitDataset {
  InteractionLog train;
  std::map<UserIndex, HeldOut> tune;
  std::map<UserIndex, HeldOut> test;
};

struct UserCandidates {
  UserIndex user = 0;
  ItemIndex positive = 0;
  std::vector<ItemIndex> negatives;
};

struct EvalCandidateSet {
  std::vector<UserCandidates> users;  // ascending user index
};

enum class Group : std::uint8_t { advantaged, disadvantaged };

class UserGrouping {
 public:
  // Throws DataError(overlap) if a user is in both lists and
  // DataError(uncovered_user) if some user in [0, n_users) is in neither.
  UserGrouping(std::size_t n_users, std::vector<UserIndex> advantaged,
               std::vector<UserIndex> disadvantaged);

  const std::vector<UserIndex>& advantaged() const { return advantaged_; }
  const std::vector<UserIndex>& disadvantaged() const { return disadvantaged_; }
  Group group_of(UserIndex u) const { return groups_.at(u); }
  bool is_advantaged(UserIndex u) const {
    return group_of(u) == Group::advantaged;
  }
  std::size_t n_users() const { return groups_.size(); }

 private:
  std::vector<UserIndex> advantaged_;
  std::vector<UserIndex> disadvantaged_;
  std::vector<Group> groups_;
};

struct TrainingExample {
  UserIndex user = 0;
  ItemIndex item = 0;
  double label = 0.0;
};

// Whitespace separated "user item [rating]" records. Blank and '#' lines are
// skipped. Duplicate (user, item) pairs keep the first rating.
std::vector<RawRecord> read_records(const std::filesystem::path& path);
InteractionLog parse_interactions(const std::filesystem::path& path);

// Users with at least three interactions give one uniformly drawn item to
// test and another to tune; everyone else is train-only.
SplitDataset leave_one_out_split(const InteractionLog& log, Rng& rng);

EvalCandidateSet build_eval_candidates(
    const std::map<UserIndex, HeldOut>& held_out, const InteractionLog& log,
    std::size_t n_neg, Rng& rng);

UserGrouping group_users_by_activity(const InteractionLog& log,
                                     double fraction = 0.05);

// Reads <dir>/users/{active,inactive}_ids.txt. Item group files under
// <dir>/items are format-checked when present and otherwise ignored.
UserGrouping load_group_files(const std::filesystem::path& dir,
                              const InteractionLog& log);

// One positive plus num_negative uniform negatives per train interaction.
// Users that have interacted with the whole catalog get no negatives.
std::vector<TrainingExample> sample_training_negatives(
    const InteractionLog& train, std::size_t num_negative, Rng& rng);

// <name>_train.txt, <name>_tune.txt and <name>_test.txt with external ids.
void export_split(const SplitDataset& split, const std::filesystem::path& dir,
                  const std::string& name);

struct LoadedSplit {
  InteractionLog full;
  SplitDataset split;
};

// Inverse of export_split; the full log is the union of the three files.
LoadedSplit load_split(const std::filesystem::path& dir,
                       const std::string& name);

}  // namespace ucds
