#include "ucds/dataset.hpp"

#include <spdlog/spdlog.h>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "ucds/errors.hpp"

namespace ucds {

namespace fs = std::filesystem;

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

namespace {

template <typename T>
std::optional<std::size_t> find_sorted(const std::vector<T>& v, T value) {
  auto it = std::lower_bound(v.begin(), v.end(), value);
  if (it == v.end() || *it != value) return std::nullopt;
  return static_cast<std::size_t>(it - v.begin());
}

bool parse_integer(std::string_view token, ExternalId& out) {
  auto [ptr, ec] =
      std::from_chars(token.data(), token.data() + token.size(), out);
  return ec == std::errc() && ptr == token.data() + token.size();
}

bool parse_real(const std::string& token, double& out) {
  std::size_t used = 0;
  try {
    out = std::stod(token, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == token.size() && std::isfinite(out);
}

std::vector<ExternalId> read_id_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataErrc::io, "cannot open " + path.string());
  std::vector<ExternalId> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token) || token[0] == '#') continue;
    ExternalId id = 0;
    std::string extra;
    if (!parse_integer(token, id) || (fields >> extra))
      throw ParseError(path.string(), line_no, "expected one integer id");
    ids.push_back(id);
  }
  return ids;
}

}  // namespace

// --- InteractionLog -------------------------------------------------------

InteractionLog::InteractionLog(std::vector<ExternalId> user_ids,
                               std::vector<ExternalId> item_ids,
                               std::vector<Interaction> records)
    : user_ids_(std::move(user_ids)), item_ids_(std::move(item_ids)) {
  if (records.empty() || user_ids_.empty() || item_ids_.empty())
    throw DataError(DataErrc::empty_dataset, "interaction log is empty");
  if (!std::is_sorted(user_ids_.begin(), user_ids_.end()) ||
      !std::is_sorted(item_ids_.begin(), item_ids_.end()))
    throw std::invalid_argument("vocabularies must be sorted");
  for (const auto& r : records) {
    if (r.user >= user_ids_.size() || r.item >= item_ids_.size())
      throw std::out_of_range("interaction index outside vocabulary");
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const Interaction& a, const Interaction& b) {
                     return a.user != b.user ? a.user < b.user
                                             : a.item < b.item;
                   });
  records.erase(std::unique(records.begin(), records.end(),
                            [](const Interaction& a, const Interaction& b) {
                              return a.user == b.user && a.item == b.item;
                            }),
                records.end());
  interactions_ = std::move(records);

  user_offsets_.assign(n_users() + 1, 0);
  item_offsets_.assign(n_items() + 1, 0);
  for (const auto& r : interactions_) {
    ++user_offsets_[r.user + 1];
    ++item_offsets_[r.item + 1];
  }
  for (std::size_t u = 0; u < n_users(); ++u)
    user_offsets_[u + 1] += user_offsets_[u];
  for (std::size_t i = 0; i < n_items(); ++i)
    item_offsets_[i + 1] += item_offsets_[i];

  user_items_.resize(interactions_.size());
  item_users_.resize(interactions_.size());
  std::vector<std::size_t> item_fill(item_offsets_.begin(),
                                     item_offsets_.end() - 1);
  for (std::size_t k = 0; k < interactions_.size(); ++k) {
    const auto& r = interactions_[k];
    user_items_[k] = r.item;  // already grouped by user, items ascending
    item_users_[item_fill[r.item]++] = r.user;  // users ascending
  }
}

InteractionLog InteractionLog::from_raw(std::span<const RawRecord> records) {
  std::vector<ExternalId> users, items;
  users.reserve(records.size());
  items.reserve(records.size());
  for (const auto& r : records) {
    users.push_back(r.user);
    items.push_back(r.item);
  }
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());

  std::vector<Interaction> dense;
  dense.reserve(records.size());
  for (const auto& r : records) {
    dense.push_back({static_cast<UserIndex>(*find_sorted(users, r.user)),
                     static_cast<ItemIndex>(*find_sorted(items, r.item)),
                     r.rating});
  }
  return InteractionLog(std::move(users), std::move(items), std::move(dense));
}

std::span<const ItemIndex> InteractionLog::items_of(UserIndex u) const {
  if (u >= n_users()) throw std::out_of_range("user index out of range");
  return std::span<const ItemIndex>(user_items_)
      .subspan(user_offsets_[u], user_offsets_[u + 1] - user_offsets_[u]);
}

std::span<const UserIndex> InteractionLog::users_of(ItemIndex i) const {
  if (i >= n_items()) throw std::out_of_range("item index out of range");
  return std::span<const UserIndex>(item_users_)
      .subspan(item_offsets_[i], item_offsets_[i + 1] - item_offsets_[i]);
}

bool InteractionLog::contains(UserIndex u, ItemIndex i) const {
  auto items = items_of(u);
  return std::binary_search(items.begin(), items.end(), i);
}

std::optional<double> InteractionLog::rating(UserIndex u, ItemIndex i) const {
  auto items = items_of(u);
  auto it = std::lower_bound(items.begin(), items.end(), i);
  if (it == items.end() || *it != i) return std::nullopt;
  return interactions_[user_offsets_[u] + (it - items.begin())].rating;
}

std::optional<UserIndex> InteractionLog::user_index(ExternalId id) const {
  auto pos = find_sorted(user_ids_, id);
  if (!pos) return std::nullopt;
  return static_cast<UserIndex>(*pos);
}

std::optional<ItemIndex> InteractionLog::item_index(ExternalId id) const {
  auto pos = find_sorted(item_ids_, id);
  if (!pos) return std::nullopt;
  return static_cast<ItemIndex>(*pos);
}

std::string InteractionLog::id_digest() const {
  uLong crc = crc32(0L, Z_NULL, 0);
  auto feed = [&crc](const std::vector<ExternalId>& ids) {
    unsigned char count[8];
    std::uint64_t n = ids.size();
    for (int b = 0; b < 8; ++b) count[b] = static_cast<unsigned char>(n >> (8 * b));
    crc = crc32(crc, count, 8);
    for (ExternalId id : ids) {
      auto bits = static_cast<std::uint64_t>(id);
      unsigned char bytes[8];
      for (int b = 0; b < 8; ++b)
        bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
      crc = crc32(crc, bytes, 8);
    }
  };
  feed(user_ids_);
  feed(item_ids_);
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

// --- UserGrouping ---------------------------------------------------------

UserGrouping::UserGrouping(std::size_t n_users,
                           std::vector<UserIndex> advantaged,
                           std::vector<UserIndex> disadvantaged)
    : advantaged_(std::move(advantaged)),
      disadvantaged_(std::move(disadvantaged)) {
  std::sort(advantaged_.begin(), advantaged_.end());
  std::sort(disadvantaged_.begin(), disadvantaged_.end());
  constexpr auto unset = static_cast<std::uint8_t>(0xff);
  std::vector<std::uint8_t> seen(n_users, unset);
  auto mark = [&](const std::vector<UserIndex>& users, Group g) {
    for (UserIndex u : users) {
      if (u >= n_users)
        throw DataError(DataErrc::unknown_user,
                        "user index " + std::to_string(u) + " out of range");
      if (seen[u] != unset)
        throw DataError(DataErrc::overlap, "user index " + std::to_string(u) +
                                               " listed more than once");
      seen[u] = static_cast<std::uint8_t>(g);
    }
  };
  mark(advantaged_, Group::advantaged);
  mark(disadvantaged_, Group::disadvantaged);
  groups_.resize(n_users);
  for (std::size_t u = 0; u < n_users; ++u) {
    if (seen[u] == unset)
      throw DataError(DataErrc::uncovered_user,
                      "user index " + std::to_string(u) + " is in no group");
    groups_[u] = static_cast<Group>(seen[u]);
  }
}

// --- parsing ----------------------------------------------------------------

std::vector<RawRecord> read_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataErrc::io, "cannot open " + path.string());
  std::vector<RawRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string t; fields >> t;) tokens.push_back(std::move(t));
    if (tokens.empty() || tokens[0][0] == '#') continue;
    if (tokens.size() < 2)
      throw ParseError(path.string(), line_no, "expected 'user item [rating]'");
    RawRecord r;
    if (!parse_integer(tokens[0], r.user))
      throw ParseError(path.string(), line_no,
                       "user id '" + tokens[0] + "' is not an integer");
    if (!parse_integer(tokens[1], r.item))
      throw ParseError(path.string(), line_no,
                       "item id '" + tokens[1] + "' is not an integer");
    if (r.user < 0 || r.item < 0)
      throw ParseError(path.string(), line_no, "negative id");
    if (tokens.size() >= 3 && !parse_real(tokens[2], r.rating))
      throw ParseError(path.string(), line_no,
                       "rating '" + tokens[2] + "' is not a number");
    records.push_back(r);
  }
  if (records.empty())
    throw DataError(DataErrc::empty_dataset,
                    "no interactions in " + path.string());
  return records;
}

InteractionLog parse_interactions(const fs::path& path) {
  auto records = read_records(path);
  return InteractionLog::from_raw(records);
}

// --- splitting and sampling -----------------------------------------------

SplitDataset leave_one_out_split(const InteractionLog& log, Rng& rng) {
  std::vector<Interaction> train;
  train.reserve(log.size());
  std::map<UserIndex, HeldOut> tune, test;
  for (UserIndex u = 0; u < log.n_users(); ++u) {
    auto items = log.items_of(u);
    const std::size_t n = items.size();
    std::size_t test_pos = n, tune_pos = n;
    if (n >= 3) {
      test_pos = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      tune_pos = std::uniform_int_distribution<std::size_t>(0, n - 2)(rng);
      if (tune_pos >= test_pos) ++tune_pos;
      test[u] = {items[test_pos], *log.rating(u, items[test_pos])};
      tune[u] = {items[tune_pos], *log.rating(u, items[tune_pos])};
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (k == test_pos || k == tune_pos) continue;
      train.push_back({u, items[k], *log.rating(u, items[k])});
    }
  }
  return {InteractionLog(log.user_ids(), log.item_ids(), std::move(train)),
          std::move(tune), std::move(test)};
}

namespace {

// Draws `count` distinct items uniformly from those `excluded` rejects.
// Rejection sampling when the pool is dense, explicit pool otherwise.
template <typename Excluded>
std::vector<ItemIndex> draw_distinct(std::size_t n_items, std::size_t pool,
                                     std::size_t count, Excluded excluded,
                                     Rng& rng) {
  std::vector<ItemIndex> out;
  out.reserve(count);
  if (pool >= 2 * count && pool * 2 >= n_items) {
    std::unordered_set<ItemIndex> chosen;
    std::uniform_int_distribution<ItemIndex> pick(
        0, static_cast<ItemIndex>(n_items - 1));
    while (out.size() < count) {
      ItemIndex i = pick(rng);
      if (excluded(i) || !chosen.insert(i).second) continue;
      out.push_back(i);
    }
    return out;
  }
  std::vector<ItemIndex> candidates;
  candidates.reserve(pool);
  for (ItemIndex i = 0; i < n_items; ++i)
    if (!excluded(i)) candidates.push_back(i);
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, candidates.size() - 1);
    std::swap(candidates[k], candidates[pick(rng)]);
    out.push_back(candidates[k]);
  }
  return out;
}

}  // namespace

EvalCandidateSet build_eval_candidates(
    const std::map<UserIndex, HeldOut>& held_out, const InteractionLog& log,
    std::size_t n_neg, Rng& rng) {
  EvalCandidateSet set;
  set.users.reserve(held_out.size());
  for (const auto& [user, positive] : held_out) {
    auto seen = log.items_of(user);
    if (!std::binary_search(seen.begin(), seen.end(), positive.item))
      throw DataError(DataErrc::split_inconsistent,
                      "held-out item missing from the full log");
    const std::size_t pool = log.n_items() - seen.size();
    if (pool < n_neg)
      throw InsufficientNegatives(log.external_user(user), pool, n_neg);
    auto negatives = draw_distinct(
        log.n_items(), pool, n_neg,
        [&seen](ItemIndex i) {
          return std::binary_search(seen.begin(), seen.end(), i);
        },
        rng);
    set.users.push_back({user, positive.item, std::move(negatives)});
  }
  return set;
}

UserGrouping group_users_by_activity(const InteractionLog& log,
                                     double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("fraction must lie in (0, 1)");
  std::vector<UserIndex> order(log.n_users());
  for (UserIndex u = 0; u < order.size(); ++u) order[u] = u;
  std::stable_sort(order.begin(), order.end(),
                   [&log](UserIndex a, UserIndex b) {
                     return log.items_of(a).size() > log.items_of(b).size();
                   });
  // 0.05 * 20 must give 1, not 2, after rounding noise.
  auto n_adv = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(order.size()) - 1e-9));
  n_adv = std::clamp<std::size_t>(n_adv, 1, order.size());
  std::vector<UserIndex> adv(order.begin(), order.begin() + n_adv);
  std::vector<UserIndex> dis(order.begin() + n_adv, order.end());
  return UserGrouping(log.n_users(), std::move(adv), std::move(dis));
}

UserGrouping load_group_files(const fs::path& dir, const InteractionLog& log) {
  auto to_dense = [&log](const std::vector<ExternalId>& ids) {
    std::vector<UserIndex> out;
    out.reserve(ids.size());
    for (ExternalId id : ids) {
      auto u = log.user_index(id);
      if (!u)
        throw DataError(DataErrc::unknown_user,
                        "group file lists unknown user " + std::to_string(id));
      out.push_back(*u);
    }
    return out;
  };
  auto active = read_id_file(dir / "users" / "active_ids.txt");
  auto inactive = read_id_file(dir / "users" / "inactive_ids.txt");
  std::unordered_set<ExternalId> active_set(active.begin(), active.end());
  for (ExternalId id : inactive) {
    if (active_set.count(id))
      throw DataError(DataErrc::overlap,
                      "user " + std::to_string(id) + " is both active and inactive");
  }
  for (const char* name : {"longtail_items.txt", "shorthead_items.txt"}) {
    auto path = dir / "items" / name;
    if (fs::exists(path)) read_id_file(path);
  }
  return UserGrouping(log.n_users(), to_dense(active), to_dense(inactive));
}

std::vector<TrainingExample> sample_training_negatives(
    const InteractionLog& train, std::size_t num_negative, Rng& rng) {
  if (num_negative == 0)
    throw std::invalid_argument("num_negative must be at least 1");
  std::vector<TrainingExample> out;
  out.reserve(train.size() * (num_negative + 1));
  const std::size_t n_items = train.n_items();
  std::uniform_int_distribution<ItemIndex> pick(
      0, static_cast<ItemIndex>(n_items - 1));
  std::vector<ItemIndex> pool;
  for (UserIndex u = 0; u < train.n_users(); ++u) {
    auto seen = train.items_of(u);
    if (seen.empty()) continue;
    const bool degenerate = seen.size() >= n_items;
    if (degenerate)
      spdlog::warn("user {} interacted with every item; no negatives sampled",
                   train.external_user(u));
    // Dense users sample from an explicit pool to bound rejection loops.
    const bool use_pool = !degenerate && seen.size() * 2 > n_items;
    if (use_pool) {
      pool.clear();
      for (ItemIndex i = 0; i < n_items; ++i)
        if (!std::binary_search(seen.begin(), seen.end(), i)) pool.push_back(i);
    }
    for (ItemIndex positive : seen) {
      out.push_back({u, positive, 1.0});
      if (degenerate) continue;
      for (std::size_t k = 0; k < num_negative; ++k) {
        ItemIndex j;
        if (use_pool) {
          j = pool[std::uniform_int_distribution<std::size_t>(
              0, pool.size() - 1)(rng)];
        } else {
          do {
            j = pick(rng);
          } while (std::binary_search(seen.begin(), seen.end(), j));
        }
        out.push_back({u, j, 0.0});
      }
    }
  }
  return out;
}

// --- split files --------------------------------------------------------------

namespace {

void write_line(std::ostream& out, ExternalId u, ExternalId i, double rating) {
  out << u << ' ' << i << ' ' << rating << '\n';
}

}  // namespace

void export_split(const SplitDataset& split, const fs::path& dir,
                  const std::string& name) {
  fs::create_directories(dir);
  const auto& log = split.train;
  auto open = [&](const std::string& suffix) {
    std::ofstream out(dir / (name + suffix));
    if (!out)
      throw DataError(DataErrc::io,
                      "cannot write " + (dir / (name + suffix)).string());
    out.precision(17);
    return out;
  };
  {
    auto out = open("_train.txt");
    for (const auto& r : log.interactions())
      write_line(out, log.external_user(r.user), log.external_item(r.item),
                 r.rating);
  }
  auto write_held = [&](const std::string& suffix,
                        const std::map<UserIndex, HeldOut>& held) {
    auto out = open(suffix);
    for (const auto& [u, h] : held)
      write_line(out, log.external_user(u), log.external_item(h.item),
                 h.rating);
  };
  write_held("_tune.txt", split.tune);
  write_held("_test.txt", split.test);
}

LoadedSplit load_split(const fs::path& dir, const std::string& name) {
  auto train_raw = read_records(dir / (name + "_train.txt"));
  auto tune_raw = read_records(dir / (name + "_tune.txt"));
  auto test_raw = read_records(dir / (name + "_test.txt"));

  std::vector<RawRecord> all;
  all.reserve(train_raw.size() + tune_raw.size() + test_raw.size());
  all.insert(all.end(), train_raw.begin(), train_raw.end());
  all.insert(all.end(), tune_raw.begin(), tune_raw.end());
  all.insert(all.end(), test_raw.begin(), test_raw.end());
  InteractionLog full = InteractionLog::from_raw(all);

  auto dense = [&full](const RawRecord& r) {
    return Interaction{*full.user_index(r.user), *full.item_index(r.item),
                       r.rating};
  };
  std::vector<Interaction> train;
  train.reserve(train_raw.size());
  for (const auto& r : train_raw) train.push_back(dense(r));
  InteractionLog train_log(full.user_ids(), full.item_ids(), std::move(train));

  auto held = [&](const std::vector<RawRecord>& raw, const char* which) {
    std::map<UserIndex, HeldOut> out;
    for (const auto& r : raw) {
      auto d = dense(r);
      if (!out.emplace(d.user, HeldOut{d.item, d.rating}).second)
        throw DataError(DataErrc::split_inconsistent,
                        std::string(which) + " lists user " +
                            std::to_string(r.user) + " twice");
      if (train_log.contains(d.user, d.item))
        throw DataError(DataErrc::split_inconsistent,
                        std::string(which) + " item of user " +
                            std::to_string(r.user) + " also in train");
    }
    return out;
  };
  auto tune = held(tune_raw, "tune");
  auto test = held(test_raw, "test");
  if (tune.size() != test.size())
    throw DataError(DataErrc::split_inconsistent,
                    "tune and test cover different users");
  for (const auto& [u, h] : tune) {
    auto it = test.find(u);
    if (it == test.end())
      throw DataError(DataErrc::split_inconsistent,
                      "tune and test cover different users");
    if (it->second.item == h.item)
      throw DataError(DataErrc::split_inconsistent,
                      "tune and test share an item for user " +
                          std::to_string(full.external_user(u)));
  }
  return {std::move(full),
          {std::move(train_log), std::move(tune), std::move(test)}};
}

}  // namespace ucds
