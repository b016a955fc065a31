#include "rpo/dataset.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "json.hpp"
#include "rpo/error.h"
#include "rpo/io.h"
#include "rpo/rng.h"
#include "rpo/text.h"

namespace rpo {

using json = nlohmann::json;

namespace {

constexpr std::array<std::string_view, 15> kMovieTags = {
    "sci-fi",         "based on a book",   "comedy",
    "action",         "twist ending",      "dystopia",
    "dark comedy",    "classic",           "psychology",
    "fantasy",        "romance",           "thought-provoking",
    "social commentary", "violence",       "true story"};

std::string required_string(const json& obj, const char* key,
                            std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(ErrorCode::SchemaError,
                std::string("missing field \"") + key + "\"", line);
  }
  if (!it->is_string()) {
    throw Error(ErrorCode::SchemaError,
                std::string("field \"") + key + "\" must be a string", line);
  }
  return it->get<std::string>();
}

}  // namespace

MetricProfile metric_profile(TaskKind kind) {
  switch (kind) {
    case TaskKind::MovieTagging: return MetricProfile::Classification;
    case TaskKind::ProductRating: return MetricProfile::Regression;
    case TaskKind::TitleGeneration:
    case TaskKind::TweetParaphrase: return MetricProfile::Generation;
  }
  return MetricProfile::Generation;
}

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::MovieTagging: return "MovieTagging";
    case TaskKind::ProductRating: return "ProductRating";
    case TaskKind::TitleGeneration: return "TitleGeneration";
    case TaskKind::TweetParaphrase: return "TweetParaphrase";
  }
  return "";
}

std::string_view to_string(MetricProfile profile) {
  switch (profile) {
    case MetricProfile::Classification: return "classification";
    case MetricProfile::Regression: return "regression";
    case MetricProfile::Generation: return "generation";
  }
  return "";
}

TaskKind parse_task_kind(std::string_view name) {
  std::string key;
  for (char c : to_lower(trim(name))) {
    if (c != '-' && c != '_' && c != ' ') key.push_back(c);
  }
  if (key == "movietagging" || key == "lamp2") return TaskKind::MovieTagging;
  if (key == "productrating" || key == "lamp3") return TaskKind::ProductRating;
  if (key == "titlegeneration" || key == "lamp5") {
    return TaskKind::TitleGeneration;
  }
  if (key == "tweetparaphrase" || key == "tweetparaphrasing" ||
      key == "lamp7") {
    return TaskKind::TweetParaphrase;
  }
  throw Error(ErrorCode::InvalidArgument,
              "unknown task kind \"" + std::string(name) + "\"");
}

std::span<const std::string_view> movie_tags() { return kMovieTags; }

bool is_movie_tag(std::string_view tag) {
  return std::find(kMovieTags.begin(), kMovieTags.end(), tag) !=
         kMovieTags.end();
}

std::optional<int> parse_strict_rating(std::string_view text) {
  auto t = trim(text);
  if (t.size() != 1 || t[0] < '1' || t[0] > '5') return std::nullopt;
  return t[0] - '0';
}

bool is_legal_label(TaskKind kind, std::string_view label) {
  switch (metric_profile(kind)) {
    case MetricProfile::Classification:
      return is_movie_tag(to_lower(trim(label)));
    case MetricProfile::Regression:
      return parse_strict_rating(label).has_value();
    case MetricProfile::Generation:
      return !trim(label).empty();
  }
  return false;
}

void validate_instance(const TaskInstance& instance,
                       std::optional<std::size_t> line) {
  if (instance.instance_id.empty()) {
    throw Error(ErrorCode::SchemaError, "empty instance_id", line);
  }
  if (instance.user_id.empty()) {
    throw Error(ErrorCode::SchemaError, "empty user_id", line);
  }
  if (trim(instance.query).empty()) {
    throw Error(ErrorCode::SchemaError, "empty query", line);
  }
  if (!is_legal_label(instance.kind, instance.gold)) {
    throw Error(ErrorCode::LabelError,
                "gold \"" + instance.gold + "\" is outside the " +
                    std::string(to_string(instance.kind)) + " label space",
                line);
  }
  std::set<std::string_view> ids;
  for (const auto& entry : instance.profile) {
    if (entry.entry_id.empty()) {
      throw Error(ErrorCode::SchemaError, "empty entry_id", line);
    }
    if (!ids.insert(entry.entry_id).second) {
      throw Error(ErrorCode::SchemaError,
                  "duplicate entry_id \"" + entry.entry_id + "\"", line);
    }
    if (trim(entry.text).empty()) {
      throw Error(ErrorCode::SchemaError,
                  "profile entry \"" + entry.entry_id + "\" has empty text",
                  line);
    }
    if (entry.label && metric_profile(instance.kind) !=
                           MetricProfile::Generation &&
        !is_legal_label(instance.kind, *entry.label)) {
      throw Error(ErrorCode::LabelError,
                  "profile label \"" + *entry.label + "\" is outside the " +
                      std::string(to_string(instance.kind)) + " label space",
                  line);
    }
  }
}

TaskInstance parse_instance(std::string_view json_line, TaskKind kind,
                            std::size_t line) {
  json obj;
  try {
    obj = json::parse(json_line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaError, e.what(), line);
  }
  if (!obj.is_object()) {
    throw Error(ErrorCode::SchemaError, "record is not an object", line);
  }

  TaskInstance inst;
  inst.instance_id = required_string(obj, "instance_id", line);
  inst.user_id = required_string(obj, "user_id", line);
  const auto kind_name = required_string(obj, "kind", line);
  try {
    inst.kind = parse_task_kind(kind_name);
  } catch (const Error&) {
    throw Error(ErrorCode::SchemaError, "unknown kind \"" + kind_name + "\"",
                line);
  }
  if (inst.kind != kind) {
    throw Error(ErrorCode::SchemaError,
                "kind \"" + kind_name + "\" does not match requested " +
                    std::string(to_string(kind)),
                line);
  }
  inst.query = required_string(obj, "query", line);
  inst.gold = required_string(obj, "gold", line);

  auto profile = obj.find("profile");
  if (profile == obj.end()) {
    throw Error(ErrorCode::SchemaError, "missing field \"profile\"", line);
  }
  if (!profile->is_array()) {
    throw Error(ErrorCode::SchemaError, "field \"profile\" must be an array",
                line);
  }
  for (const auto& item : *profile) {
    if (!item.is_object()) {
      throw Error(ErrorCode::SchemaError, "profile entry is not an object",
                  line);
    }
    ProfileEntry entry;
    entry.entry_id = required_string(item, "entry_id", line);
    entry.text = required_string(item, "text", line);
    if (auto it = item.find("label"); it != item.end() && !it->is_null()) {
      if (!it->is_string()) {
        throw Error(ErrorCode::SchemaError, "profile label must be a string",
                    line);
      }
      entry.label = it->get<std::string>();
    }
    if (auto it = item.find("timestamp"); it != item.end() && !it->is_null()) {
      if (!it->is_number_integer()) {
        throw Error(ErrorCode::SchemaError,
                    "profile timestamp must be an integer", line);
      }
      entry.timestamp = it->get<std::int64_t>();
    }
    inst.profile.push_back(std::move(entry));
  }
  validate_instance(inst, line);
  return inst;
}

std::string serialize_instance(const TaskInstance& instance) {
  json profile = json::array();
  for (const auto& entry : instance.profile) {
    json e = {{"entry_id", entry.entry_id}, {"text", entry.text}};
    if (entry.label) e["label"] = *entry.label;
    if (entry.timestamp) e["timestamp"] = *entry.timestamp;
    profile.push_back(std::move(e));
  }
  json obj = {{"instance_id", instance.instance_id},
              {"user_id", instance.user_id},
              {"kind", std::string(to_string(instance.kind))},
              {"query", instance.query},
              {"gold", instance.gold},
              {"profile", std::move(profile)}};
  return obj.dump();
}

std::vector<TaskInstance> parse_dataset(std::span<const std::string> lines,
                                        TaskKind kind) {
  std::vector<TaskInstance> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    out.push_back(parse_instance(lines[i], kind, i + 1));
  }
  return out;
}

std::vector<TaskInstance> load_dataset(const std::filesystem::path& path,
                                       TaskKind kind) {
  const auto lines = read_lines(path);
  return parse_dataset(lines, kind);
}

void save_dataset(const std::filesystem::path& path,
                  std::span<const TaskInstance> instances) {
  std::string content;
  for (const auto& inst : instances) {
    content += serialize_instance(inst);
    content += '\n';
  }
  write_file_atomic(path, content);
}

DatasetSplit split_users(std::span<const TaskInstance> instances,
                         std::size_t n_train_users, std::size_t n_test_users,
                         std::uint64_t seed) {
  std::set<std::string> distinct;
  for (const auto& inst : instances) distinct.insert(inst.user_id);
  if (distinct.size() < n_train_users + n_test_users) {
    throw Error(ErrorCode::InsufficientUsers,
                "need " + std::to_string(n_train_users + n_test_users) +
                    " users, have " + std::to_string(distinct.size()));
  }

  std::vector<std::string> users(distinct.begin(), distinct.end());
  SeededRng rng(seed);
  rng.shuffle(std::span<std::string>(users));

  std::set<std::string_view> train_users(users.begin(),
                                         users.begin() + n_train_users);
  std::set<std::string_view> test_users(
      users.begin() + n_train_users,
      users.begin() + n_train_users + n_test_users);

  DatasetSplit split;
  split.mode = SplitMode::UserSplit;
  for (const auto& inst : instances) {
    if (train_users.count(inst.user_id)) {
      split.train.push_back(inst);
    } else if (test_users.count(inst.user_id)) {
      split.test.push_back(inst);
    }
  }
  return split;
}

DatasetSplit split_time(std::span<const TaskInstance> instances,
                        double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument,
                "test_fraction must lie strictly between 0 and 1");
  }

  struct Keyed {
    bool timed;
    std::int64_t time;
    std::size_t position;
  };
  std::map<std::string, std::vector<Keyed>> by_user;
  std::vector<std::string> user_order;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    Keyed key{!inst.profile.empty(), std::numeric_limits<std::int64_t>::min(), i};
    for (const auto& entry : inst.profile) {
      if (!entry.timestamp) {
        key.timed = false;
        break;
      }
      key.time = std::max(key.time, *entry.timestamp);
    }
    auto [it, inserted] = by_user.try_emplace(inst.user_id);
    if (inserted) user_order.push_back(inst.user_id);
    it->second.push_back(key);
  }

  DatasetSplit split;
  split.mode = SplitMode::TimeSplit;
  for (const auto& user : user_order) {
    auto& items = by_user[user];
    if (items.size() < 2) {
      throw Error(ErrorCode::EmptyUserHistory,
                  "user \"" + user + "\" has fewer than 2 instances");
    }
    const bool all_timed = std::all_of(items.begin(), items.end(),
                                       [](const Keyed& k) { return k.timed; });
    std::stable_sort(items.begin(), items.end(),
                     [&](const Keyed& a, const Keyed& b) {
                       if (all_timed && a.time != b.time) return a.time < b.time;
                       return a.position < b.position;
                     });
    const auto n = items.size();
    auto n_test = static_cast<std::size_t>(
        std::ceil(static_cast<double>(n) * test_fraction - 1e-12));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      auto& dest = i < n - n_test ? split.train : split.test;
      dest.push_back(instances[items[i].position]);
    }
  }
  return split;
}

}  // namespace rpo
