#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rpo {

enum class TaskKind { MovieTagging, ProductRating, TitleGeneration, TweetParaphrase };
enum class MetricProfile { Classification, Regression, Generation };

inline constexpr TaskKind kAllTaskKinds[] = {
    TaskKind::MovieTagging, TaskKind::ProductRating, TaskKind::TitleGeneration,
    TaskKind::TweetParaphrase};

MetricProfile metric_profile(TaskKind kind);
std::string_view to_string(TaskKind kind);
std::string_view to_string(MetricProfile profile);

// Accepts the canonical names ("MovieTagging") and the benchmark aliases
// ("LaMP-2", "lamp2", "movie_tagging"). Throws InvalidArgument otherwise.
TaskKind parse_task_kind(std::string_view name);

// The fixed movie tag vocabulary, in prompt order.
std::span<const std::string_view> movie_tags();
bool is_movie_tag(std::string_view tag);

// Returns the canonical rating in 1..5 if `text` (trimmed) is exactly one
// such digit.
std::optional<int> parse_strict_rating(std::string_view text);

// Whether `label` lies in the kind's label space. Generation kinds accept
// any non-empty string.
bool is_legal_label(TaskKind kind, std::string_view label);

struct ProfileEntry {
  std::string entry_id;
  std::string text;
  std::optional<std::string> label;
  std::optional<std::int64_t> timestamp;

  bool operator==(const ProfileEntry&) const = default;
};

struct TaskInstance {
  std::string instance_id;
  std::string user_id;
  TaskKind kind = TaskKind::MovieTagging;
  std::string query;
  std::string gold;
  std::vector<ProfileEntry> profile;

  bool operator==(const TaskInstance&) const = default;
};

enum class SplitMode { UserSplit, TimeSplit };

struct DatasetSplit {
  SplitMode mode = SplitMode::UserSplit;
  std::vector<TaskInstance> train;
  std::vector<TaskInstance> test;
};

// Throws SchemaError or LabelError describing the first violated invariant.
void validate_instance(const TaskInstance& instance,
                       std::optional<std::size_t> line = std::nullopt);

// Parses one normalized record. `line` is reported in errors.
TaskInstance parse_instance(std::string_view json_line, TaskKind kind,
                            std::size_t line = 1);
std::string serialize_instance(const TaskInstance& instance);

// Line-delimited normalized records; blank lines are skipped but still
// counted for error line numbers.
std::vector<TaskInstance> load_dataset(const std::filesystem::path& path,
                                       TaskKind kind);
std::vector<TaskInstance> parse_dataset(std::span<const std::string> lines,
                                        TaskKind kind);
void save_dataset(const std::filesystem::path& path,
                  std::span<const TaskInstance> instances);

// Deterministic user-level partition: distinct users are sorted, shuffled
// with `seed`, and the first n_train / next n_test taken. Instances of users
// in neither set are dropped.
DatasetSplit split_users(std::span<const TaskInstance> instances,
                         std::size_t n_train_users, std::size_t n_test_users,
                         std::uint64_t seed);

inline constexpr double kDefaultTestFraction = 0.2;

// Per-user chronological split. An instance's time is the latest timestamp
// in its profile when every entry carries one; otherwise file order is used.
// Each user contributes ceil(n * test_fraction) suffix instances to test,
// clamped to [1, n - 1].
DatasetSplit split_time(std::span<const TaskInstance> instances,
                        double test_fraction = kDefaultTestFraction);

}  // namespace rpo
