#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "rpo/dataset.h"

namespace rpo::testing {

inline std::filesystem::path fresh_dir(const std::string& name) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("rpo_test_" + name + "_" + std::to_string(::getpid()) + "_" +
              std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline ProfileEntry entry(std::string id, std::string text,
                          std::optional<std::string> label = std::nullopt,
                          std::optional<std::int64_t> ts = std::nullopt) {
  return ProfileEntry{std::move(id), std::move(text), std::move(label), ts};
}

inline TaskInstance instance(std::string id, std::string user, TaskKind kind,
                             std::string query, std::string gold,
                             std::vector<ProfileEntry> profile) {
  return TaskInstance{std::move(id), std::move(user), kind, std::move(query),
                      std::move(gold), std::move(profile)};
}

inline TaskInstance movie(std::string id, std::string user, std::string query,
                          std::string gold) {
  return instance(std::move(id), std::move(user), TaskKind::MovieTagging,
                  std::move(query), std::move(gold),
                  {entry("p1", "a slapstick romp with pratfalls", "comedy"),
                   entry("p2", "a starship crew drifts past a dying sun",
                         "sci-fi"),
                   entry("p3", "a stand-up comic tours small towns", "comedy")});
}

}  // namespace rpo::testing
