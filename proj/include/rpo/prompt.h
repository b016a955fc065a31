#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rpo/dataset.h"
#include "rpo/retrieval.h"

namespace rpo {

enum class TemplateKind {
  Base,
  Reflection,
  Teacher,
  BaselineICL,
  BaselineRAG,
  BaselineZeroShot,
};

enum class BaselineMode { ZeroShot, ICL, RAG };

std::string_view to_string(BaselineMode mode);

struct PromptTemplate {
  TemplateKind kind = TemplateKind::Base;
  TaskKind task = TaskKind::MovieTagging;
  std::string body;
};

struct RenderedPrompt {
  std::string text;
  std::size_t shot_count = 0;
  std::size_t token_estimate = 0;
};

inline constexpr std::size_t kMaxSequenceTokens = 2048;
inline constexpr std::string_view kOutputFormatInstruction =
    "The output should follow this structured format: <think>...</think>, "
    "and <personalized>...</personalized>.";

// ceil(whitespace words * 1.3)
std::size_t estimate_tokens(std::string_view text);

// Placeholder names ({NAME}, NAME in [A-Z_]+) in order of appearance.
std::vector<std::string> placeholders(std::string_view body);
bool is_known_placeholder(std::string_view name);

// Single-pass substitution; substituted values are never rescanned. Throws
// PlaceholderMissing for any placeholder without a value.
std::string fill_template(std::string_view body,
                          const std::map<std::string, std::string>& values);

// Templates keyed by (kind, task). File layout in a template directory is
// "<kind>.<task>.txt" with kind in {base, reflection, teacher, icl, rag} and
// task in {movie_tagging, product_rating, title_generation,
// tweet_paraphrase}; zero-shot prompts use the base template.
class TemplateSet {
 public:
  // The versioned set shipped in templates/v1, compiled in.
  static const TemplateSet& builtin();
  // Missing files fall back to the built-in template. Unknown placeholders
  // throw PlaceholderMissing.
  static TemplateSet load(const std::filesystem::path& dir);

  const PromptTemplate& get(TemplateKind kind, TaskKind task) const;
  void set(PromptTemplate tpl);

  std::size_t max_tokens = kMaxSequenceTokens;

 private:
  std::map<std::pair<TemplateKind, TaskKind>, PromptTemplate> templates_;
};

std::string template_file_name(TemplateKind kind, TaskKind task);

// One profile example in the per-task demonstration format, e.g.
//   The tag for the movie: "..." is comedy
std::string profile_line(TaskKind task, const ProfileEntry& entry);
std::string profile_block(TaskKind task, std::span<const ScoredEntry> entries);

RenderedPrompt render_base(TaskKind task, const TaskInstance& instance,
                           const TemplateSet& templates = TemplateSet::builtin());

// Entries are dropped lowest-score-first until the prompt fits the token
// budget; TokenBudgetExceeded only when a single entry does not fit.
RenderedPrompt render_reflection(
    TaskKind task, std::string_view query, std::string_view base_response,
    const RankedContext& context,
    const TemplateSet& templates = TemplateSet::builtin());

RenderedPrompt render_teacher(
    TaskKind task, std::string_view query, std::string_view base_response,
    std::string_view gold, const ProfileEntry& p_star,
    const TemplateSet& templates = TemplateSet::builtin());

RenderedPrompt render_baseline(
    BaselineMode mode, TaskKind task, const TaskInstance& instance,
    const RankedContext* context,
    const TemplateSet& templates = TemplateSet::builtin());

}  // namespace rpo
