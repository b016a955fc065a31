#include "rpo/prompt.h"

#include <algorithm>
#include <array>

#include "rpo/error.h"
#include "rpo/io.h"
#include "rpo/text.h"

namespace rpo {

namespace detail {
extern const std::pair<std::string_view, std::string_view> kBuiltinTemplates[];
extern const std::size_t kBuiltinTemplateCount;
}  // namespace detail

namespace {

constexpr std::array<std::string_view, 9> kKnownPlaceholders = {
    "QUERY",         "MOVIE",         "REVIEW",   "ABSTRACT", "TWEET",
    "BASE_RESPONSE", "PROFILE_BLOCK", "TAG_LIST", "GOLD"};

constexpr std::array<TemplateKind, 5> kFileKinds = {
    TemplateKind::Base, TemplateKind::Reflection, TemplateKind::Teacher,
    TemplateKind::BaselineICL, TemplateKind::BaselineRAG};

std::string_view file_kind(TemplateKind kind) {
  switch (kind) {
    case TemplateKind::Base:
    case TemplateKind::BaselineZeroShot: return "base";
    case TemplateKind::Reflection: return "reflection";
    case TemplateKind::Teacher: return "teacher";
    case TemplateKind::BaselineICL: return "icl";
    case TemplateKind::BaselineRAG: return "rag";
  }
  return "";
}

std::string_view file_task(TaskKind task) {
  switch (task) {
    case TaskKind::MovieTagging: return "movie_tagging";
    case TaskKind::ProductRating: return "product_rating";
    case TaskKind::TitleGeneration: return "title_generation";
    case TaskKind::TweetParaphrase: return "tweet_paraphrase";
  }
  return "";
}

// Task input placeholder name for each kind.
std::string_view input_field(TaskKind task) {
  switch (task) {
    case TaskKind::MovieTagging: return "MOVIE";
    case TaskKind::ProductRating: return "REVIEW";
    case TaskKind::TitleGeneration: return "ABSTRACT";
    case TaskKind::TweetParaphrase: return "TWEET";
  }
  return "";
}

// A template file ends with exactly one newline that is not part of the body.
std::string strip_final_newline(std::string_view content) {
  if (!content.empty() && content.back() == '\n') content.remove_suffix(1);
  if (!content.empty() && content.back() == '\r') content.remove_suffix(1);
  return std::string(content);
}

void check_placeholders(const PromptTemplate& tpl) {
  for (const auto& name : placeholders(tpl.body)) {
    if (!is_known_placeholder(name)) {
      throw Error(ErrorCode::PlaceholderMissing,
                  "template " + template_file_name(tpl.kind, tpl.task) +
                      " references unknown placeholder {" + name + "}");
    }
  }
}

std::string tag_list() {
  std::string out;
  for (auto tag : movie_tags()) {
    if (!out.empty()) out += ", ";
    out += tag;
  }
  return out;
}

RenderedPrompt finish(std::string text, std::size_t shots,
                      std::size_t max_tokens) {
  RenderedPrompt p{std::move(text), shots, 0};
  p.token_estimate = estimate_tokens(p.text);
  if (p.token_estimate > max_tokens) {
    throw Error(ErrorCode::TokenBudgetExceeded,
                "prompt needs ~" + std::to_string(p.token_estimate) +
                    " tokens, budget is " + std::to_string(max_tokens));
  }
  return p;
}

// Renders with as many leading entries of `context` as fit the budget.
template <typename RenderFn>
RenderedPrompt render_fitting(const RankedContext& context, TaskKind task,
                              std::size_t max_tokens, RenderFn&& render) {
  std::span<const ScoredEntry> entries(context.entries);
  for (std::size_t n = entries.size(); n >= 1; --n) {
    auto text = render(profile_block(task, entries.first(n)));
    if (estimate_tokens(text) <= max_tokens || n == 1) {
      return finish(std::move(text), n, max_tokens);
    }
  }
  throw Error(ErrorCode::ContextEmpty, "no profile entries to render");
}

void require_non_empty(std::string_view value, const char* what) {
  if (trim(value).empty()) {
    throw Error(ErrorCode::InvalidArgument, std::string(what) + " is empty");
  }
}

}  // namespace

std::string_view to_string(BaselineMode mode) {
  switch (mode) {
    case BaselineMode::ZeroShot: return "ZeroShot";
    case BaselineMode::ICL: return "ICL";
    case BaselineMode::RAG: return "RAG";
  }
  return "";
}

std::size_t estimate_tokens(std::string_view text) {
  return (count_words(text) * 13 + 9) / 10;
}

std::vector<std::string> placeholders(std::string_view body) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < body.size() && ((body[j] >= 'A' && body[j] <= 'Z') || body[j] == '_')) {
      ++j;
    }
    if (j > i + 1 && j < body.size() && body[j] == '}') {
      names.emplace_back(body.substr(i + 1, j - i - 1));
      i = j;
    }
  }
  return names;
}

bool is_known_placeholder(std::string_view name) {
  return std::find(kKnownPlaceholders.begin(), kKnownPlaceholders.end(),
                   name) != kKnownPlaceholders.end();
}

std::string fill_template(std::string_view body,
                          const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(body.size());
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] == '{') {
      std::size_t j = i + 1;
      while (j < body.size() &&
             ((body[j] >= 'A' && body[j] <= 'Z') || body[j] == '_')) {
        ++j;
      }
      if (j > i + 1 && j < body.size() && body[j] == '}') {
        const std::string name(body.substr(i + 1, j - i - 1));
        auto it = values.find(name);
        if (it == values.end()) {
          throw Error(ErrorCode::PlaceholderMissing,
                      "no value for placeholder {" + name + "}");
        }
        out += it->second;
        i = j;
        continue;
      }
    }
    out.push_back(body[i]);
  }
  return out;
}

std::string template_file_name(TemplateKind kind, TaskKind task) {
  return std::string(file_kind(kind)) + "." + std::string(file_task(task)) +
         ".txt";
}

const TemplateSet& TemplateSet::builtin() {
  static const TemplateSet set = [] {
    TemplateSet s;
    for (TemplateKind kind : kFileKinds) {
      for (TaskKind task : kAllTaskKinds) {
        const auto name = template_file_name(kind, task);
        for (std::size_t i = 0; i < detail::kBuiltinTemplateCount; ++i) {
          if (detail::kBuiltinTemplates[i].first == name) {
            s.set({kind, task,
                   strip_final_newline(detail::kBuiltinTemplates[i].second)});
          }
        }
      }
    }
    return s;
  }();
  return set;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
  TemplateSet s = builtin();
  for (TemplateKind kind : kFileKinds) {
    for (TaskKind task : kAllTaskKinds) {
      const auto path = dir / template_file_name(kind, task);
      if (std::filesystem::exists(path)) {
        s.set({kind, task, strip_final_newline(read_file(path))});
      }
    }
  }
  return s;
}

const PromptTemplate& TemplateSet::get(TemplateKind kind, TaskKind task) const {
  if (kind == TemplateKind::BaselineZeroShot) kind = TemplateKind::Base;
  auto it = templates_.find({kind, task});
  if (it == templates_.end()) {
    throw Error(ErrorCode::NotFound,
                "no template " + template_file_name(kind, task));
  }
  return it->second;
}

void TemplateSet::set(PromptTemplate tpl) {
  check_placeholders(tpl);
  auto key = std::make_pair(tpl.kind, tpl.task);
  templates_[key] = std::move(tpl);
}

std::string profile_line(TaskKind task, const ProfileEntry& entry) {
  const std::string quoted = "\"" + entry.text + "\"";
  if (!entry.label || task == TaskKind::TweetParaphrase) return quoted;
  switch (task) {
    case TaskKind::MovieTagging:
      return "The tag for the movie: " + quoted + " is " + *entry.label;
    case TaskKind::ProductRating:
      return *entry.label + " is the score for " + quoted;
    case TaskKind::TitleGeneration:
      return "\"" + *entry.label + "\" is the title for the abstract: " + quoted;
    case TaskKind::TweetParaphrase:
      break;
  }
  return quoted;
}

std::string profile_block(TaskKind task, std::span<const ScoredEntry> entries) {
  std::string out;
  for (const auto& scored : entries) {
    if (!out.empty()) out += '\n';
    out += profile_line(task, scored.entry);
  }
  return out;
}

RenderedPrompt render_base(TaskKind task, const TaskInstance& instance,
                           const TemplateSet& templates) {
  if (instance.kind != task) {
    throw Error(ErrorCode::InvalidArgument,
                "instance kind does not match the requested task");
  }
  std::map<std::string, std::string> values = {
      {"QUERY", instance.query},
      {std::string(input_field(task)), instance.query}};
  if (task == TaskKind::MovieTagging) values["TAG_LIST"] = tag_list();
  const auto& tpl = templates.get(TemplateKind::Base, task);
  return finish(fill_template(tpl.body, values), 0, templates.max_tokens);
}

RenderedPrompt render_reflection(TaskKind task, std::string_view query,
                                 std::string_view base_response,
                                 const RankedContext& context,
                                 const TemplateSet& templates) {
  if (context.empty()) {
    throw Error(ErrorCode::ContextEmpty, "reflection needs profile context");
  }
  require_non_empty(query, "query");
  require_non_empty(base_response, "base response");
  const auto& tpl = templates.get(TemplateKind::Reflection, task);
  return render_fitting(context, task, templates.max_tokens,
                        [&](std::string block) {
                          return fill_template(
                              tpl.body, {{"QUERY", std::string(query)},
                                         {"BASE_RESPONSE",
                                          std::string(trim(base_response))},
                                         {"PROFILE_BLOCK", std::move(block)}});
                        });
}

RenderedPrompt render_teacher(TaskKind task, std::string_view query,
                              std::string_view base_response,
                              std::string_view gold, const ProfileEntry& p_star,
                              const TemplateSet& templates) {
  require_non_empty(query, "query");
  require_non_empty(base_response, "base response");
  require_non_empty(gold, "gold");
  require_non_empty(p_star.text, "profile example");
  const auto& tpl = templates.get(TemplateKind::Teacher, task);
  auto text = fill_template(
      tpl.body, {{"QUERY", std::string(query)},
                 {"BASE_RESPONSE", std::string(trim(base_response))},
                 {"GOLD", std::string(gold)},
                 {"PROFILE_BLOCK", profile_line(task, p_star)}});
  return finish(std::move(text), 1, templates.max_tokens);
}

RenderedPrompt render_baseline(BaselineMode mode, TaskKind task,
                               const TaskInstance& instance,
                               const RankedContext* context,
                               const TemplateSet& templates) {
  if (mode == BaselineMode::ZeroShot) {
    if (context) {
      throw Error(ErrorCode::ModeContextMismatch,
                  "zero-shot prompts take no profile context");
    }
    return render_base(task, instance, templates);
  }
  if (!context || context->empty()) {
    throw Error(ErrorCode::ModeContextMismatch,
                std::string(to_string(mode)) + " prompts need profile context");
  }
  if (instance.kind != task) {
    throw Error(ErrorCode::InvalidArgument,
                "instance kind does not match the requested task");
  }
  const auto kind = mode == BaselineMode::ICL ? TemplateKind::BaselineICL
                                              : TemplateKind::BaselineRAG;
  const auto& tpl = templates.get(kind, task);
  return render_fitting(*context, task, templates.max_tokens,
                        [&](std::string block) {
                          std::map<std::string, std::string> values = {
                              {"QUERY", instance.query},
                              {std::string(input_field(task)), instance.query},
                              {"PROFILE_BLOCK", std::move(block)}};
                          if (task == TaskKind::MovieTagging) {
                            values["TAG_LIST"] = tag_list();
                          }
                          return fill_template(tpl.body, values);
                        });
}

}  // namespace rpo
