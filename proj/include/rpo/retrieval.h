#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "rpo/dataset.h"
#include "rpo/provider.h"

namespace rpo {

struct RetrievalQuery {
  std::string text;
};

// query alone, or "query base_response" joined by a single space.
RetrievalQuery form_query(std::string_view query,
                          std::optional<std::string_view> base_response);

struct LexicalBackend {};
struct EmbeddingBackend {
  std::shared_ptr<const Embedder> embedder;
};
struct RandomBackend {
  std::uint64_t seed = 0;
};
using RetrievalBackend =
    std::variant<LexicalBackend, EmbeddingBackend, RandomBackend>;

struct ScoredEntry {
  ProfileEntry entry;
  double score = 0.0;
};

struct RankedContext {
  std::vector<ScoredEntry> entries;
  std::size_t k = 0;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
};

// Document frequencies over one profile.
class CorpusStats {
 public:
  explicit CorpusStats(std::span<const ProfileEntry> profile);

  // ln((1 + N) / (1 + df(t))) + 1
  double idf(const std::string& term) const;
  std::size_t documents() const { return documents_; }

 private:
  std::size_t documents_ = 0;
  std::unordered_map<std::string, std::size_t> df_;
};

// Cosine of raw-count TF-IDF vectors, in [0, 1].
double lexical_score(const RetrievalQuery& query, std::string_view entry_text,
                     const CorpusStats& stats);

// Top min(k, |profile|) entries. Lexical and embedding rankings are sorted by
// descending score with ties broken by ascending entry_id; the random
// backend returns a seeded sample without replacement, scored 0.
RankedContext retrieve_topk(std::span<const ProfileEntry> profile,
                            const RetrievalQuery& query, std::size_t k,
                            const RetrievalBackend& backend);

}  // namespace rpo
