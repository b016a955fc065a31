#include "rpo/retrieval.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "rpo/error.h"
#include "rpo/rng.h"
#include "rpo/text.h"

namespace rpo {
namespace {

using TermWeights = std::unordered_map<std::string, double>;

TermWeights tfidf_vector(std::string_view text, const CorpusStats& stats) {
  TermWeights counts;
  for (auto& tok : tokenize(text)) counts[tok] += 1.0;
  for (auto& [term, weight] : counts) weight *= stats.idf(term);
  return counts;
}

double cosine(const TermWeights& a, const TermWeights& b) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (const auto& [term, w] : a) {
    na += w * w;
    if (auto it = b.find(term); it != b.end()) dot += w * it->second;
  }
  for (const auto& [term, w] : b) nb += w * w;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::BackendUnavailable,
                "embedding dimensions disagree");
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

RankedContext take_ranked(std::span<const ProfileEntry> profile,
                          std::vector<double> scores, std::size_t k) {
  std::vector<std::size_t> order(profile.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return profile[a].entry_id < profile[b].entry_id;
  });
  RankedContext ctx;
  ctx.k = k;
  const auto take = std::min(k, profile.size());
  for (std::size_t i = 0; i < take; ++i) {
    ctx.entries.push_back({profile[order[i]], scores[order[i]]});
  }
  return ctx;
}

}  // namespace

RetrievalQuery form_query(std::string_view query,
                          std::optional<std::string_view> base_response) {
  if (query.empty()) throw Error(ErrorCode::EmptyQuery, "query is empty");
  RetrievalQuery rq{std::string(query)};
  if (base_response) {
    rq.text += ' ';
    rq.text += *base_response;
  }
  return rq;
}

CorpusStats::CorpusStats(std::span<const ProfileEntry> profile)
    : documents_(profile.size()) {
  for (const auto& entry : profile) {
    auto tokens = tokenize(entry.text);
    std::unordered_set<std::string> unique(tokens.begin(), tokens.end());
    for (const auto& t : unique) ++df_[t];
  }
}

double CorpusStats::idf(const std::string& term) const {
  auto it = df_.find(term);
  const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((1.0 + static_cast<double>(documents_)) / (1.0 + df)) + 1.0;
}

double lexical_score(const RetrievalQuery& query, std::string_view entry_text,
                     const CorpusStats& stats) {
  return cosine(tfidf_vector(query.text, stats),
                tfidf_vector(entry_text, stats));
}

RankedContext retrieve_topk(std::span<const ProfileEntry> profile,
                            const RetrievalQuery& query, std::size_t k,
                            const RetrievalBackend& backend) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (profile.empty()) throw Error(ErrorCode::EmptyProfile, "profile is empty");
  if (query.text.empty()) throw Error(ErrorCode::EmptyQuery, "query is empty");

  if (std::holds_alternative<LexicalBackend>(backend)) {
    const CorpusStats stats(profile);
    const auto qvec = tfidf_vector(query.text, stats);
    std::vector<double> scores;
    scores.reserve(profile.size());
    for (const auto& entry : profile) {
      scores.push_back(cosine(qvec, tfidf_vector(entry.text, stats)));
    }
    return take_ranked(profile, std::move(scores), k);
  }

  if (const auto* emb = std::get_if<EmbeddingBackend>(&backend)) {
    if (!emb->embedder) {
      throw Error(ErrorCode::BackendUnavailable, "no embedder configured");
    }
    std::vector<std::string> texts;
    texts.reserve(profile.size() + 1);
    texts.push_back(query.text);
    for (const auto& entry : profile) texts.push_back(entry.text);
    std::vector<std::vector<double>> vectors;
    try {
      vectors = emb->embedder->embed(texts);
    } catch (const Error& e) {
      throw Error(ErrorCode::BackendUnavailable, e.what());
    }
    if (vectors.size() != texts.size()) {
      throw Error(ErrorCode::BackendUnavailable,
                  "embedding count does not match input count");
    }
    std::vector<double> scores;
    scores.reserve(profile.size());
    for (std::size_t i = 0; i < profile.size(); ++i) {
      scores.push_back(cosine(vectors[0], vectors[i + 1]));
    }
    return take_ranked(profile, std::move(scores), k);
  }

  const auto& random = std::get<RandomBackend>(backend);
  std::vector<std::size_t> order(profile.size());
  std::iota(order.begin(), order.end(), 0);
  SeededRng rng(random.seed);
  rng.shuffle(std::span<std::size_t>(order));
  RankedContext ctx;
  ctx.k = k;
  const auto take = std::min(k, profile.size());
  for (std::size_t i = 0; i < take; ++i) {
    ctx.entries.push_back({profile[order[i]], 0.0});
  }
  return ctx;
}

}  // namespace rpo
