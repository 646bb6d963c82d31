#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rdc/corpus.hpp"
#include "rdc/embedding.hpp"

namespace rdc {

/// dot(a, b) / (|a| |b|). Throws on dimension mismatch or a zero-norm input.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

struct Neighbor {
  std::string example_id;
  double score = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Embedded pool, immutable once built. Entries are held sorted by id in one
/// contiguous row-major matrix alongside their precomputed norms.
///
/// File format: a JSON header line `{provider_id, dim, count}` followed by one
/// `{id, vector}` line per entry; components are written with 17 significant
/// digits so a reload is bit-identical.
class SimilarityIndex {
 public:
  SimilarityIndex(std::string provider_id, std::size_t dim,
                  std::vector<std::pair<std::string, EmbeddingVector>> entries);

  /// One entry per pool example. Embedding runs in parallel; the first failure
  /// aborts with the offending example id.
  static SimilarityIndex build(const DatasetSplit& pool, const EmbeddingProvider& provider);

  static SimilarityIndex parse(std::string_view text, std::string_view source = "<memory>");
  static SimilarityIndex load(const std::filesystem::path& path);
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  const std::string& provider_id() const { return provider_id_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const double> row(std::size_t i) const { return std::span<const double>(matrix_).subspan(i * dim_, dim_); }
  std::span<const double> matrix() const { return matrix_; }
  std::span<const double> norms() const { return norms_; }
  EmbeddingVector vector(std::size_t i) const;
  /// Row index of `id`, or size() when absent.
  std::size_t position(std::string_view id) const;

 private:
  std::string provider_id_;
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<double> matrix_;
  std::vector<double> norms_;
};

inline constexpr std::size_t kDefaultTopK = 5;

/// The min(k, |index|) highest-scoring entries, score descending and ties
/// broken by id ascending. Scores are computed in parallel.
std::vector<Neighbor> top_k(const SimilarityIndex& index, const EmbeddingVector& query, std::size_t k = kDefaultTopK);

/// Single-threaded reference: scores every row and fully sorts.
std::vector<Neighbor> top_k_serial(const SimilarityIndex& index, const EmbeddingVector& query,
                                   std::size_t k = kDefaultTopK);

}  // namespace rdc
