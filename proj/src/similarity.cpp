#include "rdc/similarity.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

#include "rdc/error.hpp"
#include "rdc/similarity_kernels.hpp"
#include "rdc/util.hpp"

namespace rdc {

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw ValidationError(fmt::format("cosine: dimension mismatch ({} vs {})", a.dim(), b.dim()));
  }
  const double norm_a = a.norm();
  const double norm_b = b.norm();
  if (!(norm_a > 0.0) || !(norm_b > 0.0)) {
    throw ValidationError("cosine: zero-norm vector");
  }
  return kernels::cosine_with_norms(a.values(), norm_a, b.values(), norm_b);
}

SimilarityIndex::SimilarityIndex(std::string provider_id, std::size_t dim,
                                 std::vector<std::pair<std::string, EmbeddingVector>> entries)
    : provider_id_(std::move(provider_id)), dim_(dim) {
  if (dim_ == 0) {
    throw ValidationError("index dim must be positive");
  }
  std::sort(entries.begin(), entries.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  ids_.reserve(entries.size());
  matrix_.reserve(entries.size() * dim_);
  norms_.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [id, vec] = entries[i];
    if (i > 0 && entries[i - 1].first == id) {
      throw ValidationError(fmt::format("index: duplicate id '{}'", id));
    }
    if (vec.dim() != dim_) {
      throw ValidationError(fmt::format("index: entry '{}' has dim {} (expected {})", id, vec.dim(), dim_));
    }
    const double norm = vec.norm();
    if (!(norm > 0.0)) {
      throw ValidationError(fmt::format("index: entry '{}' has zero norm", id));
    }
    ids_.push_back(id);
    matrix_.insert(matrix_.end(), vec.values().begin(), vec.values().end());
    norms_.push_back(norm);
  }
}

SimilarityIndex SimilarityIndex::build(const DatasetSplit& pool, const EmbeddingProvider& provider) {
  if (pool.examples.empty()) {
    throw ValidationError("cannot build an index over an empty pool");
  }
  for (const auto& example : pool.examples) {
    if (!example.gold_label) {
      throw ValidationError(fmt::format("pool example '{}' has no gold label", example.id));
    }
  }
  const auto n = static_cast<std::int64_t>(pool.size());
  std::vector<std::optional<EmbeddingVector>> vectors(pool.size());
  std::vector<std::string> errors(pool.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto slot = static_cast<std::size_t>(i);
    try {
      vectors[slot] = embed_text(pool.examples[slot].text, provider);
    } catch (const std::exception& e) {
      errors[slot] = e.what();
    }
  }
  std::vector<std::pair<std::string, EmbeddingVector>> entries;
  entries.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!vectors[i]) {
      throw RuntimeError(fmt::format("embedding failed for example '{}': {}", pool.examples[i].id, errors[i]));
    }
    entries.emplace_back(pool.examples[i].id, std::move(*vectors[i]));
  }
  const std::size_t dim = entries.front().second.dim();
  return SimilarityIndex(provider.provider_id(), dim, std::move(entries));
}

EmbeddingVector SimilarityIndex::vector(std::size_t i) const {
  const auto r = row(i);
  return EmbeddingVector(std::vector<double>(r.begin(), r.end()));
}

std::size_t SimilarityIndex::position(std::string_view id) const {
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) return ids_.size();
  return static_cast<std::size_t>(it - ids_.begin());
}

std::string SimilarityIndex::serialize() const {
  nlohmann::ordered_json header;
  header["provider_id"] = provider_id_;
  header["dim"] = dim_;
  header["count"] = ids_.size();
  std::string out = header.dump();
  out += '\n';
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    out += "{\"id\":";
    out += nlohmann::json(ids_[i]).dump();
    out += ",\"vector\":[";
    const auto r = row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (j > 0) out += ',';
      out += fmt::format("{:.16e}", r[j]);
    }
    out += "]}\n";
  }
  return out;
}

void SimilarityIndex::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

SimilarityIndex SimilarityIndex::parse(std::string_view text, std::string_view source) {
  const auto lines = split_lines(text);
  std::size_t line_no = 0;
  std::optional<nlohmann::json> header;
  std::vector<std::pair<std::string, EmbeddingVector>> entries;
  for (const auto& line : lines) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
      if (!header) {
        obj.at("provider_id").get<std::string>();
        obj.at("dim").get<std::size_t>();
        obj.at("count").get<std::size_t>();
        header = std::move(obj);
        continue;
      }
      entries.emplace_back(obj.at("id").get<std::string>(),
                           EmbeddingVector(obj.at("vector").get<std::vector<double>>()));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(fmt::format("{}: line {}: malformed index line: {}", source, line_no, e.what()));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("{}: line {}: {}", source, line_no, e.what()));
    }
  }
  if (!header) {
    throw ValidationError(fmt::format("{}: missing index header", source));
  }
  const auto count = (*header)["count"].get<std::size_t>();
  if (count != entries.size()) {
    throw ValidationError(fmt::format("{}: header count {} but {} entries", source, count, entries.size()));
  }
  return SimilarityIndex((*header)["provider_id"].get<std::string>(), (*header)["dim"].get<std::size_t>(),
                         std::move(entries));
}

SimilarityIndex SimilarityIndex::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

namespace {

double checked_query_norm(const SimilarityIndex& index, const EmbeddingVector& query, std::size_t k) {
  if (index.empty()) {
    throw ValidationError("top_k: index is empty");
  }
  if (k == 0) {
    throw ValidationError("top_k: k must be at least 1");
  }
  if (query.dim() != index.dim()) {
    throw ValidationError(fmt::format("top_k: query dim {} does not match index dim {}", query.dim(), index.dim()));
  }
  const double norm = query.norm();
  if (!(norm > 0.0)) {
    throw ValidationError("top_k: zero-norm query");
  }
  return norm;
}

std::vector<Neighbor> collect(const SimilarityIndex& index, const std::vector<double>& scores,
                              std::vector<std::size_t>& order, std::size_t take) {
  std::vector<Neighbor> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back({index.ids()[order[i]], scores[order[i]]});
  return out;
}

}  // namespace

std::vector<Neighbor> top_k(const SimilarityIndex& index, const EmbeddingVector& query, std::size_t k) {
  const double query_norm = checked_query_norm(index, query, k);
  std::vector<double> scores(index.size());
  kernels::score_rows_parallel(index.matrix(), index.dim(), index.norms(), query.values(), query_norm, scores);
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t take = std::min(k, index.size());
  // Rows are sorted by id, so row order is the id tie-break.
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  return collect(index, scores, order, take);
}

std::vector<Neighbor> top_k_serial(const SimilarityIndex& index, const EmbeddingVector& query, std::size_t k) {
  const double query_norm = checked_query_norm(index, query, k);
  std::vector<double> scores(index.size());
  kernels::score_rows_serial(index.matrix(), index.dim(), index.norms(), query.values(), query_norm, scores);
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return collect(index, scores, order, std::min(k, index.size()));
}

}  // namespace rdc
