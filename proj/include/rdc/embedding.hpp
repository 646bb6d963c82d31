#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rdc/http.hpp"

namespace rdc {

/// Dense vector of finite doubles, at least one component.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values);

  std::size_t dim() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double norm() const;

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> values_;
};

struct EmbeddingProviderConfig {
  enum class Kind { Hashed, Remote };

  Kind kind = Kind::Hashed;
  std::size_t dim = 256;
  std::uint64_t seed = 0;
  // Remote only: POST {base_url}/embeddings with {model, input}.
  std::string base_url;
  std::string model;
  std::string api_key_env;
  std::chrono::milliseconds timeout{30000};
  RetryPolicy retry;

  /// Identifies the vector space; indices built by different providers are
  /// not interchangeable.
  std::string provider_id() const;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  virtual std::string provider_id() const = 0;
};

/// Feature-hashed token counts, L2-normalized. Tokens are maximal runs of
/// ASCII alphanumerics (bytes >= 0x80 count as token characters), lowercased.
/// A text with no tokens hashes as a single token of its trimmed self.
class HashedEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashedEmbeddingProvider(std::size_t dim = 256, std::uint64_t seed = 0);

  EmbeddingVector embed(std::string_view text) const override;
  std::string provider_id() const override;

  static std::vector<std::string> tokenize(std::string_view text);
  std::size_t bucket(std::string_view token) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// OpenAI-compatible embeddings endpoint.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(EmbeddingProviderConfig config);

  EmbeddingVector embed(std::string_view text) const override;
  std::string provider_id() const override;

 private:
  EmbeddingProviderConfig config_;
  Endpoint endpoint_;
};

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const EmbeddingProviderConfig& config);

/// Embeds non-empty text; rejects non-finite or zero vectors.
EmbeddingVector embed_text(std::string_view text, const EmbeddingProvider& provider);

}  // namespace rdc
