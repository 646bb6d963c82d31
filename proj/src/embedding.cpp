#include "rdc/embedding.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

#include <fmt/format.h>
#include <json.hpp>

#include "rdc/error.hpp"
#include "rdc/similarity_kernels.hpp"
#include "rdc/util.hpp"

namespace rdc {

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) {
    throw ValidationError("embedding vector must have at least one component");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) {
      throw ValidationError("embedding vector has a non-finite component");
    }
  }
}

double EmbeddingVector::norm() const { return kernels::l2_norm(values_); }

std::string EmbeddingProviderConfig::provider_id() const {
  if (kind == Kind::Hashed) {
    return fmt::format("hashed-v1:dim={}:seed={}", dim, seed);
  }
  return fmt::format("remote:{}:{}", base_url, model);
}

HashedEmbeddingProvider::HashedEmbeddingProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim_ == 0) {
    throw ValidationError("embedding dim must be positive");
  }
}

std::vector<std::string> HashedEmbeddingProvider::tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::size_t HashedEmbeddingProvider::bucket(std::string_view token) const {
  return static_cast<std::size_t>(fnv1a64(token, seed_) % dim_);
}

EmbeddingVector HashedEmbeddingProvider::embed(std::string_view text) const {
  const auto trimmed = trim(text);
  if (trimmed.empty()) {
    throw ValidationError("cannot embed empty text");
  }
  auto tokens = tokenize(trimmed);
  if (tokens.empty()) tokens.emplace_back(trimmed);
  std::vector<double> counts(dim_, 0.0);
  for (const auto& token : tokens) counts[bucket(token)] += 1.0;
  const double norm = kernels::l2_norm(counts);
  for (double& v : counts) v /= norm;
  return EmbeddingVector(std::move(counts));
}

std::string HashedEmbeddingProvider::provider_id() const {
  EmbeddingProviderConfig config;
  config.dim = dim_;
  config.seed = seed_;
  return config.provider_id();
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(EmbeddingProviderConfig config)
    : config_(std::move(config)), endpoint_(Endpoint::parse(config_.base_url)) {
  if (config_.model.empty()) {
    throw ValidationError("remote embedding provider needs a model name");
  }
}

EmbeddingVector RemoteEmbeddingProvider::embed(std::string_view text) const {
  if (trim(text).empty()) {
    throw ValidationError("cannot embed empty text");
  }
  std::string token;
  if (!config_.api_key_env.empty()) {
    if (const char* value = std::getenv(config_.api_key_env.c_str())) token = value;
  }
  const nlohmann::json body = {{"model", config_.model}, {"input", std::string(text)}};
  const auto result = post_json(endpoint_, "/embeddings", body.dump(), token, config_.timeout, config_.retry);
  if (result.status < 200 || result.status > 299) {
    throw RuntimeError(fmt::format("embeddings endpoint returned HTTP {}: {}", result.status,
                                   result.body.substr(0, 200)));
  }
  std::vector<double> values;
  try {
    const auto parsed = nlohmann::json::parse(result.body);
    values = parsed.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeError(fmt::format("malformed embeddings response: {}", e.what()));
  }
  if (config_.dim != 0 && values.size() != config_.dim) {
    throw RuntimeError(fmt::format("embeddings endpoint returned dim {} (expected {})", values.size(), config_.dim));
  }
  try {
    return EmbeddingVector(std::move(values));
  } catch (const ValidationError& e) {
    throw RuntimeError(fmt::format("embeddings endpoint returned an invalid vector: {}", e.what()));
  }
}

std::string RemoteEmbeddingProvider::provider_id() const { return config_.provider_id(); }

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const EmbeddingProviderConfig& config) {
  if (config.kind == EmbeddingProviderConfig::Kind::Hashed) {
    return std::make_unique<HashedEmbeddingProvider>(config.dim, config.seed);
  }
  return std::make_unique<RemoteEmbeddingProvider>(config);
}

EmbeddingVector embed_text(std::string_view text, const EmbeddingProvider& provider) {
  auto vec = provider.embed(text);
  if (!(vec.norm() > 0.0)) {
    throw ValidationError("embedding has zero norm");
  }
  return vec;
}

}  // namespace rdc
