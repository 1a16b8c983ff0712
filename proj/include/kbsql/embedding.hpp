#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "kbsql/lemmatizer.hpp"

namespace kbsql {

using Vector = std::vector<float>;

class Embedder {
 public:
  virtual ~Embedder() = default;
  /// Unit-length vector, or all zeros for text without tokens.
  virtual Vector embed(const std::string& text) const = 0;
  virtual std::string id() const = 0;
  virtual std::size_t dimension() const = 0;
};

/// Offline embedder: each lemmatized token maps to a fixed pseudo-random unit vector; a text is
/// the normalized sum of its token vectors. `aliases` send a token to another token's vector.
class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dimension = 64, std::map<std::string, std::string> aliases = {},
                        std::uint64_t seed = 0x6b627371ULL);

  Vector embed(const std::string& text) const override;
  std::string id() const override;
  std::size_t dimension() const override { return dimension_; }

  Vector token_vector(const std::string& token) const;

 private:
  std::size_t dimension_;
  std::map<std::string, std::string> aliases_;
  std::uint64_t seed_;
  std::shared_ptr<const Lemmatizer> lemmatizer_;
};

double cosine(const Vector& a, const Vector& b);
void normalize(Vector& v);

}  // namespace kbsql
