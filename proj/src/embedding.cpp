#include "kbsql/embedding.hpp"

#include <cmath>

#include "kbsql/hash.hpp"
#include "kbsql/text.hpp"

namespace kbsql {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

HashEmbedder::HashEmbedder(std::size_t dimension, std::map<std::string, std::string> aliases, std::uint64_t seed)
    : dimension_(dimension), seed_(seed), lemmatizer_(default_lemmatizer()) {
  for (auto& [k, v] : aliases) aliases_[lemmatizer_->lemmatize(k)] = lemmatizer_->lemmatize(v);
}

std::string HashEmbedder::id() const {
  std::string fp;
  for (const auto& [k, v] : aliases_) {
    append_field(fp, k);
    append_field(fp, v);
  }
  return "hash-" + std::to_string(dimension_) + "-" + sha256_hex(fp + std::to_string(seed_)).substr(0, 8);
}

Vector HashEmbedder::token_vector(const std::string& token) const {
  std::string key = token;
  if (auto it = aliases_.find(token); it != aliases_.end()) key = it->second;
  std::uint64_t state = fnv1a(key) ^ seed_;
  Vector v(dimension_);
  for (auto& x : v) {
    // Uniform in [-1, 1); normalization below makes the direction what matters.
    x = static_cast<float>(static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53 * 2.0 - 1.0);
  }
  normalize(v);
  return v;
}

Vector HashEmbedder::embed(const std::string& input) const {
  Vector sum(dimension_, 0.0f);
  for (const auto& token : text::split(lemmatizer_->lemmatize(input), ' ')) {
    if (token.empty()) continue;
    Vector t = token_vector(token);
    for (std::size_t i = 0; i < dimension_; ++i) sum[i] += t[i];
  }
  normalize(sum);
  return sum;
}

void normalize(Vector& v) {
  double norm = 0;
  for (float x : v) norm += static_cast<double>(x) * x;
  norm = std::sqrt(norm);
  if (norm == 0) return;
  for (auto& x : v) x = static_cast<float>(x / norm);
}

double cosine(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return 0.0;
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace kbsql
