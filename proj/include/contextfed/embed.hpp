#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace contextfed {

/// A fixed text representation fed to the linear heads. Entries are finite.
using EmbeddingVector = std::vector<double>;
using TokenList = std::vector<std::string>;

namespace embed {

inline constexpr int kDefaultDim = 256;
inline constexpr std::size_t kDefaultChunkSize = 512;

/// Signed feature hashing followed by L2 normalization (zero input stays zero).
EmbeddingVector hash_embed(const TokenList& tokens, int dim, std::uint64_t seed);

/// Bucket and sign a token maps to under hash_embed.
struct HashSlot {
  std::size_t index;
  double sign;
};
HashSlot hash_slot(const std::string& token, int dim, std::uint64_t seed);

/// N-gram TF-IDF vocabulary. Terms are space-joined n-grams, kept in
/// selection order (document frequency descending, then lexicographic).
struct TfidfVocabulary {
  int min_n = 1;
  int max_n = 3;
  std::size_t num_docs = 0;
  std::vector<std::string> terms;
  std::vector<std::size_t> doc_freq;
  std::vector<double> idf;
  std::unordered_map<std::string, std::size_t> index;

  std::size_t size() const { return terms.size(); }
  std::optional<std::size_t> find(const std::string& term) const;
};

/// Every n-gram of `tokens` for n in [min_n, max_n], space-joined, in order.
std::vector<std::string> ngrams(const TokenList& tokens, int min_n, int max_n);

/// idf(t) = ln((1 + |D|) / (1 + df(t))) + 1. Throws Error("empty corpus").
TfidfVocabulary tfidf_fit(const std::vector<TokenList>& corpus, std::size_t vocab_size, int min_n = 1,
                          int max_n = 3);

/// Raw term count times idf, L2-normalized; out-of-vocabulary n-grams ignored.
EmbeddingVector tfidf_embed(const TokenList& tokens, const TfidfVocabulary& vocab);

/// Consecutive non-overlapping chunks; the last may be short.
std::vector<TokenList> chunk_tokens(const TokenList& tokens, std::size_t chunk_size = kDefaultChunkSize);

/// Elementwise maximum. Throws Error("nothing to pool") on an empty list.
EmbeddingVector pool_max(const std::vector<EmbeddingVector>& vectors);

/// Elementwise arithmetic mean. Throws Error on an empty list.
EmbeddingVector mean_vector(const std::vector<EmbeddingVector>& vectors);

double l2_norm(const EmbeddingVector& v);

}  // namespace embed

/// Externally computed embeddings keyed by sample id. Read-only once loaded.
struct EmbeddingStore {
  std::optional<int> dim;
  std::map<std::string, EmbeddingVector> vectors;

  /// Inserts a vector, enforcing the shared dimension.
  void add(const std::string& sample_id, EmbeddingVector v);
  const EmbeddingVector* find(const std::string& sample_id) const;
  bool operator==(const EmbeddingStore&) const = default;
};

namespace embed {

/// JSON Lines: header {"format":"contextfed-embed","version":1,"dim":d} then
/// one {"sample_id":...,"vector":[...]} per line.
EmbeddingStore load_embeddings(const std::string& path);
EmbeddingStore parse_embeddings(const std::string& text);
void save_embeddings(const EmbeddingStore& store, const std::string& path);
std::string serialize_embeddings(const EmbeddingStore& store);

/// Maps one chunk of tokens to a vector. `sample_id` names the chunk for
/// providers backed by precomputed files.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dim() const = 0;
  virtual EmbeddingVector embed(const TokenList& chunk, const std::string& sample_id) const = 0;
};

class HashEmbedder final : public Embedder {
 public:
  HashEmbedder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
  int dim() const override { return dim_; }
  EmbeddingVector embed(const TokenList& chunk, const std::string&) const override {
    return hash_embed(chunk, dim_, seed_);
  }

 private:
  int dim_;
  std::uint64_t seed_;
};

class TfidfEmbedder final : public Embedder {
 public:
  explicit TfidfEmbedder(TfidfVocabulary vocab) : vocab_(std::move(vocab)) {}
  int dim() const override { return static_cast<int>(vocab_.size()); }
  EmbeddingVector embed(const TokenList& chunk, const std::string&) const override {
    return tfidf_embed(chunk, vocab_);
  }
  const TfidfVocabulary& vocabulary() const { return vocab_; }

 private:
  TfidfVocabulary vocab_;
};

/// Looks vectors up by sample id; a missing id is an Error.
class StoreEmbedder final : public Embedder {
 public:
  explicit StoreEmbedder(const EmbeddingStore& store) : store_(store) {}
  int dim() const override { return store_.dim.value_or(0); }
  EmbeddingVector embed(const TokenList& chunk, const std::string& sample_id) const override;

 private:
  const EmbeddingStore& store_;
};

}  // namespace embed
}  // namespace contextfed
