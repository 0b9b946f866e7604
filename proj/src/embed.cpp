#include "contextfed/embed.hpp"

#include <algorithm>
#include <cmath>

#include "contextfed/error.hpp"
#include "contextfed/json_io.hpp"
#include "contextfed/rng.hpp"
#include "json.hpp"

namespace contextfed {
namespace embed {

HashSlot hash_slot(const std::string& token, int dim, std::uint64_t seed) {
  const std::uint64_t h = mix64(fnv1a64(token) ^ mix64(seed));
  const std::uint64_t s = mix64(h);
  return {static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim)), (s >> 63) ? -1.0 : 1.0};
}

double l2_norm(const EmbeddingVector& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

namespace {
void normalize(EmbeddingVector& v) {
  const double n = l2_norm(v);
  if (n > 0.0) {
    for (double& x : v) x /= n;
  }
}
}  // namespace

EmbeddingVector hash_embed(const TokenList& tokens, int dim, std::uint64_t seed) {
  if (dim < 1) throw Error("embedding dimension must be at least 1");
  EmbeddingVector v(static_cast<std::size_t>(dim), 0.0);
  for (const auto& t : tokens) {
    const HashSlot slot = hash_slot(t, dim, seed);
    v[slot.index] += slot.sign;
  }
  normalize(v);
  return v;
}

std::optional<std::size_t> TfidfVocabulary::find(const std::string& term) const {
  auto it = index.find(term);
  if (it == index.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> ngrams(const TokenList& tokens, int min_n, int max_n) {
  std::vector<std::string> out;
  for (int n = min_n; n <= max_n; ++n) {
    const auto un = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + un <= tokens.size(); ++i) {
      std::string g = tokens[i];
      for (std::size_t k = 1; k < un; ++k) {
        g += ' ';
        g += tokens[i + k];
      }
      out.push_back(std::move(g));
    }
  }
  return out;
}

TfidfVocabulary tfidf_fit(const std::vector<TokenList>& corpus, std::size_t vocab_size, int min_n, int max_n) {
  if (corpus.empty()) throw Error("empty corpus");
  if (min_n < 1 || max_n < min_n) throw Error("invalid n-gram range");

  std::unordered_map<std::string, std::size_t> df;
  for (const auto& doc : corpus) {
    auto grams = ngrams(doc, min_n, max_n);
    std::sort(grams.begin(), grams.end());
    grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
    for (auto& g : grams) ++df[std::move(g)];
  }

  std::vector<std::pair<std::string, std::size_t>> ranked(df.begin(), df.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > vocab_size) ranked.resize(vocab_size);

  TfidfVocabulary vocab;
  vocab.min_n = min_n;
  vocab.max_n = max_n;
  vocab.num_docs = corpus.size();
  const double docs = static_cast<double>(corpus.size());
  for (auto& [term, freq] : ranked) {
    vocab.index.emplace(term, vocab.terms.size());
    vocab.terms.push_back(term);
    vocab.doc_freq.push_back(freq);
    vocab.idf.push_back(std::log((1.0 + docs) / (1.0 + static_cast<double>(freq))) + 1.0);
  }
  return vocab;
}

EmbeddingVector tfidf_embed(const TokenList& tokens, const TfidfVocabulary& vocab) {
  EmbeddingVector v(vocab.size(), 0.0);
  for (const auto& g : ngrams(tokens, vocab.min_n, vocab.max_n)) {
    if (auto idx = vocab.find(g)) v[*idx] += 1.0;
  }
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= vocab.idf[i];
  normalize(v);
  return v;
}

std::vector<TokenList> chunk_tokens(const TokenList& tokens, std::size_t chunk_size) {
  if (chunk_size < 1) throw Error("chunk size must be at least 1");
  std::vector<TokenList> chunks;
  for (std::size_t i = 0; i < tokens.size(); i += chunk_size) {
    const std::size_t end = std::min(tokens.size(), i + chunk_size);
    chunks.emplace_back(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                        tokens.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return chunks;
}

EmbeddingVector pool_max(const std::vector<EmbeddingVector>& vectors) {
  if (vectors.empty()) throw Error("nothing to pool");
  EmbeddingVector out = vectors.front();
  for (std::size_t k = 1; k < vectors.size(); ++k) {
    if (vectors[k].size() != out.size()) throw Error("cannot pool vectors of different dimensions");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], vectors[k][i]);
  }
  return out;
}

EmbeddingVector mean_vector(const std::vector<EmbeddingVector>& vectors) {
  if (vectors.empty()) throw Error("nothing to average");
  EmbeddingVector out(vectors.front().size(), 0.0);
  for (const auto& v : vectors) {
    if (v.size() != out.size()) throw Error("cannot average vectors of different dimensions");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  for (double& x : out) x /= static_cast<double>(vectors.size());
  return out;
}

}  // namespace embed

void EmbeddingStore::add(const std::string& sample_id, EmbeddingVector v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw Error("non-finite embedding value for sample_id " + sample_id);
  }
  const int d = static_cast<int>(v.size());
  if (dim && *dim != d) {
    throw Error("dimension mismatch for sample_id " + sample_id + ": expected " + std::to_string(*dim) + ", got " +
                std::to_string(d));
  }
  dim = d;
  vectors[sample_id] = std::move(v);
}

const EmbeddingVector* EmbeddingStore::find(const std::string& sample_id) const {
  auto it = vectors.find(sample_id);
  return it == vectors.end() ? nullptr : &it->second;
}

namespace embed {

EmbeddingStore parse_embeddings(const std::string& text) {
  EmbeddingStore store;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw Error("malformed embedding file at line " + std::to_string(line_no));
    }
    if (!header_seen) {
      if (!j.is_object() || j.value("format", "") != "contextfed-embed" || !j.contains("dim") ||
          !j["dim"].is_number_integer()) {
        throw Error("malformed embedding header at line " + std::to_string(line_no));
      }
      if (j.value("version", 0) != 1) throw Error("unsupported embedding file version at line " + std::to_string(line_no));
      store.dim = j["dim"].get<int>();
      header_seen = true;
      continue;
    }
    if (!j.is_object() || !j.contains("sample_id") || !j["sample_id"].is_string() || !j.contains("vector") ||
        !j["vector"].is_array()) {
      throw Error("malformed embedding record at line " + std::to_string(line_no));
    }
    EmbeddingVector v;
    v.reserve(j["vector"].size());
    for (const auto& x : j["vector"]) {
      if (!x.is_number()) throw Error("malformed embedding record at line " + std::to_string(line_no));
      v.push_back(x.get<double>());
    }
    store.add(j["sample_id"].get<std::string>(), std::move(v));
  }
  return store;
}

EmbeddingStore load_embeddings(const std::string& path) { return parse_embeddings(read_file(path)); }

std::string serialize_embeddings(const EmbeddingStore& store) {
  if (!store.dim) {
    if (!store.vectors.empty()) throw Error("embedding store has vectors but no dimension");
    return {};
  }
  std::string out = "{\"format\":\"contextfed-embed\",\"version\":1,\"dim\":" + std::to_string(*store.dim) + "}\n";
  for (const auto& [id, v] : store.vectors) {
    out += "{\"sample_id\":" + quote_json(id) + ",\"vector\":" + format_vector(v) + "}\n";
  }
  return out;
}

EmbeddingVector StoreEmbedder::embed(const TokenList&, const std::string& sample_id) const {
  const EmbeddingVector* v = store_.find(sample_id);
  if (!v) throw Error("embedding file has no vector for sample_id " + sample_id);
  return *v;
}

void save_embeddings(const EmbeddingStore& store, const std::string& path) {
  write_file(path, serialize_embeddings(store));
}

}  // namespace embed
}  // namespace contextfed
