#pragma once

#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace ctxfaith {

struct EmbeddingVector {
    std::vector<double> values;
    std::string provider_id;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string provider_id() const = 0;
    virtual std::size_t dimension() const = 0;
    virtual EmbeddingVector embed(const std::string& text) = 0;
    // Default loops over embed(); network providers override with batching.
    virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts);
};

// Deterministic local embedder: character n-grams (n = 1..3 over bytes)
// hashed into a fixed-dimension signed-count vector, L2-normalized.
// Stands in for the neural sentence encoder in tests and offline runs.
class HashingEmbedder : public EmbeddingProvider {
public:
    explicit HashingEmbedder(std::size_t dimension = 256);
    std::string provider_id() const override { return id_; }
    std::size_t dimension() const override { return dim_; }
    EmbeddingVector embed(const std::string& text) override;

private:
    std::size_t dim_;
    std::string id_;
};

// Client for any HTTP service mapping texts to fixed-dimension vectors.
// Protocol: POST {url}  body {"texts": [...]}  ->  {"embeddings": [[...], ...]}.
// A bearer token is read from CTXFAITH_EMBEDDING_TOKEN when set.
class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(std::string url, std::string provider_id, std::size_t dimension,
                          int batch_size = 64, int timeout_s = 30);
    std::string provider_id() const override { return id_; }
    std::size_t dimension() const override { return dim_; }
    EmbeddingVector embed(const std::string& text) override;
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;

private:
    std::string url_;
    std::string id_;
    std::size_t dim_;
    int batch_size_;
    int timeout_s_;
};

// Memoizes embeddings by (provider_id, sha256(text)). Optionally persists
// entries to a JSONL file so sweeps can reuse earlier runs. Concurrent
// readers are cheap; writes are serialized.
class EmbeddingCache {
public:
    EmbeddingCache() = default;
    explicit EmbeddingCache(std::string persist_path);  // loads existing entries

    bool lookup(const std::string& provider_id, const std::string& text, std::vector<double>& out) const;
    void store(const std::string& provider_id, const std::string& text, const std::vector<double>& values);
    std::size_t size() const;

private:
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, std::vector<double>> entries_;
    std::string persist_path_;
};

double cosine(const EmbeddingVector& u, const EmbeddingVector& v);

struct RankedDemo {
    std::string id;
    double similarity = 0.0;
};

// Non-increasing similarity; ties broken by ascending id.
using RankedDemos = std::vector<RankedDemo>;

// Exhaustive scoring + stable sort; equals the brute-force oracle exactly.
// Pool embeddings go through `cache` when provided.
RankedDemos select_demos(const std::string& test_text,
                         const std::vector<std::pair<std::string, std::string>>& pool, std::size_t k,
                         EmbeddingProvider& provider, EmbeddingCache* cache = nullptr);

}  // namespace ctxfaith
