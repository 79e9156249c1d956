#include "ctxfaith/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "httplib.h"
#include "json.hpp"

#include "ctxfaith/util.hpp"

namespace ctxfaith {

using nlohmann::json;

std::vector<EmbeddingVector> EmbeddingProvider::embed_batch(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed(t));
    return out;
}

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dim_(dimension) {
    if (dim_ == 0) throw std::invalid_argument("HashingEmbedder: dimension must be positive");
    id_ = "hash-v1-d" + std::to_string(dim_);
}

EmbeddingVector HashingEmbedder::embed(const std::string& text) {
    EmbeddingVector v;
    v.provider_id = id_;
    v.values.assign(dim_, 0.0);
    if (text.empty()) {
        v.values[0] = 1.0;  // fixed unit vector keeps the zero-norm guard out of reach
        return v;
    }
    for (std::size_t n = 1; n <= 3; ++n) {
        if (text.size() < n) break;
        for (std::size_t i = 0; i + n <= text.size(); ++i) {
            std::uint64_t h = fnv1a64(std::string_view(text).substr(i, n));
            double sign = (h >> 63) ? -1.0 : 1.0;
            v.values[h % dim_] += sign;
        }
    }
    double norm = 0.0;
    for (double x : v.values) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        v.values.assign(dim_, 0.0);
        v.values[0] = 1.0;
    } else {
        for (double& x : v.values) x /= norm;
    }
    return v;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string url, std::string provider_id,
                                             std::size_t dimension, int batch_size, int timeout_s)
    : url_(std::move(url)), id_(std::move(provider_id)), dim_(dimension),
      batch_size_(batch_size), timeout_s_(timeout_s) {
    if (dim_ == 0) throw std::invalid_argument("HttpEmbeddingProvider: dimension must be positive");
    if (batch_size_ < 1) batch_size_ = 1;
}

EmbeddingVector HttpEmbeddingProvider::embed(const std::string& text) {
    return embed_batch({text}).front();
}

std::vector<EmbeddingVector> HttpEmbeddingProvider::embed_batch(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());

    auto slash = url_.find('/', url_.find("//") == std::string::npos ? 0 : url_.find("//") + 2);
    std::string host = slash == std::string::npos ? url_ : url_.substr(0, slash);
    std::string path = slash == std::string::npos ? "/" : url_.substr(slash);

    httplib::Client client(host);
    client.set_connection_timeout(timeout_s_);
    client.set_read_timeout(timeout_s_);
    httplib::Headers headers;
    if (const char* token = std::getenv("CTXFAITH_EMBEDDING_TOKEN"))
        headers.emplace("Authorization", std::string("Bearer ") + token);

    for (std::size_t off = 0; off < texts.size(); off += static_cast<std::size_t>(batch_size_)) {
        std::size_t end = std::min(texts.size(), off + static_cast<std::size_t>(batch_size_));
        json body;
        body["texts"] = std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(off),
                                                 texts.begin() + static_cast<std::ptrdiff_t>(end));
        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res)
            throw std::runtime_error("embedding service unreachable at " + url_ + " (" +
                                     httplib::to_string(res.error()) + ")");
        if (res->status != 200)
            throw std::runtime_error("embedding service returned HTTP " + std::to_string(res->status) +
                                     ": " + res->body.substr(0, 200));
        json parsed;
        try {
            parsed = json::parse(res->body);
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("malformed embedding response: ") + e.what() +
                                     "; payload: " + res->body.substr(0, 200));
        }
        const auto& embs = parsed.at("embeddings");
        if (embs.size() != end - off)
            throw std::runtime_error("embedding service returned " + std::to_string(embs.size()) +
                                     " vectors for " + std::to_string(end - off) + " texts");
        for (const auto& e : embs) {
            EmbeddingVector v;
            v.provider_id = id_;
            v.values = e.get<std::vector<double>>();
            if (v.values.size() != dim_)
                throw std::runtime_error("embedding dimension mismatch: got " +
                                         std::to_string(v.values.size()) + ", expected " +
                                         std::to_string(dim_));
            out.push_back(std::move(v));
        }
    }
    return out;
}

EmbeddingCache::EmbeddingCache(std::string persist_path) : persist_path_(std::move(persist_path)) {
    std::ifstream is(persist_path_, std::ios::binary);
    if (!is) return;  // fresh cache
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        std::string key = j.at("provider_id").get<std::string>() + "\x1f" +
                          j.at("text_sha256").get<std::string>();
        entries_[key] = j.at("values").get<std::vector<double>>();
    }
}

bool EmbeddingCache::lookup(const std::string& provider_id, const std::string& text,
                            std::vector<double>& out) const {
    std::string key = provider_id + "\x1f" + sha256_hex(text);
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return false;
    out = it->second;
    return true;
}

void EmbeddingCache::store(const std::string& provider_id, const std::string& text,
                           const std::vector<double>& values) {
    std::string digest = sha256_hex(text);
    std::string key = provider_id + "\x1f" + digest;
    std::unique_lock lock(mutex_);
    if (!entries_.emplace(key, values).second) return;  // already present
    if (!persist_path_.empty()) {
        std::ofstream os(persist_path_, std::ios::binary | std::ios::app);
        if (os) {
            json j{{"provider_id", provider_id}, {"text_sha256", digest}, {"values", values}};
            os << j.dump() << '\n';
        }
    }
}

std::size_t EmbeddingCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
    if (u.provider_id != v.provider_id)
        throw std::invalid_argument("cosine: provider mismatch ('" + u.provider_id + "' vs '" +
                                    v.provider_id + "')");
    if (u.values.size() != v.values.size() || u.values.empty())
        throw std::invalid_argument("cosine: dimension mismatch (" + std::to_string(u.values.size()) +
                                    " vs " + std::to_string(v.values.size()) + ")");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.values.size(); ++i) {
        dot += u.values[i] * v.values[i];
        nu += u.values[i] * u.values[i];
        nv += v.values[i] * v.values[i];
    }
    if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("cosine: zero-norm vector");
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

RankedDemos select_demos(const std::string& test_text,
                         const std::vector<std::pair<std::string, std::string>>& pool, std::size_t k,
                         EmbeddingProvider& provider, EmbeddingCache* cache) {
    {
        std::unordered_set<std::string_view> ids;
        for (const auto& [id, _] : pool)
            if (!ids.insert(id).second)
                throw std::invalid_argument("select_demos: duplicate pool id '" + id + "'");
    }

    auto embed_one = [&](const std::string& text) -> EmbeddingVector {
        if (cache) {
            std::vector<double> values;
            if (cache->lookup(provider.provider_id(), text, values))
                return EmbeddingVector{std::move(values), provider.provider_id()};
        }
        EmbeddingVector v = provider.embed(text);
        if (cache) cache->store(provider.provider_id(), text, v.values);
        return v;
    };

    EmbeddingVector test_vec = embed_one(test_text);

    // Batch only the texts the cache cannot serve.
    std::vector<EmbeddingVector> pool_vecs(pool.size());
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (cache) {
            std::vector<double> values;
            if (cache->lookup(provider.provider_id(), pool[i].second, values)) {
                pool_vecs[i] = EmbeddingVector{std::move(values), provider.provider_id()};
                continue;
            }
        }
        missing.push_back(i);
    }
    if (!missing.empty()) {
        std::vector<std::string> texts;
        texts.reserve(missing.size());
        for (std::size_t i : missing) texts.push_back(pool[i].second);
        std::vector<EmbeddingVector> fresh;
        try {
            fresh = provider.embed_batch(texts);
        } catch (const std::exception& e) {
            throw std::runtime_error("embedding failed for pool item '" + pool[missing.front()].first +
                                     "' and following: " + e.what());
        }
        for (std::size_t j = 0; j < missing.size(); ++j) {
            if (cache) cache->store(provider.provider_id(), texts[j], fresh[j].values);
            pool_vecs[missing[j]] = std::move(fresh[j]);
        }
    }

    RankedDemos ranked;
    ranked.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
        ranked.push_back(RankedDemo{pool[i].first, cosine(test_vec, pool_vecs[i])});
    std::stable_sort(ranked.begin(), ranked.end(), [](const RankedDemo& a, const RankedDemo& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.id < b.id;
    });
    if (ranked.size() > k) ranked.resize(k);
    return ranked;
}

}  // namespace ctxfaith
