#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ctxfaith {

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Deterministic RNG with a platform-independent output sequence. Used for
// every sampling decision so that regeneration is byte-identical.
class DetRng {
public:
    explicit DetRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Unbiased draw from [0, n) via rejection sampling.
    std::uint64_t bounded(std::uint64_t n) {
        if (n == 0) throw std::out_of_range("DetRng::bounded: n == 0");
        std::uint64_t threshold = (0ull - n) % n;
        for (;;) {
            std::uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

// Per-instance sampling stream: independent of record order in the file,
// stable across runs with the same global seed.
inline std::uint64_t instance_seed(std::string_view id, std::uint64_t global_seed) {
    return splitmix64(fnv1a64(id) ^ splitmix64(global_seed));
}

std::string sha256_hex(std::string_view data);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

// Calls fn(line_number, line) for every line; line numbers start at 1.
// A trailing newline does not produce an extra empty line.
void for_each_line(const std::string& path, const std::function<void(std::size_t, const std::string&)>& fn);

// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions inside
// fn must be handled by the caller's closure; they terminate otherwise.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace ctxfaith
