#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pinn {

// A point left the domain (or a divisor fell below the machine guard).
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A recorded computation is structurally unusable (incomplete tape, shape mismatch).
struct StructuralError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Checkpoint file unreadable or inconsistent with its header.
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite value inside a model evaluation; message names the offending gate.
struct ModelFault : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic sub-seed for a named stream of a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char ch : stream) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ull;
    }
    std::uint64_t s = master ^ h;
    return splitmix64(s);
}

// Uniform doubles from raw engine bits; avoids the implementation-defined
// std::uniform_real_distribution mapping.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t bits() { return eng_(); }

  private:
    std::mt19937_64 eng_;
};

// FNV-1a over raw bytes; used to fingerprint sample sets for paired-run fairness.
inline std::uint64_t hash_bytes(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace pinn
