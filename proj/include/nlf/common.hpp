#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace nlf {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// geometry
struct ParallelRay : Error {
    explicit ParallelRay(const std::string& m = "ray parallel to plane") : Error(m) {}
};
struct NoIntersection : Error {
    explicit NoIntersection(const std::string& m = "no intersection") : Error(m) {}
};
struct BehindNear : Error {
    explicit BehindNear(const std::string& m = "ray origin behind near plane") : Error(m) {}
};

// net / model
struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& m = "shape mismatch") : Error(m) {}
};
struct DegenerateEmbedding : Error {
    explicit DegenerateEmbedding(const std::string& m = "embedding norm below threshold") : Error(m) {}
};
struct UnsortedSamples : Error {
    explicit UnsortedSamples(const std::string& m = "voxel samples not sorted by entry_t") : Error(m) {}
};

// io
struct IoError : Error {
    explicit IoError(const std::string& m) : Error(m) {}
};
struct MalformedHeader : Error {
    explicit MalformedHeader(const std::string& m) : Error(m) {}
};
struct SchemaVersionMismatch : Error {
    explicit SchemaVersionMismatch(const std::string& m) : Error(m) {}
};
struct MissingField : Error {
    explicit MissingField(const std::string& m) : Error(m) {}
};
struct VersionMismatch : Error {
    explicit VersionMismatch(const std::string& m) : Error(m) {}
};
struct CorruptCheckpoint : Error {
    explicit CorruptCheckpoint(const std::string& m) : Error(m) {}
};

// metrics / train
struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& m = "image dimensions differ") : Error(m) {}
};
struct TooSmall : Error {
    explicit TooSmall(const std::string& m = "image smaller than metric window") : Error(m) {}
};
struct EmptyDataset : Error {
    explicit EmptyDataset(const std::string& m = "dataset has no training pixels") : Error(m) {}
};
struct EmptySplit : Error {
    explicit EmptySplit(const std::string& m = "requested split is empty") : Error(m) {}
};
struct NonFiniteLoss : Error {
    explicit NonFiniteLoss(const std::string& m) : Error(m) {}
};
struct OutOfRange : Error {
    explicit OutOfRange(const std::string& m = "index out of range") : Error(m) {}
};

// Counter-based deterministic RNG (splitmix64 core). Streams are derived
// from a root seed plus a name so every consumer draws from its own
// sequence regardless of call order elsewhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    static Rng stream(std::uint64_t root_seed, const std::string& name) {
        std::uint64_t h = 1469598103934665603ull;  // FNV-1a over the name
        for (unsigned char c : name) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return Rng(root_seed ^ h);
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

inline std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t crc = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    const auto* p = static_cast<const unsigned char*>(data);
    crc = ~crc;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xff] ^ (crc >> 8);
    return ~crc;
}

}  // namespace nlf
