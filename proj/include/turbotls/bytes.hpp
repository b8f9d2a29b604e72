// Shared byte-string, time, hashing and RNG primitives used across the library.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace turbotls {

using Bytes = std::vector<std::uint8_t>;
using BytesView = std::span<const std::uint8_t>;

// Virtual time. The simulator runs on a virtual clock; the socket runners feed
// steady_clock offsets. Nanosecond integers keep latency arithmetic exact.
using Duration = std::chrono::nanoseconds;
using TimePoint = std::chrono::nanoseconds;

inline Duration from_ms(double ms) {
    return Duration{std::llround(ms * 1e6)};
}

inline double to_ms(Duration d) {
    return static_cast<double>(d.count()) / 1e6;
}

inline double to_us(Duration d) {
    return static_cast<double>(d.count()) / 1e3;
}

inline Bytes to_bytes(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

inline std::string to_string(BytesView b) {
    return std::string(b.begin(), b.end());
}

std::string hex_encode(BytesView data);
std::optional<Bytes> hex_decode(std::string_view hex);

// FNV-1a. Used for mock-flight checksums and transcript digests; not crypto.
std::uint32_t fnv1a32(BytesView data);
std::uint64_t fnv1a64(BytesView data);

// Deterministic splitmix64 generator. The standard distributions are not
// bit-portable across library implementations, so seeded runs use this.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

    Bytes bytes(std::size_t n) {
        Bytes out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<std::uint8_t>(next());
        return out;
    }

private:
    std::uint64_t state_;
};

// Minimal ok-or-error holder for total decoders on hostile input.
template <typename T, typename E>
class Result {
public:
    Result(T value) : v_(std::move(value)) {}  // NOLINT(google-explicit-constructor)
    Result(E error) : v_(error) {}             // NOLINT(google-explicit-constructor)

    bool ok() const { return std::holds_alternative<T>(v_); }
    explicit operator bool() const { return ok(); }
    const T& value() const& { return std::get<T>(v_); }
    T&& value() && { return std::get<T>(std::move(v_)); }
    E error() const { return std::get<E>(v_); }

private:
    std::variant<T, E> v_;
};

void put_u32be(Bytes& out, std::uint32_t v);
std::uint32_t get_u32be(const std::uint8_t* p);
void put_u16be(Bytes& out, std::uint16_t v);
std::uint16_t get_u16be(const std::uint8_t* p);

}  // namespace turbotls
