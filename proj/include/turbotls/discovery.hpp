// DNS HTTPS resource record (SVCB form) encode/decode with the TurboTLS
// support flag, and a client-side capability cache. Actual DNS transport is
// out of scope; records are injected from config or files.
#pragma once

#include <map>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "turbotls/bytes.hpp"

namespace turbotls::discovery {

// First private-use SvcParamKey; carried with an empty value.
inline constexpr std::uint16_t kTurboTlsFlagKey = 65280;

struct HttpsRecord {
    std::uint16_t priority = 1;
    std::string target_name = ".";  // presentation form; "." for the root
    // Must be strictly ascending by key on the wire.
    std::vector<std::pair<std::uint16_t, Bytes>> svc_params;

    void add_turbo_flag() { svc_params.emplace_back(kTurboTlsFlagKey, Bytes{}); }
};

enum class RecordError {
    Malformed,       // bad name, bad label, general garbage
    UnsortedParams,  // keys not strictly ascending (covers duplicates)
    Truncated,
};

const char* to_string(RecordError err);

// Wire form: priority(2 BE) | target in DNS name encoding (uncompressed
// length-prefixed labels, zero terminator) | (key(2 BE) len(2 BE) value)*.
Result<Bytes, RecordError> encode_https_rdata(const HttpsRecord& record);
Result<HttpsRecord, RecordError> decode_https_rdata(BytesView rdata);

bool supports_turbotls(const HttpsRecord& record);

// Thread-safe: concurrent lookups, serialized stores.
class CapabilityCache {
public:
    struct Entry {
        bool supports_turbo = false;
        TimePoint learned_at{};
        Duration ttl{};
    };

    CapabilityCache() = default;
    // Moves transfer the entries only; callers must not move a cache that is
    // concurrently in use.
    CapabilityCache(CapabilityCache&& other) noexcept : entries_(std::move(other.entries_)) {}
    CapabilityCache& operator=(CapabilityCache&& other) noexcept {
        entries_ = std::move(other.entries_);
        return *this;
    }

    void store(const std::string& domain, bool supports_turbo, TimePoint now, Duration ttl);
    // nullopt when absent or expired (entries past learned_at + ttl).
    std::optional<bool> lookup(const std::string& domain, TimePoint now) const;
    std::size_t size() const;

    // Line format: domain <0|1> <expiry ns>. Expired lines are kept on disk
    // and filtered at lookup.
    std::string serialize() const;
    static CapabilityCache deserialize(const std::string& text);
    void save(const std::string& path) const;
    static CapabilityCache load(const std::string& path);  // empty when missing

private:
    mutable std::shared_mutex mutex_;
    std::map<std::string, Entry> entries_;
};

}  // namespace turbotls::discovery
