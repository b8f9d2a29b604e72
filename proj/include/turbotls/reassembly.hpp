// Bounded reassembly of fragmented flights from out-of-order, duplicated or
// partially lost datagrams. Serves both directions: the server rebuilds
// ClientHello flights, the client rebuilds the response flight.
//
// Single-writer contract: all mutation happens from one logical event loop.
#pragma once

#include <map>
#include <unordered_map>

#include "turbotls/wire.hpp"

namespace turbotls::reassembly {

struct BufferConfig {
    std::size_t max_total_bytes = 8 * 1024 * 1024;  // global accounting cap
    std::size_t max_entries = 1024;
    Duration entry_ttl = std::chrono::seconds(2);
    // A single datagram claims total_len bytes up front, so cap what one
    // connection id may reserve.
    std::size_t max_entry_bytes = 64 * 1024;
};

// Fixed accounting overhead charged per entry on top of its message buffer.
inline constexpr std::size_t kEntryOverheadBytes = 64;

enum class RejectReason {
    CapacityExceeded,  // admitting or growing the entry would breach a bound
    Inconsistent,      // total_len mismatch or overlapping range with differing bytes
};

const char* to_string(RejectReason reason);

struct InsertResult {
    enum class Kind {
        Incomplete,   // fragment stored (or duplicate ignored), message not yet whole
        Complete,     // coverage reached total_len; `message` holds the flight
        PadRecorded,  // pad request counted against requests_seen
        Rejected,
    };
    Kind kind = Kind::Incomplete;
    Bytes message;                                        // set for Complete
    RejectReason reason = RejectReason::CapacityExceeded;  // set for Rejected
};

class ReassemblyBuffer {
public:
    explicit ReassemblyBuffer(BufferConfig config = {});

    // The header must already have passed the wire decoder. Complete fires at
    // most once per entry lifetime; later duplicates report Incomplete.
    InsertResult insert(const wire::FragmentHeader& header, BytesView payload, TimePoint now);

    // Removes entries older than entry_ttl (strictly: now - created_at > ttl).
    std::size_t evict_expired(TimePoint now);

    // Request datagrams (ChFrag + PadReq) seen for this connection id.
    std::size_t requests_seen(const wire::ConnectionId& conn_id) const;

    // Drops one entry regardless of age; used by the server once a completed
    // flight has been handed to the handshake engine.
    bool drop(const wire::ConnectionId& conn_id);

    std::size_t memory_in_use() const { return memory_in_use_; }
    std::size_t entry_count() const { return entries_.size(); }
    const BufferConfig& config() const { return config_; }

private:
    struct Entry {
        std::uint32_t total_len = 0;  // 0 until the first data fragment arrives
        bool sized = false;
        bool completed = false;
        Bytes buffer;
        std::map<std::uint32_t, std::uint32_t> ranges;  // offset -> end, disjoint, merged
        std::size_t requests_seen = 0;
        TimePoint created_at{};
        TimePoint last_touched{};

        std::size_t covered() const;
        bool complete() const { return sized && covered() == total_len; }
    };

    using Map = std::unordered_map<wire::ConnectionId, Entry, wire::ConnectionIdHash>;

    Entry* admit(const wire::ConnectionId& conn_id, TimePoint now);
    bool size_entry(Entry& entry, std::uint32_t total_len);
    void remove(Map::iterator it);
    static std::size_t entry_charge(const Entry& entry);

    BufferConfig config_;
    Map entries_;
    std::size_t memory_in_use_ = 0;
};

}  // namespace turbotls::reassembly
