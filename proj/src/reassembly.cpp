#include "turbotls/reassembly.hpp"

#include <cstring>

namespace turbotls::reassembly {

const char* to_string(RejectReason reason) {
    switch (reason) {
        case RejectReason::CapacityExceeded: return "capacity_exceeded";
        case RejectReason::Inconsistent: return "inconsistent";
    }
    return "?";
}

ReassemblyBuffer::ReassemblyBuffer(BufferConfig config) : config_(config) {}

std::size_t ReassemblyBuffer::Entry::covered() const {
    std::size_t n = 0;
    for (const auto& [off, end] : ranges) n += end - off;
    return n;
}

std::size_t ReassemblyBuffer::entry_charge(const Entry& entry) {
    return kEntryOverheadBytes + (entry.sized ? entry.total_len : 0);
}

ReassemblyBuffer::Entry* ReassemblyBuffer::admit(const wire::ConnectionId& conn_id,
                                                 TimePoint now) {
    auto it = entries_.find(conn_id);
    if (it != entries_.end()) {
        it->second.last_touched = now;
        return &it->second;
    }
    if (entries_.size() >= config_.max_entries) return nullptr;
    if (memory_in_use_ + kEntryOverheadBytes > config_.max_total_bytes) return nullptr;
    Entry entry;
    entry.created_at = now;
    entry.last_touched = now;
    memory_in_use_ += kEntryOverheadBytes;
    return &entries_.emplace(conn_id, std::move(entry)).first->second;
}

bool ReassemblyBuffer::size_entry(Entry& entry, std::uint32_t total_len) {
    if (total_len > config_.max_entry_bytes) return false;
    if (memory_in_use_ + total_len > config_.max_total_bytes) return false;
    entry.total_len = total_len;
    entry.sized = true;
    entry.buffer.assign(total_len, 0);
    memory_in_use_ += total_len;
    return true;
}

InsertResult ReassemblyBuffer::insert(const wire::FragmentHeader& header, BytesView payload,
                                      TimePoint now) {
    InsertResult result;
    Entry* entry = admit(header.conn_id, now);
    if (entry == nullptr) {
        result.kind = InsertResult::Kind::Rejected;
        result.reason = RejectReason::CapacityExceeded;
        return result;
    }

    if (header.type == wire::FragType::PadReq) {
        entry->requests_seen += 1;
        result.kind = InsertResult::Kind::PadRecorded;
        return result;
    }

    if (entry->sized && entry->total_len != header.total_len) {
        result.kind = InsertResult::Kind::Rejected;
        result.reason = RejectReason::Inconsistent;
        return result;
    }
    if (!entry->sized && !size_entry(*entry, header.total_len)) {
        result.kind = InsertResult::Kind::Rejected;
        result.reason = RejectReason::CapacityExceeded;
        return result;
    }

    const std::uint32_t begin = header.offset;
    const std::uint32_t end = begin + static_cast<std::uint32_t>(payload.size());

    // Overlaps must agree byte-for-byte with what is already stored.
    auto it = entry->ranges.upper_bound(begin);
    if (it != entry->ranges.begin()) --it;
    for (; it != entry->ranges.end() && it->first < end; ++it) {
        const std::uint32_t lo = std::max(begin, it->first);
        const std::uint32_t hi = std::min(end, it->second);
        if (lo >= hi) continue;
        if (std::memcmp(entry->buffer.data() + lo, payload.data() + (lo - begin), hi - lo) != 0) {
            result.kind = InsertResult::Kind::Rejected;
            result.reason = RejectReason::Inconsistent;
            return result;
        }
    }

    if (header.type == wire::FragType::ChFrag) entry->requests_seen += 1;

    // A zero-length data fragment is legal on the wire but carries nothing.
    if (payload.empty()) {
        result.kind = InsertResult::Kind::Incomplete;
        return result;
    }

    std::memcpy(entry->buffer.data() + begin, payload.data(), payload.size());

    // Merge [begin, end) into the disjoint range map.
    std::uint32_t merged_begin = begin;
    std::uint32_t merged_end = end;
    auto mit = entry->ranges.upper_bound(merged_begin);
    if (mit != entry->ranges.begin()) {
        auto prev = std::prev(mit);
        if (prev->second >= merged_begin) mit = prev;
    }
    while (mit != entry->ranges.end() && mit->first <= merged_end) {
        merged_begin = std::min(merged_begin, mit->first);
        merged_end = std::max(merged_end, mit->second);
        mit = entry->ranges.erase(mit);
    }
    entry->ranges.emplace(merged_begin, merged_end);

    if (!entry->completed && entry->complete()) {
        entry->completed = true;
        result.kind = InsertResult::Kind::Complete;
        result.message = entry->buffer;
        return result;
    }
    result.kind = InsertResult::Kind::Incomplete;
    return result;
}

std::size_t ReassemblyBuffer::evict_expired(TimePoint now) {
    std::size_t evicted = 0;
    for (auto it = entries_.begin(); it != entries_.end();) {
        if (now - it->second.created_at > config_.entry_ttl) {
            auto victim = it++;
            remove(victim);
            ++evicted;
        } else {
            ++it;
        }
    }
    return evicted;
}

std::size_t ReassemblyBuffer::requests_seen(const wire::ConnectionId& conn_id) const {
    auto it = entries_.find(conn_id);
    return it == entries_.end() ? 0 : it->second.requests_seen;
}

bool ReassemblyBuffer::drop(const wire::ConnectionId& conn_id) {
    auto it = entries_.find(conn_id);
    if (it == entries_.end()) return false;
    remove(it);
    return true;
}

void ReassemblyBuffer::remove(Map::iterator it) {
    memory_in_use_ -= entry_charge(it->second);
    entries_.erase(it);
}

}  // namespace turbotls::reassembly
