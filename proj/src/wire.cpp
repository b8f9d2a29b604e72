#include "turbotls/wire.hpp"

#include <algorithm>
#include <cstring>

namespace turbotls::wire {

static_assert(kFragmentHeaderSize == 1 + 1 + kConnectionIdSize + 4 + 4);
static_assert(kPrefaceSize == kPrefaceMagic.size() + 1 + kConnectionIdSize);

ConnectionId ConnectionId::random(Rng& rng) {
    ConnectionId id;
    for (auto& b : id.bytes) b = static_cast<std::uint8_t>(rng.next());
    return id;
}

std::optional<ConnectionId> ConnectionId::from_bytes(BytesView raw) {
    if (raw.size() != kConnectionIdSize) return std::nullopt;
    ConnectionId id;
    std::copy(raw.begin(), raw.end(), id.bytes.begin());
    return id;
}

const char* to_string(FragType type) {
    switch (type) {
        case FragType::ChFrag: return "ch_frag";
        case FragType::PadReq: return "pad_req";
        case FragType::RespFrag: return "resp_frag";
    }
    return "?";
}

const char* to_string(WireError err) {
    switch (err) {
        case WireError::TooShort: return "too_short";
        case WireError::UnknownVersion: return "unknown_version";
        case WireError::UnknownType: return "unknown_type";
        case WireError::BoundsViolation: return "bounds_violation";
        case WireError::MalformedPreface: return "malformed_preface";
    }
    return "?";
}

static bool known_type(std::uint8_t t) {
    return t >= 1 && t <= 3;
}

static bool header_valid(const FragmentHeader& h, std::size_t payload_len) {
    if (h.version != kWireVersion) return false;
    if (!known_type(static_cast<std::uint8_t>(h.type))) return false;
    if (h.type == FragType::PadReq) {
        // Pads are nearly empty: no payload, total_len pinned to zero. The
        // offset field carries the pad's ordinal index.
        return h.total_len == 0 && payload_len == 0;
    }
    if (payload_len > 0xffffffffu) return false;
    return h.offset < h.total_len &&
           static_cast<std::uint64_t>(h.offset) + payload_len <= h.total_len;
}

Bytes encode_fragment(const FragmentHeader& header, BytesView payload) {
    if (!header_valid(header, payload.size())) {
        throw InvalidHeader("fragment header invariants violated");
    }
    Bytes out;
    out.reserve(kFragmentHeaderSize + payload.size());
    out.push_back(header.version);
    out.push_back(static_cast<std::uint8_t>(header.type));
    out.insert(out.end(), header.conn_id.bytes.begin(), header.conn_id.bytes.end());
    put_u32be(out, header.total_len);
    put_u32be(out, header.offset);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Result<DecodedFragment, WireError> decode_fragment(BytesView datagram) {
    if (datagram.size() < kFragmentHeaderSize) return WireError::TooShort;
    FragmentHeader h;
    h.version = datagram[0];
    if (h.version != kWireVersion) return WireError::UnknownVersion;
    if (!known_type(datagram[1])) return WireError::UnknownType;
    h.type = static_cast<FragType>(datagram[1]);
    std::copy_n(datagram.begin() + 2, kConnectionIdSize, h.conn_id.bytes.begin());
    h.total_len = get_u32be(datagram.data() + 14);
    h.offset = get_u32be(datagram.data() + 18);
    const std::size_t payload_len = datagram.size() - kFragmentHeaderSize;
    if (!header_valid(h, payload_len)) return WireError::BoundsViolation;
    DecodedFragment out;
    out.header = h;
    out.payload.assign(datagram.begin() + kFragmentHeaderSize, datagram.end());
    return out;
}

Bytes encode_tcp_preface(const ConnectionId& conn_id) {
    Bytes out;
    out.reserve(kPrefaceSize);
    out.insert(out.end(), kPrefaceMagic.begin(), kPrefaceMagic.end());
    out.push_back(kWireVersion);
    out.insert(out.end(), conn_id.bytes.begin(), conn_id.bytes.end());
    return out;
}

PrefaceDecision decode_tcp_preface(BytesView stream_prefix) {
    if (stream_prefix.empty()) return WireError::MalformedPreface;
    if (stream_prefix[0] != kPrefaceMagic[0]) return VanillaTls{};
    if (stream_prefix.size() < kPrefaceSize) return WireError::MalformedPreface;
    if (!std::equal(kPrefaceMagic.begin(), kPrefaceMagic.end(), stream_prefix.begin())) {
        return WireError::MalformedPreface;
    }
    if (stream_prefix[4] != kWireVersion) return WireError::MalformedPreface;
    TurboAttach attach;
    std::copy_n(stream_prefix.begin() + 5, kConnectionIdSize, attach.conn_id.bytes.begin());
    return attach;
}

}  // namespace turbotls::wire
