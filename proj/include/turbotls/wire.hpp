// UDP fragment datagram and TCP preface codecs.
//
// Datagram layout (big-endian integers):
//   version(1) | type(1) | conn_id(12) | total_len(4) | offset(4) | payload
// Preface layout:
//   "TTLS"(4) | version(1) | conn_id(12)
//
// Golden vectors live in docs/wire.md and are pinned by tests.
#pragma once

#include <array>
#include <compare>
#include <stdexcept>

#include "turbotls/bytes.hpp"

namespace turbotls::wire {

inline constexpr std::size_t kConnectionIdSize = 12;
inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kFragmentHeaderSize = 22;
inline constexpr std::size_t kPrefaceSize = 17;
// "TTLS". A vanilla TLS stream starts with a record type byte (0x16 for
// handshake), never 0x54, so the first byte alone routes the stream.
inline constexpr std::array<std::uint8_t, 4> kPrefaceMagic = {0x54, 0x54, 0x4c, 0x53};

struct ConnectionId {
    std::array<std::uint8_t, kConnectionIdSize> bytes{};

    static ConnectionId random(Rng& rng);
    static std::optional<ConnectionId> from_bytes(BytesView raw);

    std::string hex() const { return hex_encode(bytes); }
    auto operator<=>(const ConnectionId&) const = default;
};

struct ConnectionIdHash {
    std::size_t operator()(const ConnectionId& id) const {
        return static_cast<std::size_t>(fnv1a64(id.bytes));
    }
};

enum class FragType : std::uint8_t {
    ChFrag = 1,    // fragment of the client's first flight
    PadReq = 2,    // nearly-empty request reserving one response datagram
    RespFrag = 3,  // fragment of the server's response flight
};

const char* to_string(FragType type);

struct FragmentHeader {
    std::uint8_t version = kWireVersion;
    FragType type = FragType::ChFrag;
    ConnectionId conn_id;
    std::uint32_t total_len = 0;  // length of the whole unfragmented message
    std::uint32_t offset = 0;     // payload position; pad index for PadReq

    bool operator==(const FragmentHeader&) const = default;
};

enum class WireError {
    TooShort,
    UnknownVersion,
    UnknownType,
    BoundsViolation,
    MalformedPreface,
};

const char* to_string(WireError err);

struct InvalidHeader : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Throws InvalidHeader when the header invariants do not hold for the payload.
Bytes encode_fragment(const FragmentHeader& header, BytesView payload);

struct DecodedFragment {
    FragmentHeader header;
    Bytes payload;
};

// Total on arbitrary input: every byte string maps to a value or a WireError.
Result<DecodedFragment, WireError> decode_fragment(BytesView datagram);

Bytes encode_tcp_preface(const ConnectionId& conn_id);

struct TurboAttach {
    ConnectionId conn_id;
    std::size_t consumed = kPrefaceSize;
};
struct VanillaTls {};  // first byte is not 0x54; nothing consumed

using PrefaceDecision = std::variant<TurboAttach, VanillaTls, WireError>;

// Expects at least one byte of the stream prefix. Returns VanillaTls without
// consuming anything when the first byte rules the preface out; MalformedPreface
// when the magic matches but the prefix is short or the version is unknown.
PrefaceDecision decode_tcp_preface(BytesView stream_prefix);

}  // namespace turbotls::wire
