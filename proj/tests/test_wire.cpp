#include <algorithm>

#include "doctest.h"
#include "turbotls/wire.hpp"

using namespace turbotls;
using namespace turbotls::wire;

namespace {

ConnectionId conn_of(std::uint8_t fill) {
    ConnectionId id;
    id.bytes.fill(fill);
    return id;
}

}  // namespace

TEST_CASE("fragment golden vector: ch fragment carrying hello") {
    FragmentHeader h;
    h.type = FragType::ChFrag;
    h.conn_id = conn_of(0x00);
    h.total_len = 5;
    h.offset = 0;
    Bytes payload = to_bytes("hello");
    Bytes datagram = encode_fragment(h, payload);

    CHECK(datagram.size() == 27);
    CHECK(datagram[0] == 0x01);
    CHECK(datagram[1] == 0x01);
    // Pinned in docs/wire.md.
    CHECK(hex_encode(datagram) ==
          "0101000000000000000000000000000000050000000068656c6c6f");
}

TEST_CASE("fragment golden vector: pad request is header-only") {
    FragmentHeader h;
    h.type = FragType::PadReq;
    h.conn_id = conn_of(0x0a);
    h.total_len = 0;
    h.offset = 1;
    Bytes datagram = encode_fragment(h, {});
    CHECK(datagram.size() == 22);
    CHECK(hex_encode(datagram) == "01020a0a0a0a0a0a0a0a0a0a0a0a0000000000000001");
}

TEST_CASE("preface golden vector and magic routing") {
    Bytes preface = encode_tcp_preface(conn_of(0x00));
    CHECK(preface.size() == 17);
    CHECK(hex_encode(preface) == "54544c5301000000000000000000000000");

    SUBCASE("tls record first byte routes to vanilla") {
        Bytes tls = {0x16, 0x03, 0x01, 0x00, 0x2a};
        auto decision = decode_tcp_preface(tls);
        CHECK(std::holds_alternative<VanillaTls>(decision));
    }
    SUBCASE("round trip attaches with the same id") {
        Bytes stream = encode_tcp_preface(conn_of(0x7f));
        stream.push_back(0xee);  // trailing data beyond the preface
        auto decision = decode_tcp_preface(stream);
        REQUIRE(std::holds_alternative<TurboAttach>(decision));
        const auto& attach = std::get<TurboAttach>(decision);
        CHECK(attach.conn_id == conn_of(0x7f));
        CHECK(attach.consumed == 17);
    }
    SUBCASE("magic with unknown version is malformed") {
        Bytes bad = encode_tcp_preface(conn_of(0x01));
        bad[4] = 9;
        auto decision = decode_tcp_preface(bad);
        REQUIRE(std::holds_alternative<WireError>(decision));
        CHECK(std::get<WireError>(decision) == WireError::MalformedPreface);
    }
    SUBCASE("magic first byte but short prefix is malformed") {
        Bytes short_prefix = {0x54, 0x54, 0x4c};
        auto decision = decode_tcp_preface(short_prefix);
        REQUIRE(std::holds_alternative<WireError>(decision));
        CHECK(std::get<WireError>(decision) == WireError::MalformedPreface);
    }
}

TEST_CASE("decode rejects malformed datagrams") {
    SUBCASE("21 bytes is too short") {
        Bytes short_dg(21, 0);
        auto r = decode_fragment(short_dg);
        REQUIRE(!r.ok());
        CHECK(r.error() == WireError::TooShort);
    }
    SUBCASE("unknown version") {
        FragmentHeader h;
        h.conn_id = conn_of(1);
        h.total_len = 1;
        Bytes dg = encode_fragment(h, Bytes{0x41});
        dg[0] = 2;
        auto r = decode_fragment(dg);
        REQUIRE(!r.ok());
        CHECK(r.error() == WireError::UnknownVersion);
    }
    SUBCASE("unknown type") {
        FragmentHeader h;
        h.conn_id = conn_of(1);
        h.total_len = 1;
        Bytes dg = encode_fragment(h, Bytes{0x41});
        dg[1] = 7;
        auto r = decode_fragment(dg);
        REQUIRE(!r.ok());
        CHECK(r.error() == WireError::UnknownType);
    }
    SUBCASE("offset plus payload beyond total_len") {
        FragmentHeader h;
        h.conn_id = conn_of(1);
        h.total_len = 10;
        h.offset = 8;
        Bytes dg = encode_fragment(h, Bytes{1, 2});  // valid: 8+2 <= 10
        // Grow the payload so 8+5 > 10 without re-encoding.
        dg.insert(dg.end(), {3, 4, 5});
        auto r = decode_fragment(dg);
        REQUIRE(!r.ok());
        CHECK(r.error() == WireError::BoundsViolation);
    }
}

TEST_CASE("encode validates header invariants") {
    FragmentHeader h;
    h.conn_id = conn_of(2);
    h.total_len = 4;
    h.offset = 4;  // offset must be < total_len
    CHECK_THROWS_AS(encode_fragment(h, Bytes{1}), InvalidHeader);

    FragmentHeader pad;
    pad.type = FragType::PadReq;
    pad.conn_id = conn_of(2);
    pad.total_len = 3;  // pads must carry total_len 0
    CHECK_THROWS_AS(encode_fragment(pad, {}), InvalidHeader);
    pad.total_len = 0;
    CHECK_THROWS_AS(encode_fragment(pad, Bytes{0x00}), InvalidHeader);  // pads carry no payload
}

TEST_CASE("codec round trip over random headers and payloads") {
    Rng rng(0x77112233);
    for (int i = 0; i < 1000; ++i) {
        FragmentHeader h;
        h.type = (rng.next() & 1) ? FragType::ChFrag : FragType::RespFrag;
        h.conn_id = ConnectionId::random(rng);
        const std::uint32_t payload_len = 1 + static_cast<std::uint32_t>(rng.below(1450));
        const std::uint32_t slack = static_cast<std::uint32_t>(rng.below(4096));
        h.offset = static_cast<std::uint32_t>(rng.below(1 << 20));
        h.total_len = h.offset + payload_len + slack;
        Bytes payload = rng.bytes(payload_len);

        Bytes dg = encode_fragment(h, payload);
        auto r = decode_fragment(dg);
        REQUIRE(r.ok());
        CHECK(r.value().header == h);
        CHECK(r.value().payload == payload);
    }
}

TEST_CASE("decoder is total under random input") {
    Rng rng(0xfeedbeef);
    int decoded = 0;
    for (int i = 0; i < 100000; ++i) {
        const std::size_t len = rng.below(64);
        Bytes dg = rng.bytes(len);
        auto r = decode_fragment(dg);
        if (r.ok()) ++decoded;
        if (!dg.empty()) {
            auto p = decode_tcp_preface(dg);
            (void)p;
        }
    }
    // Random 64-byte strings essentially never form a valid header.
    CHECK(decoded <= 2);
}

TEST_CASE("connection ids from one generator do not collide at desk scale") {
    Rng rng(42);
    std::vector<ConnectionId> ids;
    ids.reserve(10000);
    for (int i = 0; i < 10000; ++i) ids.push_back(ConnectionId::random(rng));
    std::sort(ids.begin(), ids.end());
    CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
}

TEST_CASE("connection id from_bytes enforces length") {
    CHECK(!ConnectionId::from_bytes(Bytes(11, 0)).has_value());
    CHECK(!ConnectionId::from_bytes(Bytes(13, 0)).has_value());
    auto id = ConnectionId::from_bytes(Bytes(12, 0xab));
    REQUIRE(id.has_value());
    CHECK(id->hex() == "abababababababababababab");
}
