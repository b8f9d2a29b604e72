#include <algorithm>

#include "doctest.h"
#include "turbotls/server_engine.hpp"

using namespace turbotls;
using namespace turbotls::server;

namespace {

constexpr TimePoint at_ms(std::int64_t ms) { return TimePoint{ms * 1'000'000}; }

Engine make_engine(handshake::MockSuite suite, Config config = {}) {
    return Engine(config, [suite] { return handshake::mock_engine(suite, 4242); });
}

// Client-side request flight, built without the client engine.
struct RequestFlight {
    wire::ConnectionId conn;
    Bytes hello;
    std::vector<Bytes> datagrams;  // ch fragments then pads
    std::unique_ptr<handshake::HandshakeEngine> engine;
};

RequestFlight make_flight(handshake::MockSuite suite, std::uint64_t seed) {
    RequestFlight flight;
    Rng rng(seed);
    flight.conn = wire::ConnectionId::random(rng);
    flight.engine = handshake::mock_engine(suite, seed);
    flight.hello = flight.engine->client_first_flight();
    auto plan = fragment::plan_request_flight(flight.hello, flight.conn, 1472,
                                              flight.engine->response_size_bound(), 1);
    flight.datagrams = plan.ch_fragments;
    flight.datagrams.insert(flight.datagrams.end(), plan.pad_requests.begin(),
                            plan.pad_requests.end());
    return flight;
}

template <typename T>
std::vector<T> collect(const std::vector<Action>& actions) {
    std::vector<T> out;
    for (const auto& a : actions) {
        if (const T* v = std::get_if<T>(&a)) out.push_back(*v);
    }
    return out;
}

Bytes reassemble_response(const std::vector<SendUdpDatagram>& sends) {
    reassembly::ReassemblyBuffer buffer;
    for (const auto& s : sends) {
        auto decoded = wire::decode_fragment(s.data);
        REQUIRE(decoded.ok());
        auto r = buffer.insert(decoded.value().header, decoded.value().payload, TimePoint{});
        if (r.kind == reassembly::InsertResult::Kind::Complete) return r.message;
    }
    return {};
}

}  // namespace

TEST_CASE("four requests, three response fragments, one request unanswered") {
    auto engine = make_engine(handshake::MockSuite::pq());
    auto flight = make_flight(handshake::MockSuite::pq(), 1);
    REQUIRE(flight.datagrams.size() == 4);

    std::vector<SendUdpDatagram> sends;
    for (const auto& dg : flight.datagrams) {
        auto actions = engine.step(UdpDatagram{dg, 5}, at_ms(0));
        auto out = collect<SendUdpDatagram>(actions);
        sends.insert(sends.end(), out.begin(), out.end());
        // Credit discipline holds at every step, not just at the end.
        REQUIRE(engine.amplification_report().udp_pkts_out <=
                engine.amplification_report().udp_pkts_in);
    }
    CHECK(sends.size() == 3);
    CHECK(engine.amplification_report().udp_pkts_in == 4);
    CHECK(engine.amplification_report().udp_pkts_out == 3);
    CHECK(engine.udp_engine_invocations() == 1);
    for (const auto& s : sends) CHECK(s.peer == 5);

    // Responses reassemble to a flight the client engine accepts.
    Bytes response = reassemble_response(sends);
    REQUIRE(!response.empty());
    CHECK(flight.engine->client_finish(response).has_value());
}

TEST_CASE("lost requests withhold response fragments until credits arrive") {
    auto engine = make_engine(handshake::MockSuite::pq());
    auto flight = make_flight(handshake::MockSuite::pq(), 2);

    // Only the two ch fragments arrive; both pads are lost.
    std::vector<SendUdpDatagram> sends;
    for (std::size_t i = 0; i < 2; ++i) {
        auto out = collect<SendUdpDatagram>(engine.step(UdpDatagram{flight.datagrams[i], 1},
                                                        at_ms(0)));
        sends.insert(sends.end(), out.begin(), out.end());
    }
    CHECK(sends.size() == 2);  // three fragments exist, two credits

    // A late pad releases the third fragment, once.
    auto late = collect<SendUdpDatagram>(engine.step(UdpDatagram{flight.datagrams[2], 1},
                                                     at_ms(1)));
    CHECK(late.size() == 1);
    auto extra = collect<SendUdpDatagram>(engine.step(UdpDatagram{flight.datagrams[3], 1},
                                                      at_ms(2)));
    CHECK(extra.empty());  // all fragments sent exactly once
    CHECK(engine.amplification_report().udp_pkts_out == 3);
}

TEST_CASE("duplicate request datagrams earn credits like originals") {
    auto engine = make_engine(handshake::MockSuite::pq());
    auto flight = make_flight(handshake::MockSuite::pq(), 3);

    std::vector<SendUdpDatagram> sends;
    auto feed = [&](const Bytes& dg) {
        auto out = collect<SendUdpDatagram>(engine.step(UdpDatagram{dg, 1}, at_ms(0)));
        sends.insert(sends.end(), out.begin(), out.end());
    };
    feed(flight.datagrams[0]);
    feed(flight.datagrams[0]);  // duplicate ch fragment: one request, one credit
    feed(flight.datagrams[1]);
    CHECK(sends.size() == 3);
    CHECK(engine.amplification_report().udp_pkts_in == 3);
    CHECK(engine.amplification_report().udp_pkts_out == 3);
}

TEST_CASE("responses follow the most recent request's source address") {
    auto engine = make_engine(handshake::MockSuite::pq());
    auto flight = make_flight(handshake::MockSuite::pq(), 4);

    engine.step(UdpDatagram{flight.datagrams[0], 1}, at_ms(0));
    auto sends = collect<SendUdpDatagram>(engine.step(UdpDatagram{flight.datagrams[1], 2},
                                                      at_ms(1)));
    REQUIRE(!sends.empty());
    for (const auto& s : sends) CHECK(s.peer == 2);  // NAT rebinding tolerance
}

TEST_CASE("spoofed single fragments draw no response and no compute") {
    Config config;
    config.buffer.max_total_bytes = 128 * 1024;
    config.buffer.max_entries = 64;
    auto engine = make_engine(handshake::MockSuite::ec(), config);

    Rng rng(5);
    for (int i = 0; i < 10000; ++i) {
        wire::FragmentHeader h;
        h.type = wire::FragType::ChFrag;
        h.conn_id = wire::ConnectionId::random(rng);
        h.total_len = 1000;
        h.offset = 0;
        Bytes dg = wire::encode_fragment(h, rng.bytes(100));  // never completes
        auto actions =
            engine.step(UdpDatagram{dg, static_cast<PeerId>(i)}, at_ms(i / 1000));
        CHECK(collect<SendUdpDatagram>(actions).empty());
        REQUIRE(engine.memory_in_use() <= config.buffer.max_total_bytes);
    }
    CHECK(engine.udp_engine_invocations() == 0);
    CHECK(engine.amplification_report().udp_pkts_out == 0);
}

TEST_CASE("turbo attach completes the handshake over tcp") {
    auto engine = make_engine(handshake::MockSuite::pq());
    auto flight = make_flight(handshake::MockSuite::pq(), 6);

    std::vector<SendUdpDatagram> sends;
    for (const auto& dg : flight.datagrams) {
        auto out = collect<SendUdpDatagram>(engine.step(UdpDatagram{dg, 1}, at_ms(0)));
        sends.insert(sends.end(), out.begin(), out.end());
    }
    Bytes response = reassemble_response(sends);
    auto finish = flight.engine->client_finish(response);
    REQUIRE(finish.has_value());

    engine.step(TcpAccepted{40}, at_ms(1));
    Bytes stream_bytes = wire::encode_tcp_preface(flight.conn);
    stream_bytes.insert(stream_bytes.end(), finish->begin(), finish->end());
    Bytes app = to_bytes("hello app");
    stream_bytes.insert(stream_bytes.end(), app.begin(), app.end());

    auto actions = engine.step(TcpBytes{40, stream_bytes}, at_ms(2));
    auto delivered = collect<DeliverEvent>(actions);
    REQUIRE(delivered.size() == 2);
    const auto* established = std::get_if<SessionEstablished>(&delivered[0].observable);
    REQUIRE(established != nullptr);
    CHECK(established->path == SessionPath::Turbo);
    CHECK(established->conn_id == flight.conn);
    const auto* app_data = std::get_if<AppData>(&delivered[1].observable);
    REQUIRE(app_data != nullptr);
    CHECK(app_data->data == app);
    CHECK(engine.pending_records() == 0);  // record ownership moved to the stream
}

TEST_CASE("preface may arrive one byte at a time") {
    auto engine = make_engine(handshake::MockSuite::pq());
    auto flight = make_flight(handshake::MockSuite::pq(), 7);
    std::vector<SendUdpDatagram> sends;
    for (const auto& dg : flight.datagrams) {
        auto out = collect<SendUdpDatagram>(engine.step(UdpDatagram{dg, 1}, at_ms(0)));
        sends.insert(sends.end(), out.begin(), out.end());
    }
    auto finish = flight.engine->client_finish(reassemble_response(sends));
    REQUIRE(finish.has_value());

    engine.step(TcpAccepted{41}, at_ms(1));
    Bytes stream_bytes = wire::encode_tcp_preface(flight.conn);
    stream_bytes.insert(stream_bytes.end(), finish->begin(), finish->end());

    std::vector<DeliverEvent> delivered;
    for (std::size_t i = 0; i < stream_bytes.size(); ++i) {
        auto actions = engine.step(TcpBytes{41, Bytes{stream_bytes[i]}}, at_ms(2));
        auto d = collect<DeliverEvent>(actions);
        delivered.insert(delivered.end(), d.begin(), d.end());
    }
    REQUIRE(delivered.size() == 1);
    CHECK(std::get_if<SessionEstablished>(&delivered[0].observable) != nullptr);
}

TEST_CASE("vanilla tls stream completes unchanged") {
    auto engine = make_engine(handshake::MockSuite::ec());
    auto client = handshake::mock_engine(handshake::MockSuite::ec(), 8);

    engine.step(TcpAccepted{50}, at_ms(0));
    Bytes hello = client->client_first_flight();
    CHECK(hello[0] != 0x54);
    auto actions = engine.step(TcpBytes{50, hello}, at_ms(1));
    auto sends = collect<SendTcpBytes>(actions);
    REQUIRE(sends.size() == 1);

    auto finish = client->client_finish(sends[0].data);
    REQUIRE(finish.has_value());
    auto done = engine.step(TcpBytes{50, *finish}, at_ms(2));
    auto delivered = collect<DeliverEvent>(done);
    REQUIRE(delivered.size() == 1);
    const auto* established = std::get_if<SessionEstablished>(&delivered[0].observable);
    REQUIRE(established != nullptr);
    CHECK(established->path == SessionPath::Vanilla);
    CHECK(engine.udp_engine_invocations() == 0);  // tcp path, not the udp counter
}

TEST_CASE("preface without udp state closes the stream") {
    auto engine = make_engine(handshake::MockSuite::ec());
    engine.step(TcpAccepted{60}, at_ms(0));
    Rng rng(9);
    Bytes preface = wire::encode_tcp_preface(wire::ConnectionId::random(rng));
    auto actions = engine.step(TcpBytes{60, preface}, at_ms(1));
    CHECK(collect<CloseTcp>(actions).size() == 1);
    CHECK(engine.open_streams() == 0);
}

TEST_CASE("malformed preface closes the stream") {
    auto engine = make_engine(handshake::MockSuite::ec());
    engine.step(TcpAccepted{61}, at_ms(0));
    Bytes garbage = to_bytes("TTLSXXXXXXXXXXXXXXXXXXXX");
    garbage[4] = 0x09;  // magic matches, unknown version
    auto actions = engine.step(TcpBytes{61, garbage}, at_ms(1));
    CHECK(collect<CloseTcp>(actions).size() == 1);
}

TEST_CASE("corrupted finish flight is rejected and the stream closed") {
    auto engine = make_engine(handshake::MockSuite::pq());
    auto flight = make_flight(handshake::MockSuite::pq(), 10);
    std::vector<SendUdpDatagram> sends;
    for (const auto& dg : flight.datagrams) {
        auto out = collect<SendUdpDatagram>(engine.step(UdpDatagram{dg, 1}, at_ms(0)));
        sends.insert(sends.end(), out.begin(), out.end());
    }
    auto finish = flight.engine->client_finish(reassemble_response(sends));
    REQUIRE(finish.has_value());
    (*finish)[finish->size() - 1] ^= 0x01;

    engine.step(TcpAccepted{70}, at_ms(1));
    Bytes stream_bytes = wire::encode_tcp_preface(flight.conn);
    stream_bytes.insert(stream_bytes.end(), finish->begin(), finish->end());
    auto actions = engine.step(TcpBytes{70, stream_bytes}, at_ms(2));
    CHECK(collect<CloseTcp>(actions).size() == 1);
}

TEST_CASE("tick evicts stale buffer entries and response records") {
    Config config;
    config.record_ttl = std::chrono::seconds(2);
    auto engine = make_engine(handshake::MockSuite::pq(), config);

    // A partial hello occupies the buffer.
    auto partial = make_flight(handshake::MockSuite::pq(), 11);
    engine.step(UdpDatagram{partial.datagrams[0], 1}, at_ms(0));
    CHECK(engine.memory_in_use() > 0);

    // A completed hello leaves a response record behind.
    auto complete = make_flight(handshake::MockSuite::pq(), 12);
    for (const auto& dg : complete.datagrams) engine.step(UdpDatagram{dg, 2}, at_ms(0));
    CHECK(engine.pending_records() == 1);

    engine.step(Tick{}, at_ms(1999));
    CHECK(engine.memory_in_use() > 0);
    CHECK(engine.pending_records() == 1);

    engine.step(Tick{}, at_ms(2001));
    CHECK(engine.memory_in_use() == 0);
    CHECK(engine.pending_records() == 0);
}

TEST_CASE("server never reflects response-type datagrams") {
    auto engine = make_engine(handshake::MockSuite::ec());
    Rng rng(13);
    wire::FragmentHeader h;
    h.type = wire::FragType::RespFrag;
    h.conn_id = wire::ConnectionId::random(rng);
    h.total_len = 10;
    h.offset = 0;
    Bytes dg = wire::encode_fragment(h, rng.bytes(10));
    auto actions = engine.step(UdpDatagram{dg, 1}, at_ms(0));
    CHECK(collect<SendUdpDatagram>(actions).empty());
    CHECK(engine.amplification_report().udp_pkts_out == 0);
}
