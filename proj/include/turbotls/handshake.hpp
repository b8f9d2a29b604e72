// Opaque handshake-engine interface plus a deterministic mock that emulates
// two cryptographic suites purely by flight size. The delivery layer never
// looks inside flights, so a length/checksum mock is enough to validate it.
#pragma once

#include <functional>
#include <memory>
#include <string_view>

#include "turbotls/bytes.hpp"

namespace turbotls::handshake {

enum class SuiteKind { EC, PQ };

struct MockSuite {
    SuiteKind kind = SuiteKind::EC;
    std::size_t ch_len = 300;        // client first flight, total bytes
    std::size_t response_len = 1100; // server response flight
    std::size_t finish_len = 80;     // client finish flight

    // Single-datagram flights at the default 1472-byte budget, standing in
    // for a nistp256 suite.
    static MockSuite ec() { return MockSuite{SuiteKind::EC, 300, 1100, 80}; }
    // Flight volumes approximating a Kyber-512/Dilithium2 handshake: two CH
    // fragments and three response fragments at the default budget.
    static MockSuite pq() { return MockSuite{SuiteKind::PQ, 1900, 4200, 80}; }
    static std::optional<MockSuite> named(std::string_view name);

    const char* name() const { return kind == SuiteKind::EC ? "ec" : "pq"; }
};

enum class VerifyResult { Accept, Reject };

// One instance per session. The producer/consumer calls mirror the flight
// order: client_first_flight -> server_response -> client_finish ->
// server_verify_finish.
class HandshakeEngine {
public:
    virtual ~HandshakeEngine() = default;

    virtual Bytes client_first_flight() = 0;
    // nullopt on corrupt or transcript-mismatched input.
    virtual std::optional<Bytes> server_response(BytesView client_flight) = 0;
    virtual std::optional<Bytes> client_finish(BytesView server_response) = 0;
    virtual VerifyResult server_verify_finish(BytesView finish_flight) = 0;
    // Upper bound on server_response length, used to plan the request flight.
    virtual std::size_t response_size_bound() const = 0;
};

using EngineFactory = std::function<std::unique_ptr<HandshakeEngine>()>;

// Flights are body_len(4 BE) | checksum(4 BE, fnv1a32 of body) | body, where
// the total length equals the suite's configured flight size. Responses and
// finishes embed an 8-byte transcript digest so mismatches are detected.
std::unique_ptr<HandshakeEngine> mock_engine(const MockSuite& suite, std::uint64_t seed);

inline constexpr std::size_t kFlightFramingBytes = 8;
inline constexpr std::size_t kMinFlightLen = kFlightFramingBytes + 1;

// Total flight length once at least 4 bytes of a stream are available.
std::optional<std::size_t> flight_length(BytesView stream_prefix);

// Frame + checksum validation; returns the body view on success.
std::optional<BytesView> flight_body(BytesView flight);

}  // namespace turbotls::handshake
