#include "turbotls/handshake.hpp"

#include <stdexcept>

namespace turbotls::handshake {

namespace {

constexpr std::size_t kDigestBytes = 8;

Bytes frame_flight(BytesView body) {
    Bytes out;
    out.reserve(kFlightFramingBytes + body.size());
    put_u32be(out, static_cast<std::uint32_t>(body.size()));
    put_u32be(out, fnv1a32(body));
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

void append_digest(Bytes& body, std::uint64_t digest) {
    for (int shift = 56; shift >= 0; shift -= 8) {
        body.push_back(static_cast<std::uint8_t>(digest >> shift));
    }
}

std::uint64_t read_digest(BytesView body) {
    std::uint64_t d = 0;
    for (std::size_t i = 0; i < kDigestBytes; ++i) d = d << 8 | body[i];
    return d;
}

Bytes filler(std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    return rng.bytes(n);
}

class MockEngine final : public HandshakeEngine {
public:
    MockEngine(const MockSuite& suite, std::uint64_t seed) : suite_(suite), seed_(seed) {
        if (suite.ch_len < kMinFlightLen || suite.response_len < kFlightFramingBytes + kDigestBytes ||
            suite.finish_len < kFlightFramingBytes + kDigestBytes) {
            throw std::invalid_argument("mock suite flight lengths too small");
        }
    }

    Bytes client_first_flight() override {
        if (client_hello_.empty()) {
            client_hello_ = frame_flight(filler(seed_ ^ 0x6368ULL, suite_.ch_len - kFlightFramingBytes));
        }
        return client_hello_;
    }

    std::optional<Bytes> server_response(BytesView client_flight) override {
        auto body = flight_body(client_flight);
        if (!body) return std::nullopt;
        // Everything below derives from the received flight, so the response
        // is deterministic regardless of the server engine's own seed.
        const std::uint64_t transcript = fnv1a64(client_flight);
        Bytes resp_body;
        resp_body.reserve(suite_.response_len - kFlightFramingBytes);
        append_digest(resp_body, transcript);
        Bytes fill = filler(transcript, suite_.response_len - kFlightFramingBytes - kDigestBytes);
        resp_body.insert(resp_body.end(), fill.begin(), fill.end());
        sent_response_ = frame_flight(resp_body);
        return sent_response_;
    }

    std::optional<Bytes> client_finish(BytesView server_response) override {
        auto body = flight_body(server_response);
        if (!body) return std::nullopt;
        if (body->size() < kDigestBytes) return std::nullopt;
        if (client_hello_.empty()) return std::nullopt;  // no transcript to check against
        if (read_digest(*body) != fnv1a64(client_hello_)) return std::nullopt;
        const std::uint64_t transcript = fnv1a64(server_response);
        Bytes fin_body;
        fin_body.reserve(suite_.finish_len - kFlightFramingBytes);
        append_digest(fin_body, transcript);
        Bytes fill = filler(transcript ^ 0x66696eULL,
                            suite_.finish_len - kFlightFramingBytes - kDigestBytes);
        fin_body.insert(fin_body.end(), fill.begin(), fill.end());
        return frame_flight(fin_body);
    }

    VerifyResult server_verify_finish(BytesView finish_flight) override {
        auto body = flight_body(finish_flight);
        if (!body || body->size() < kDigestBytes) return VerifyResult::Reject;
        if (sent_response_.empty()) return VerifyResult::Reject;
        return read_digest(*body) == fnv1a64(sent_response_) ? VerifyResult::Accept
                                                             : VerifyResult::Reject;
    }

    std::size_t response_size_bound() const override { return suite_.response_len; }

private:
    MockSuite suite_;
    std::uint64_t seed_;
    Bytes client_hello_;
    Bytes sent_response_;
};

}  // namespace

std::optional<MockSuite> MockSuite::named(std::string_view name) {
    if (name == "ec") return ec();
    if (name == "pq") return pq();
    return std::nullopt;
}

std::unique_ptr<HandshakeEngine> mock_engine(const MockSuite& suite, std::uint64_t seed) {
    return std::make_unique<MockEngine>(suite, seed);
}

std::optional<std::size_t> flight_length(BytesView stream_prefix) {
    if (stream_prefix.size() < 4) return std::nullopt;
    return kFlightFramingBytes + get_u32be(stream_prefix.data());
}

std::optional<BytesView> flight_body(BytesView flight) {
    if (flight.size() < kFlightFramingBytes) return std::nullopt;
    const std::uint32_t body_len = get_u32be(flight.data());
    if (flight.size() != kFlightFramingBytes + body_len) return std::nullopt;
    BytesView body = flight.subspan(kFlightFramingBytes);
    if (fnv1a32(body) != get_u32be(flight.data() + 4)) return std::nullopt;
    return body;
}

}  // namespace turbotls::handshake
