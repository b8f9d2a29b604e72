// Server-side engine: reassembles ClientHello flights from UDP, answers with
// response fragments under the one-response-per-request credit discipline,
// attaches TCP streams by preface, and serves vanilla TLS streams unchanged.
// Sans-I/O like the client; hostile datagrams are dropped and counted.
#pragma once

#include <functional>
#include <string>
#include <unordered_map>

#include "turbotls/fragment.hpp"
#include "turbotls/handshake.hpp"
#include "turbotls/reassembly.hpp"

namespace turbotls::server {

using PeerId = std::uint64_t;
using StreamId = std::uint64_t;

enum class SessionPath { Turbo, Vanilla };

struct Config {
    reassembly::BufferConfig buffer;
    std::size_t datagram_budget = fragment::kDefaultDatagramBudget;
    // Virtual cost of computing the response flight; stamped on actions as
    // `not_before` so the simulator can model server compute.
    Duration compute_delay{0};
    // Completed-response records expire like buffer entries.
    Duration record_ttl = std::chrono::seconds(2);
};

struct UdpDatagram { Bytes data; PeerId peer = 0; };
struct TcpAccepted { StreamId stream = 0; };
struct TcpBytes { StreamId stream = 0; Bytes data; };
struct Tick {};
using Event = std::variant<UdpDatagram, TcpAccepted, TcpBytes, Tick>;

struct SendUdpDatagram {
    PeerId peer = 0;
    Bytes data;
    TimePoint not_before{};  // earliest departure (response compute)
};
struct SendTcpBytes {
    StreamId stream = 0;
    Bytes data;
    TimePoint not_before{};
};
struct CloseTcp { StreamId stream = 0; };
struct SessionEstablished {
    StreamId stream = 0;
    SessionPath path = SessionPath::Turbo;
    wire::ConnectionId conn_id;  // zero for vanilla sessions
};
struct AppData { StreamId stream = 0; Bytes data; };
using Observable = std::variant<SessionEstablished, AppData>;
struct DeliverEvent { Observable observable; };
struct RecordMetric { std::string name; std::int64_t value = 1; };
using Action =
    std::variant<SendUdpDatagram, SendTcpBytes, CloseTcp, DeliverEvent, RecordMetric>;

struct ProtocolViolation : std::logic_error {
    using std::logic_error::logic_error;
};

struct AmplificationReport {
    std::uint64_t udp_bytes_in = 0;
    std::uint64_t udp_bytes_out = 0;
    std::uint64_t udp_pkts_in = 0;
    std::uint64_t udp_pkts_out = 0;

    double byte_factor() const {
        return udp_bytes_in == 0 ? 0.0
                                 : static_cast<double>(udp_bytes_out) /
                                       static_cast<double>(udp_bytes_in);
    }
};

class Engine {
public:
    Engine(Config config, handshake::EngineFactory factory);

    std::vector<Action> step(const Event& event, TimePoint now);

    const AmplificationReport& amplification_report() const { return amplification_; }
    // server_response invocations triggered from the UDP path; a complete
    // ClientHello is the only thing that may drive this up.
    std::uint64_t udp_engine_invocations() const { return udp_engine_invocations_; }
    std::size_t memory_in_use() const { return buffer_.memory_in_use(); }
    std::size_t pending_records() const { return records_.size(); }
    std::size_t open_streams() const { return streams_.size(); }

    // Embedder saw the stream close; drop its state without emitting actions.
    void forget_stream(StreamId stream) { streams_.erase(stream); }

    void set_trace(std::function<void(const std::string&)> sink) { trace_ = std::move(sink); }

private:
    struct Emit;

    // Completed ClientHello: response fragments awaiting request credits.
    struct ConnRecord {
        std::vector<Bytes> response_fragments;
        std::size_t fragments_sent = 0;
        std::size_t requests_seen = 0;
        std::unique_ptr<handshake::HandshakeEngine> engine;
        TimePoint created_at{};
        TimePoint response_ready_at{};
        bool attached = false;
    };

    enum class StreamStage { ExpectPreface, VanillaHello, VanillaFinish, TurboFinish, Established };

    struct StreamState {
        StreamStage stage = StreamStage::ExpectPreface;
        Bytes buffer;
        std::unique_ptr<handshake::HandshakeEngine> vanilla_engine;
        ConnRecord record;  // owned after a turbo attach
        wire::ConnectionId conn_id;
        SessionPath path = SessionPath::Vanilla;
    };

    void on_udp(const UdpDatagram& dg, TimePoint now, Emit& emit);
    void on_tcp_accepted(const TcpAccepted& ev, TimePoint now, Emit& emit);
    void on_tcp_bytes(const TcpBytes& ev, TimePoint now, Emit& emit);
    void on_tick(TimePoint now, Emit& emit);

    void release_fragments(const wire::ConnectionId& conn_id, ConnRecord& record, PeerId peer,
                           TimePoint now, Emit& emit);
    void process_stream(StreamId stream, StreamState& state, TimePoint now, Emit& emit);
    void close_stream(StreamId stream, Emit& emit);
    void trace(TimePoint now, const std::string& line);

    Config config_;
    handshake::EngineFactory factory_;
    reassembly::ReassemblyBuffer buffer_;
    std::unordered_map<wire::ConnectionId, ConnRecord, wire::ConnectionIdHash> records_;
    std::unordered_map<StreamId, StreamState> streams_;
    AmplificationReport amplification_;
    std::uint64_t udp_engine_invocations_ = 0;
    std::function<void(const std::string&)> trace_;
};

}  // namespace turbotls::server
