// Client-side connection race as a sans-I/O state machine. The session races
// the UDP request flight against a TCP connect, reassembles the UDP response,
// and falls back to plain TLS over the already-open TCP stream when the grace
// period expires. All I/O is expressed as Action values; feeding the same
// event sequence reproduces the same trace.
//
// Event/action vocabulary and the transition table are documented in
// docs/state-machines.md.
#pragma once

#include <functional>
#include <string>

#include "turbotls/fragment.hpp"
#include "turbotls/handshake.hpp"
#include "turbotls/reassembly.hpp"

namespace turbotls::client {

enum class Phase {
    Init,                  // constructed, start() not yet called
    Racing,                // UDP flight sent, TCP connecting
    TcpReadyUdpPending,    // TCP up, waiting for UDP response under the grace timer
    UdpCompleteTcpPending, // finish flight ready, waiting for TCP
    FallingBack,           // vanilla ClientHello sent over TCP, awaiting response
    Finishing,             // finish flight handed to the transport
    Established,
    Failed,
};

const char* to_string(Phase phase);

enum class Mode { Turbo, Vanilla };
enum class Path { None, Turbo, Fallback, Vanilla };

const char* to_string(Path path);

struct Config {
    Mode mode = Mode::Turbo;
    std::size_t datagram_budget = fragment::kDefaultDatagramBudget;
    Duration grace_delay = std::chrono::milliseconds(2);
    // Effective grace = max(grace_delay, fraction * observed first-response
    // RTT) once a sample exists; 0 keeps the fixed rule only.
    double grace_rtt_fraction = 0.25;
    std::size_t pad_margin = fragment::kDefaultPadMargin;
    // Defaults to the engine's response_size_bound().
    std::optional<std::size_t> response_estimate;
    std::optional<wire::ConnectionId> conn_id;  // default: drawn from seed
    std::uint64_t seed = 0;
    // Application bytes to send in the same flight as the finish.
    Bytes first_app_data;
};

// Events fed by the embedder (simulator or socket runner).
struct UdpDatagram { Bytes data; };
struct TcpConnected {};
struct TcpBytes { Bytes data; };
struct TimerFired { std::uint64_t tag = 0; };
struct TcpFailed {};
using Event = std::variant<UdpDatagram, TcpConnected, TcpBytes, TimerFired, TcpFailed>;

// Observables surfaced to the application layer.
struct EstablishedInfo { Path path = Path::None; };
struct AppData { Bytes data; };
struct SessionFailed { std::string reason; };
using Observable = std::variant<EstablishedInfo, AppData, SessionFailed>;

// Actions requested from the embedder.
struct SendUdpDatagrams { std::vector<Bytes> datagrams; };
struct OpenTcp {};
struct SendTcpBytes { Bytes data; };
struct SetTimer { Duration after; std::uint64_t tag = 0; };
struct DeliverEvent { Observable observable; };
struct RecordMetric { std::string name; std::int64_t value = 1; };
using Action = std::variant<SendUdpDatagrams, OpenTcp, SendTcpBytes, SetTimer, DeliverEvent,
                            RecordMetric>;

// Raised on events that are impossible for the transport to deliver in the
// current phase (embedder bug), e.g. TcpBytes before TcpConnected. Hostile
// or stale network input never throws.
struct ProtocolViolation : std::logic_error {
    using std::logic_error::logic_error;
};

struct Metrics {
    std::uint64_t udp_datagrams_sent = 0;
    std::uint64_t udp_bytes_sent = 0;
    std::uint64_t udp_datagrams_received = 0;
    std::uint64_t udp_bytes_received = 0;
    std::uint64_t ignored_datagrams = 0;  // duplicates, stale, undecodable
    std::uint64_t stale_timers = 0;
    bool fell_back = false;
};

class Session {
public:
    Session(Config config, std::unique_ptr<handshake::HandshakeEngine> engine);

    // Emits the full UDP request flight and the TCP connect in one step
    // (Vanilla mode: the TCP connect only). Callable exactly once.
    std::vector<Action> start(TimePoint now);

    std::vector<Action> step(const Event& event, TimePoint now);

    Phase phase() const { return phase_; }
    Path path() const { return path_; }
    const wire::ConnectionId& conn_id() const { return conn_id_; }
    const Metrics& metrics() const { return metrics_; }
    TimePoint established_at() const { return established_at_; }
    bool finish_emitted() const { return finish_emitted_; }

    // Line-delimited trace sink for debugging; one line per transition.
    void set_trace(std::function<void(const std::string&)> sink) { trace_ = std::move(sink); }

private:
    struct Emit;  // step-scoped action collector

    void on_udp(const UdpDatagram& dg, TimePoint now, Emit& emit);
    void on_tcp_connected(TimePoint now, Emit& emit);
    void on_tcp_bytes(const TcpBytes& ev, TimePoint now, Emit& emit);
    void on_timer(const TimerFired& ev, TimePoint now, Emit& emit);
    void on_tcp_failed(TimePoint now, Emit& emit);

    void emit_finish(bool turbo_path, TimePoint now, Emit& emit);
    void arm_grace_timer(TimePoint now, Emit& emit);
    void enter_fallback(TimePoint now, Emit& emit);
    Duration grace_duration() const;
    void set_phase(Phase next, TimePoint now);
    void trace(TimePoint now, const std::string& line);

    Config config_;
    std::unique_ptr<handshake::HandshakeEngine> engine_;
    wire::ConnectionId conn_id_;
    Phase phase_ = Phase::Init;
    Path path_ = Path::None;
    Metrics metrics_;

    Bytes client_hello_;
    fragment::FragmentPlan plan_;
    reassembly::ReassemblyBuffer response_buffer_;
    Bytes finish_flight_;
    bool udp_complete_ = false;
    bool udp_poisoned_ = false;  // response reassembled but failed verification
    bool finish_emitted_ = false;

    Bytes tcp_buffer_;  // stream bytes while waiting for the vanilla response

    TimePoint sent_at_{};
    TimePoint tcp_ready_at_{};
    std::optional<TimePoint> first_udp_resp_at_;
    TimePoint established_at_{};

    std::uint64_t timer_generation_ = 0;
    bool tcp_connected_ = false;

    std::function<void(const std::string&)> trace_;
};

}  // namespace turbotls::client
