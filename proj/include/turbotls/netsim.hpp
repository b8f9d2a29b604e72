// Deterministic discrete-event simulator wiring the client and server engines
// (plus the plain TLS-over-TCP baseline) through a configurable duplex link.
// TCP is modeled as a reliable stream that connects after one RTT; UDP
// datagrams are lost and delayed independently per direction. Identical
// scenario and seed reproduce identical metrics, byte for byte.
#pragma once

#include <string>

#include "turbotls/client_engine.hpp"
#include "turbotls/discovery.hpp"
#include "turbotls/handshake.hpp"
#include "turbotls/server_engine.hpp"

namespace turbotls::netsim {

struct ConfigInvalid : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct LinkModel {
    Duration one_way_delay{0};  // RTT / 2
    double udp_loss_prob = 0.0; // per datagram, per direction
    Duration reorder_jitter{0}; // extra delay drawn uniformly in [0, jitter]
    std::uint64_t seed = 1;
};

enum class Protocol { VanillaTls, TurboTls };

const char* to_string(Protocol protocol);

struct Scenario {
    LinkModel link;
    handshake::MockSuite suite = handshake::MockSuite::ec();
    Protocol protocol = Protocol::TurboTls;
    std::size_t sessions = 1;
    client::Config client;           // grace, budget, pad margin
    server::Config server;           // buffer bounds, compute delay
    Bytes app_data = to_bytes("ping");
    // TurboTLS is only attempted against servers known to support it. The
    // flag can come from an injected HTTPS record or be asserted directly.
    bool turbo_advertised = true;
    std::optional<Bytes> https_rr_rdata;

    void validate() const;  // throws ConfigInvalid

    // Line-based key=value form; see docs in README. '#' starts a comment.
    static Scenario from_string(const std::string& text);
    static Scenario from_file(const std::string& path);
    std::string to_key_values() const;
};

struct LossRecord {
    std::size_t session = 0;
    bool client_to_server = true;
    wire::FragType type = wire::FragType::ChFrag;
    TimePoint at{};
};

struct SessionStats {
    bool established = false;
    client::Path path = client::Path::None;
    Duration time_to_first_app_byte{0};       // start until the client can send
    Duration time_to_first_response_byte{0};  // start until the first echoed byte
    std::size_t requests_sent = 0;
    std::size_t responses_expected = 0;
};

struct RunMetrics {
    std::vector<SessionStats> sessions;
    std::size_t fallback_count = 0;
    std::size_t turbo_count = 0;
    std::size_t vanilla_count = 0;
    std::size_t failed_count = 0;
    server::AmplificationReport amplification;
    std::uint64_t udp_engine_invocations = 0;
    std::vector<LossRecord> loss_log;

    // Nearest-rank percentile over time_to_first_app_byte of established
    // sessions, p in (0, 100].
    Duration ttfab_percentile(double p) const;
    Duration ttfrb_percentile(double p) const;
};

// Nearest-rank percentile over an unsorted sample.
Duration nearest_rank(std::vector<Duration> sample, double p);

RunMetrics run_scenario(const Scenario& scenario);

// CSV row matching the reporting layout: protocol, suite, ping, median, p90,
// p99 (times in microseconds).
std::string csv_header();
std::string csv_row(const Scenario& scenario, const RunMetrics& metrics);

struct CompareRow {
    std::string metric;   // "p50", "p90", "p99"
    double a_us = 0.0;
    double b_us = 0.0;
    double ratio = 0.0;   // a / b
};

// Runs both protocols over identical link seeds and reports per-percentile
// time-to-first-app-byte ratios.
std::vector<CompareRow> compare(Protocol a, Protocol b, const Scenario& base);

}  // namespace turbotls::netsim
