// turbotls command line: `bench` runs simulator scenarios and prints the
// latency comparison; `serve` and `connect` run the engines over real
// UDP/TCP sockets with the mock handshake for loopback and LAN demos.
#include <unistd.h>

#include <csignal>
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "turbotls/discovery.hpp"
#include "turbotls/net_runner.hpp"
#include "turbotls/netsim.hpp"

using namespace turbotls;

namespace {

volatile std::sig_atomic_t g_stop = 0;
void handle_signal(int) { g_stop = 1; }

TimePoint wall_now() {
    return std::chrono::duration_cast<Duration>(
        std::chrono::system_clock::now().time_since_epoch());
}

struct BenchFlags {
    std::string scenario_file;
    double rtt_ms = 133.021;
    double loss = 0.0;
    double jitter_ms = 0.0;
    std::string suite = "ec";
    std::size_t sessions = 100;
    std::uint64_t seed = 7;
    double grace_ms = 2.0;
    double grace_rtt_fraction = 0.25;
    std::size_t budget = fragment::kDefaultDatagramBudget;
    double compute_ms = 0.0;
    std::string protocol = "both";
    std::string out = "table";
};

netsim::Scenario scenario_from_flags(const BenchFlags& flags) {
    if (!flags.scenario_file.empty()) return netsim::Scenario::from_file(flags.scenario_file);
    netsim::Scenario scenario;
    scenario.link.one_way_delay = from_ms(flags.rtt_ms / 2.0);
    scenario.link.udp_loss_prob = flags.loss;
    scenario.link.reorder_jitter = from_ms(flags.jitter_ms);
    scenario.link.seed = flags.seed;
    auto suite = handshake::MockSuite::named(flags.suite);
    if (!suite) throw netsim::ConfigInvalid("unknown suite: " + flags.suite);
    scenario.suite = *suite;
    scenario.sessions = flags.sessions;
    scenario.client.grace_delay = from_ms(flags.grace_ms);
    scenario.client.grace_rtt_fraction = flags.grace_rtt_fraction;
    scenario.client.datagram_budget = flags.budget;
    scenario.server.datagram_budget = flags.budget;
    scenario.server.compute_delay = from_ms(flags.compute_ms);
    scenario.validate();
    return scenario;
}

void print_table_row(const netsim::Scenario& scenario, const netsim::RunMetrics& metrics) {
    std::printf("%-12s %-5s %12.3f %12.3f %12.3f %12.3f %8zu/%zu\n",
                netsim::to_string(scenario.protocol), scenario.suite.name(),
                to_us(2 * scenario.link.one_way_delay), to_us(metrics.ttfab_percentile(50)),
                to_us(metrics.ttfab_percentile(90)), to_us(metrics.ttfab_percentile(99)),
                metrics.fallback_count, metrics.sessions.size());
}

int run_bench(const BenchFlags& flags) {
    netsim::Scenario scenario = scenario_from_flags(flags);
    const bool csv = flags.out == "csv";

    std::vector<netsim::Protocol> protocols;
    if (flags.protocol == "both") {
        protocols = {netsim::Protocol::VanillaTls, netsim::Protocol::TurboTls};
    } else if (flags.protocol == "vanilla" || flags.protocol == "tls") {
        protocols = {netsim::Protocol::VanillaTls};
    } else if (flags.protocol == "turbo" || flags.protocol == "turbotls") {
        protocols = {netsim::Protocol::TurboTls};
    } else {
        throw netsim::ConfigInvalid("unknown protocol: " + flags.protocol);
    }

    if (csv) {
        std::printf("%s\n", netsim::csv_header().c_str());
    } else {
        std::printf("%-12s %-5s %12s %12s %12s %12s %10s\n", "protocol", "suite", "ping_us",
                    "median_us", "p90_us", "p99_us", "fallbacks");
    }
    netsim::RunMetrics turbo_metrics;
    bool have_turbo = false;
    for (auto protocol : protocols) {
        netsim::Scenario run = scenario;
        run.protocol = protocol;
        auto metrics = netsim::run_scenario(run);
        if (csv) {
            std::printf("%s\n", netsim::csv_row(run, metrics).c_str());
        } else {
            print_table_row(run, metrics);
        }
        if (protocol == netsim::Protocol::TurboTls) {
            turbo_metrics = std::move(metrics);
            have_turbo = true;
        }
    }

    if (have_turbo && !csv && turbo_metrics.amplification.udp_pkts_in > 0) {
        const auto& amp = turbo_metrics.amplification;
        std::printf("\nudp amplification: %llu pkts in / %llu pkts out, byte factor %.2f\n",
                    static_cast<unsigned long long>(amp.udp_pkts_in),
                    static_cast<unsigned long long>(amp.udp_pkts_out), amp.byte_factor());
    }

    if (protocols.size() == 2 && !csv) {
        auto rows = netsim::compare(netsim::Protocol::VanillaTls, netsim::Protocol::TurboTls,
                                    scenario);
        std::printf("\nvanilla / turbo time-to-first-app-byte:\n");
        for (const auto& row : rows) {
            std::printf("  %-4s %12.3f us / %12.3f us = %.3fx\n", row.metric.c_str(), row.a_us,
                        row.b_us, row.ratio);
        }
    }
    return 0;
}

struct ServeFlags {
    std::string host = "127.0.0.1";
    std::uint16_t udp_port = 4443;
    std::uint16_t tcp_port = 4443;
    std::string suite = "ec";
    double ttl_ms = 2000.0;
    bool verbose = false;
};

int run_serve(const ServeFlags& flags) {
    net::ServerOptions options;
    options.bind_host = flags.host;
    options.udp_port = flags.udp_port;
    options.tcp_port = flags.tcp_port;
    auto suite = handshake::MockSuite::named(flags.suite);
    if (!suite) throw netsim::ConfigInvalid("unknown suite: " + flags.suite);
    options.suite = *suite;
    options.engine.buffer.entry_ttl = from_ms(flags.ttl_ms);
    options.engine.record_ttl = from_ms(flags.ttl_ms);
    options.verbose = flags.verbose;

    net::ServerRunner runner(options);
    runner.start();
    std::fprintf(stderr, "serving suite=%s udp=%s:%u tcp=%s:%u (ctrl-c to stop)\n",
                 options.suite.name(), flags.host.c_str(), runner.udp_port(), flags.host.c_str(),
                 runner.tcp_port());

    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    while (!g_stop) {
        ::usleep(100000);
    }
    runner.stop();
    std::fprintf(stderr, "stopped after %llu established sessions\n",
                 static_cast<unsigned long long>(runner.sessions_established()));
    return 0;
}

struct ConnectFlags {
    std::string host = "127.0.0.1";
    std::uint16_t udp_port = 4443;
    std::uint16_t tcp_port = 4443;
    std::string turbo = "on";
    std::string suite = "ec";
    double grace_ms = 2.0;
    double grace_rtt_fraction = 0.25;
    double timeout_ms = 5000.0;
    std::string app_data = "ping";
    std::string cache_file;
    std::string https_rr_hex;
    std::string domain;
    bool verbose = false;
};

int run_connect(const ConnectFlags& flags) {
    net::ClientOptions options;
    options.host = flags.host;
    options.udp_port = flags.udp_port;
    options.tcp_port = flags.tcp_port;
    auto suite = handshake::MockSuite::named(flags.suite);
    if (!suite) throw netsim::ConfigInvalid("unknown suite: " + flags.suite);
    options.suite = *suite;
    options.config.grace_delay = from_ms(flags.grace_ms);
    options.config.grace_rtt_fraction = flags.grace_rtt_fraction;
    options.timeout = from_ms(flags.timeout_ms);
    options.app_data = to_bytes(flags.app_data);
    options.verbose = flags.verbose;

    const std::string domain =
        flags.domain.empty() ? flags.host + ":" + std::to_string(flags.tcp_port) : flags.domain;
    discovery::CapabilityCache cache;
    if (!flags.cache_file.empty()) cache = discovery::CapabilityCache::load(flags.cache_file);

    if (flags.turbo == "on") {
        options.use_turbo = true;
    } else if (flags.turbo == "off") {
        options.use_turbo = false;
    } else if (flags.turbo == "auto") {
        // Injected HTTPS record first, then the cache; unknown servers get
        // vanilla TLS so they never see unsolicited UDP.
        std::optional<bool> supported;
        if (!flags.https_rr_hex.empty()) {
            auto rdata = hex_decode(flags.https_rr_hex);
            if (!rdata) throw netsim::ConfigInvalid("--https-rr-hex is not valid hex");
            auto record = discovery::decode_https_rdata(*rdata);
            if (!record.ok()) {
                throw netsim::ConfigInvalid(std::string("bad HTTPS record: ") +
                                            discovery::to_string(record.error()));
            }
            supported = discovery::supports_turbotls(record.value());
            cache.store(domain, *supported, wall_now(), std::chrono::hours(1));
        }
        if (!supported) supported = cache.lookup(domain, wall_now());
        options.use_turbo = supported.value_or(false);
    } else {
        throw netsim::ConfigInvalid("--turbo must be on, off or auto");
    }

    auto outcome = net::run_client(options);
    if (!outcome.established) {
        std::fprintf(stderr, "connection failed: %s\n", outcome.error.c_str());
        return 1;
    }
    const bool echo_ok = outcome.echoed == options.app_data;
    std::printf("established via %s path in %.3f ms, echo %s\n",
                client::to_string(outcome.path), to_ms(outcome.time_to_established),
                options.app_data.empty() ? "skipped" : (echo_ok ? "verified" : "MISMATCH"));
    if (!options.app_data.empty() && !echo_ok) return 1;

    if (!flags.cache_file.empty() && outcome.path == client::Path::Turbo) {
        cache.store(domain, true, wall_now(), std::chrono::hours(24));
        cache.save(flags.cache_file);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TurboTLS delivery-layer toolkit"};
    app.require_subcommand(1);

    BenchFlags bench;
    auto* bench_cmd = app.add_subcommand("bench", "run simulator scenarios and report latency");
    bench_cmd->add_option("--scenario", bench.scenario_file, "scenario file (key=value lines)");
    bench_cmd->add_option("--rtt-ms", bench.rtt_ms, "link round-trip time");
    bench_cmd->add_option("--loss", bench.loss, "udp loss probability per datagram per direction");
    bench_cmd->add_option("--jitter-ms", bench.jitter_ms, "max extra uniform datagram delay");
    bench_cmd->add_option("--suite", bench.suite, "mock suite: ec or pq");
    bench_cmd->add_option("--sessions", bench.sessions, "sessions per run");
    bench_cmd->add_option("--seed", bench.seed, "deterministic seed");
    bench_cmd->add_option("--grace-ms", bench.grace_ms, "client grace delay");
    bench_cmd->add_option("--grace-rtt-fraction", bench.grace_rtt_fraction,
                          "grace as a fraction of observed rtt");
    bench_cmd->add_option("--budget", bench.budget, "datagram budget in bytes");
    bench_cmd->add_option("--compute-ms", bench.compute_ms, "server response compute time");
    bench_cmd->add_option("--protocol", bench.protocol, "turbo, vanilla or both");
    bench_cmd->add_option("--out", bench.out, "output format: table or csv");

    ServeFlags serve;
    auto* serve_cmd = app.add_subcommand("serve", "run the server engine on real sockets");
    serve_cmd->add_option("--host", serve.host, "bind address");
    serve_cmd->add_option("--udp-port", serve.udp_port, "udp port");
    serve_cmd->add_option("--tcp-port", serve.tcp_port, "tcp port");
    serve_cmd->add_option("--suite", serve.suite, "mock suite: ec or pq");
    serve_cmd->add_option("--ttl-ms", serve.ttl_ms, "reassembly entry ttl");
    serve_cmd->add_flag("--verbose", serve.verbose, "trace to stderr");

    ConnectFlags connect;
    auto* connect_cmd = app.add_subcommand("connect", "connect once and echo app data");
    connect_cmd->add_option("--host", connect.host, "server address");
    connect_cmd->add_option("--udp-port", connect.udp_port, "server udp port");
    connect_cmd->add_option("--tcp-port", connect.tcp_port, "server tcp port");
    connect_cmd->add_option("--turbo", connect.turbo, "on, off or auto (consults the cache)");
    connect_cmd->add_option("--suite", connect.suite, "mock suite: ec or pq");
    connect_cmd->add_option("--grace-ms", connect.grace_ms, "grace delay before fallback");
    connect_cmd->add_option("--grace-rtt-fraction", connect.grace_rtt_fraction,
                            "grace as a fraction of observed rtt");
    connect_cmd->add_option("--timeout-ms", connect.timeout_ms, "overall timeout");
    connect_cmd->add_option("--app-data", connect.app_data, "bytes to send and expect echoed");
    connect_cmd->add_option("--cache-file", connect.cache_file, "capability cache path");
    connect_cmd->add_option("--https-rr-hex", connect.https_rr_hex,
                            "HTTPS record rdata (hex) advertising support");
    connect_cmd->add_option("--domain", connect.domain, "cache key, defaults to host:port");
    connect_cmd->add_flag("--verbose", connect.verbose, "trace to stderr");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (bench_cmd->parsed()) return run_bench(bench);
        if (serve_cmd->parsed()) return run_serve(serve);
        if (connect_cmd->parsed()) return run_connect(connect);
    } catch (const netsim::ConfigInvalid& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
