#include "turbotls/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

namespace turbotls::netsim {

const char* to_string(Protocol protocol) {
    return protocol == Protocol::TurboTls ? "turbotls" : "vanilla_tls";
}

void Scenario::validate() const {
    if (link.one_way_delay < Duration::zero()) throw ConfigInvalid("negative link delay");
    if (link.udp_loss_prob < 0.0 || link.udp_loss_prob > 1.0) {
        throw ConfigInvalid("udp_loss must be in [0, 1]");
    }
    if (link.reorder_jitter < Duration::zero()) throw ConfigInvalid("negative jitter");
    if (sessions == 0) throw ConfigInvalid("sessions must be at least 1");
    if (client.datagram_budget <= wire::kFragmentHeaderSize) {
        throw ConfigInvalid("datagram budget must exceed the fragment header");
    }
    if (client.grace_delay < Duration::zero()) throw ConfigInvalid("negative grace delay");
    if (client.grace_rtt_fraction < 0.0 || client.grace_rtt_fraction > 1.0) {
        throw ConfigInvalid("grace_rtt_fraction must be in [0, 1]");
    }
    if (server.compute_delay < Duration::zero()) throw ConfigInvalid("negative compute delay");
    if (https_rr_rdata && !discovery::decode_https_rdata(*https_rr_rdata).ok()) {
        throw ConfigInvalid("https_rr_hex does not decode as an HTTPS record");
    }
}

namespace {

// Consults the capability cache the way a client would before sending any
// UDP: an injected HTTPS record or prior knowledge fills the cache; a miss
// means the server is unknown and turbo must not be attempted.
bool turbo_supported(const Scenario& scenario) {
    discovery::CapabilityCache cache;
    const std::string domain = "server.sim";
    if (scenario.https_rr_rdata) {
        auto record = discovery::decode_https_rdata(*scenario.https_rr_rdata);
        cache.store(domain, discovery::supports_turbotls(record.value()), TimePoint{},
                    std::chrono::hours(1));
    } else if (scenario.turbo_advertised) {
        cache.store(domain, true, TimePoint{}, std::chrono::hours(1));
    }
    return cache.lookup(domain, TimePoint{}).value_or(false);
}

class Simulation {
public:
    explicit Simulation(const Scenario& scenario)
        : scenario_(scenario),
          link_rng_(scenario.link.seed ^ 0x6c696e6bULL),
          server_(scenario.server,
                  [suite = scenario.suite] { return handshake::mock_engine(suite, 0); }) {}

    RunMetrics run() {
        const bool turbo = scenario_.protocol == Protocol::TurboTls && turbo_supported(scenario_);

        metrics_.sessions.resize(scenario_.sessions);
        ttfrb_.assign(scenario_.sessions, Duration{-1});
        clients_.reserve(scenario_.sessions);
        for (std::size_t i = 0; i < scenario_.sessions; ++i) {
            client::Config config = scenario_.client;
            config.mode = turbo ? client::Mode::Turbo : client::Mode::Vanilla;
            config.first_app_data = scenario_.app_data;
            Rng conn_rng(scenario_.link.seed * 0x9e3779b9ULL + i);
            config.conn_id = wire::ConnectionId::random(conn_rng);
            clients_.push_back(std::make_unique<client::Session>(
                config, handshake::mock_engine(scenario_.suite, scenario_.link.seed + i)));

            metrics_.sessions[i].responses_expected = fragment::predict_response_fragments(
                scenario_.suite.response_len, scenario_.client.datagram_budget);
        }

        for (std::size_t i = 0; i < scenario_.sessions; ++i) {
            schedule(TimePoint{0}, [this, i] {
                handle_client_actions(i, clients_[i]->start(now_));
            });
        }

        while (!queue_.empty()) {
            Pending ev = std::move(const_cast<Pending&>(queue_.top()));
            queue_.pop();
            now_ = ev.at;
            ev.fire();
        }

        finalize();
        return std::move(metrics_);
    }

private:
    struct Pending {
        TimePoint at{};
        std::uint64_t seq = 0;
        std::function<void()> fire;
        bool operator>(const Pending& other) const {
            return at != other.at ? at > other.at : seq > other.seq;
        }
    };

    void schedule(TimePoint at, std::function<void()> fn) {
        queue_.push(Pending{at, next_seq_++, std::move(fn)});
    }

    Duration jitter() {
        if (scenario_.link.reorder_jitter <= Duration::zero()) return Duration::zero();
        return Duration{std::llround(link_rng_.uniform01() *
                                     static_cast<double>(scenario_.link.reorder_jitter.count()))};
    }

    bool lost() {
        if (scenario_.link.udp_loss_prob <= 0.0) return false;
        if (scenario_.link.udp_loss_prob >= 1.0) return true;
        return link_rng_.uniform01() < scenario_.link.udp_loss_prob;
    }

    void send_udp_to_server(std::size_t session, const Bytes& datagram) {
        auto decoded = wire::decode_fragment(datagram);
        const auto type = decoded.ok() ? decoded.value().header.type : wire::FragType::ChFrag;
        if (lost()) {
            metrics_.loss_log.push_back(LossRecord{session, true, type, now_});
            return;
        }
        const TimePoint arrival = now_ + scenario_.link.one_way_delay + jitter();
        schedule(arrival, [this, session, datagram] {
            handle_server_actions(
                server_.step(server::UdpDatagram{datagram, session}, now_));
        });
    }

    void send_udp_to_client(std::size_t session, const Bytes& datagram, TimePoint not_before) {
        const TimePoint depart = std::max(now_, not_before);
        auto decoded = wire::decode_fragment(datagram);
        const auto type = decoded.ok() ? decoded.value().header.type : wire::FragType::RespFrag;
        if (lost()) {
            metrics_.loss_log.push_back(LossRecord{session, false, type, depart});
            return;
        }
        const TimePoint arrival = depart + scenario_.link.one_way_delay + jitter();
        schedule(arrival, [this, session, datagram] {
            handle_client_actions(session,
                                  clients_[session]->step(client::UdpDatagram{datagram}, now_));
        });
    }

    void handle_client_actions(std::size_t session, const std::vector<client::Action>& actions) {
        for (const auto& action : actions) {
            if (const auto* send = std::get_if<client::SendUdpDatagrams>(&action)) {
                for (const auto& dg : send->datagrams) send_udp_to_server(session, dg);
            } else if (std::holds_alternative<client::OpenTcp>(action)) {
                // SYN reaches the server half an RTT in; the connect completes
                // at the client after the full RTT. TCP itself never fails.
                schedule(now_ + scenario_.link.one_way_delay, [this, session] {
                    handle_server_actions(server_.step(server::TcpAccepted{session}, now_));
                });
                schedule(now_ + 2 * scenario_.link.one_way_delay, [this, session] {
                    handle_client_actions(session,
                                          clients_[session]->step(client::TcpConnected{}, now_));
                });
            } else if (const auto* send = std::get_if<client::SendTcpBytes>(&action)) {
                schedule(now_ + scenario_.link.one_way_delay, [this, session, data = send->data] {
                    handle_server_actions(
                        server_.step(server::TcpBytes{session, data}, now_));
                });
            } else if (const auto* timer = std::get_if<client::SetTimer>(&action)) {
                schedule(now_ + timer->after, [this, session, tag = timer->tag] {
                    handle_client_actions(session,
                                          clients_[session]->step(client::TimerFired{tag}, now_));
                });
            } else if (const auto* deliver = std::get_if<client::DeliverEvent>(&action)) {
                if (const auto* app = std::get_if<client::AppData>(&deliver->observable)) {
                    (void)app;
                    if (ttfrb_[session] < Duration::zero()) ttfrb_[session] = now_;
                }
            }
            // RecordMetric actions feed aggregated counters only.
        }
    }

    void handle_server_actions(const std::vector<server::Action>& actions) {
        for (const auto& action : actions) {
            if (const auto* send = std::get_if<server::SendUdpDatagram>(&action)) {
                send_udp_to_client(send->peer, send->data, send->not_before);
            } else if (const auto* send = std::get_if<server::SendTcpBytes>(&action)) {
                const TimePoint depart = std::max(now_, send->not_before);
                schedule(depart + scenario_.link.one_way_delay,
                         [this, session = send->stream, data = send->data] {
                             handle_client_actions(
                                 session, clients_[session]->step(client::TcpBytes{data}, now_));
                         });
            } else if (const auto* close = std::get_if<server::CloseTcp>(&action)) {
                schedule(now_ + scenario_.link.one_way_delay, [this, session = close->stream] {
                    handle_client_actions(session,
                                          clients_[session]->step(client::TcpFailed{}, now_));
                });
            } else if (const auto* deliver = std::get_if<server::DeliverEvent>(&action)) {
                if (const auto* app = std::get_if<server::AppData>(&deliver->observable)) {
                    // The demo application echoes over the established stream.
                    schedule(now_ + scenario_.link.one_way_delay,
                             [this, session = app->stream, data = app->data] {
                                 handle_client_actions(session, clients_[session]->step(
                                                                    client::TcpBytes{data}, now_));
                             });
                }
            }
        }
    }

    void finalize() {
        for (std::size_t i = 0; i < clients_.size(); ++i) {
            auto& stats = metrics_.sessions[i];
            const auto& session = *clients_[i];
            stats.established = session.phase() == client::Phase::Established;
            stats.path = session.path();
            stats.time_to_first_app_byte = session.established_at();
            stats.time_to_first_response_byte =
                ttfrb_[i] >= Duration::zero() ? ttfrb_[i] : Duration{0};
            stats.requests_sent = session.metrics().udp_datagrams_sent;
            if (!stats.established) {
                metrics_.failed_count += 1;
            } else if (stats.path == client::Path::Turbo) {
                metrics_.turbo_count += 1;
            } else if (stats.path == client::Path::Fallback) {
                metrics_.fallback_count += 1;
            } else {
                metrics_.vanilla_count += 1;
            }
        }
        metrics_.amplification = server_.amplification_report();
        metrics_.udp_engine_invocations = server_.udp_engine_invocations();
    }

    Scenario scenario_;
    Rng link_rng_;
    server::Engine server_;
    std::vector<std::unique_ptr<client::Session>> clients_;
    std::vector<Duration> ttfrb_;
    RunMetrics metrics_;
    std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue_;
    TimePoint now_{};
    std::uint64_t next_seq_ = 0;
};

std::vector<Duration> established_sample(const RunMetrics& metrics,
                                         Duration SessionStats::* field) {
    std::vector<Duration> sample;
    sample.reserve(metrics.sessions.size());
    for (const auto& s : metrics.sessions) {
        if (s.established) sample.push_back(s.*field);
    }
    return sample;
}

}  // namespace

Duration nearest_rank(std::vector<Duration> sample, double p) {
    if (sample.empty()) return Duration{0};
    std::sort(sample.begin(), sample.end());
    const double rank = std::ceil(p / 100.0 * static_cast<double>(sample.size()));
    const std::size_t index =
        std::min(sample.size(), std::max<std::size_t>(1, static_cast<std::size_t>(rank)));
    return sample[index - 1];
}

Duration RunMetrics::ttfab_percentile(double p) const {
    return nearest_rank(established_sample(*this, &SessionStats::time_to_first_app_byte), p);
}

Duration RunMetrics::ttfrb_percentile(double p) const {
    return nearest_rank(established_sample(*this, &SessionStats::time_to_first_response_byte), p);
}

RunMetrics run_scenario(const Scenario& scenario) {
    scenario.validate();
    Simulation sim(scenario);
    return sim.run();
}

std::string csv_header() { return "protocol,suite,ping_us,median_us,p90_us,p99_us"; }

namespace {

std::string format_us(Duration d) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.3f", to_us(d));
    return buf;
}

}  // namespace

std::string csv_row(const Scenario& scenario, const RunMetrics& metrics) {
    std::ostringstream out;
    out << to_string(scenario.protocol) << ',' << scenario.suite.name() << ','
        << format_us(2 * scenario.link.one_way_delay) << ','
        << format_us(metrics.ttfab_percentile(50)) << ','
        << format_us(metrics.ttfab_percentile(90)) << ','
        << format_us(metrics.ttfab_percentile(99));
    return out.str();
}

std::vector<CompareRow> compare(Protocol a, Protocol b, const Scenario& base) {
    Scenario sa = base;
    sa.protocol = a;
    Scenario sb = base;
    sb.protocol = b;
    const RunMetrics ma = run_scenario(sa);
    const RunMetrics mb = run_scenario(sb);

    std::vector<CompareRow> rows;
    for (double p : {50.0, 90.0, 99.0}) {
        CompareRow row;
        row.metric = "p" + std::to_string(static_cast<int>(p));
        row.a_us = to_us(ma.ttfab_percentile(p));
        row.b_us = to_us(mb.ttfab_percentile(p));
        row.ratio = row.b_us == 0.0 ? 0.0 : row.a_us / row.b_us;
        rows.push_back(row);
    }
    return rows;
}

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigInvalid("bad numeric value for " + key + ": " + value);
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigInvalid("bad integer value for " + key + ": " + value);
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "on") return true;
    if (value == "false" || value == "0" || value == "off") return false;
    throw ConfigInvalid("bad boolean value for " + key + ": " + value);
}

}  // namespace

Scenario Scenario::from_string(const std::string& text) {
    Scenario scenario;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) throw ConfigInvalid("expected key=value: " + stripped);
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));

        if (key == "protocol") {
            if (value == "turbo" || value == "turbotls") {
                scenario.protocol = Protocol::TurboTls;
            } else if (value == "vanilla" || value == "tls") {
                scenario.protocol = Protocol::VanillaTls;
            } else {
                throw ConfigInvalid("unknown protocol: " + value);
            }
        } else if (key == "suite") {
            auto suite = handshake::MockSuite::named(value);
            if (!suite) throw ConfigInvalid("unknown suite: " + value);
            scenario.suite = *suite;
        } else if (key == "rtt_ms") {
            scenario.link.one_way_delay = from_ms(parse_double(key, value) / 2.0);
        } else if (key == "udp_loss") {
            scenario.link.udp_loss_prob = parse_double(key, value);
        } else if (key == "jitter_ms") {
            scenario.link.reorder_jitter = from_ms(parse_double(key, value));
        } else if (key == "seed") {
            scenario.link.seed = parse_uint(key, value);
        } else if (key == "sessions") {
            scenario.sessions = parse_uint(key, value);
        } else if (key == "grace_ms") {
            scenario.client.grace_delay = from_ms(parse_double(key, value));
        } else if (key == "grace_rtt_fraction") {
            scenario.client.grace_rtt_fraction = parse_double(key, value);
        } else if (key == "budget") {
            scenario.client.datagram_budget = parse_uint(key, value);
            scenario.server.datagram_budget = scenario.client.datagram_budget;
        } else if (key == "pad_margin") {
            scenario.client.pad_margin = parse_uint(key, value);
        } else if (key == "compute_ms") {
            scenario.server.compute_delay = from_ms(parse_double(key, value));
        } else if (key == "advertised") {
            scenario.turbo_advertised = parse_bool(key, value);
        } else if (key == "https_rr_hex") {
            auto rdata = hex_decode(value);
            if (!rdata) throw ConfigInvalid("https_rr_hex is not valid hex");
            scenario.https_rr_rdata = std::move(*rdata);
        } else if (key == "app_data") {
            scenario.app_data = to_bytes(value);
        } else if (key == "suite_ch_len") {
            scenario.suite.ch_len = parse_uint(key, value);
        } else if (key == "suite_response_len") {
            scenario.suite.response_len = parse_uint(key, value);
        } else if (key == "suite_finish_len") {
            scenario.suite.finish_len = parse_uint(key, value);
        } else if (key == "buffer_max_bytes") {
            scenario.server.buffer.max_total_bytes = parse_uint(key, value);
        } else if (key == "buffer_max_entries") {
            scenario.server.buffer.max_entries = parse_uint(key, value);
        } else if (key == "entry_ttl_ms") {
            scenario.server.buffer.entry_ttl = from_ms(parse_double(key, value));
        } else if (key == "record_ttl_ms") {
            scenario.server.record_ttl = from_ms(parse_double(key, value));
        } else {
            throw ConfigInvalid("unknown scenario key: " + key);
        }
    }
    scenario.validate();
    return scenario;
}

Scenario Scenario::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigInvalid("cannot open scenario file: " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return from_string(text.str());
}

std::string Scenario::to_key_values() const {
    std::ostringstream out;
    out << "protocol=" << (protocol == Protocol::TurboTls ? "turbo" : "vanilla") << '\n'
        << "suite=" << suite.name() << '\n'
        << "suite_ch_len=" << suite.ch_len << '\n'
        << "suite_response_len=" << suite.response_len << '\n'
        << "suite_finish_len=" << suite.finish_len << '\n'
        << "rtt_ms=" << to_ms(2 * link.one_way_delay) << '\n'
        << "udp_loss=" << link.udp_loss_prob << '\n'
        << "jitter_ms=" << to_ms(link.reorder_jitter) << '\n'
        << "seed=" << link.seed << '\n'
        << "sessions=" << sessions << '\n'
        << "grace_ms=" << to_ms(client.grace_delay) << '\n'
        << "grace_rtt_fraction=" << client.grace_rtt_fraction << '\n'
        << "budget=" << client.datagram_budget << '\n'
        << "pad_margin=" << client.pad_margin << '\n'
        << "compute_ms=" << to_ms(server.compute_delay) << '\n'
        << "buffer_max_bytes=" << server.buffer.max_total_bytes << '\n'
        << "buffer_max_entries=" << server.buffer.max_entries << '\n'
        << "entry_ttl_ms=" << to_ms(server.buffer.entry_ttl) << '\n'
        << "record_ttl_ms=" << to_ms(server.record_ttl) << '\n'
        << "app_data=" << turbotls::to_string(BytesView(app_data)) << '\n'
        << "advertised=" << (turbo_advertised ? "true" : "false") << '\n';
    if (https_rr_rdata) out << "https_rr_hex=" << hex_encode(*https_rr_rdata) << '\n';
    return out.str();
}

}  // namespace turbotls::netsim
