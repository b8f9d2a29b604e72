#include "turbotls/client_engine.hpp"

#include <cmath>

namespace turbotls::client {

const char* to_string(Phase phase) {
    switch (phase) {
        case Phase::Init: return "init";
        case Phase::Racing: return "racing";
        case Phase::TcpReadyUdpPending: return "tcp_ready_udp_pending";
        case Phase::UdpCompleteTcpPending: return "udp_complete_tcp_pending";
        case Phase::FallingBack: return "falling_back";
        case Phase::Finishing: return "finishing";
        case Phase::Established: return "established";
        case Phase::Failed: return "failed";
    }
    return "?";
}

const char* to_string(Path path) {
    switch (path) {
        case Path::None: return "none";
        case Path::Turbo: return "turbo";
        case Path::Fallback: return "fallback";
        case Path::Vanilla: return "vanilla";
    }
    return "?";
}

struct Session::Emit {
    std::vector<Action> actions;

    void add(Action a) { actions.push_back(std::move(a)); }
    void metric(std::string name, std::int64_t value = 1) {
        actions.push_back(RecordMetric{std::move(name), value});
    }
    void observe(Observable obs) { actions.push_back(DeliverEvent{std::move(obs)}); }
};

Session::Session(Config config, std::unique_ptr<handshake::HandshakeEngine> engine)
    : config_(std::move(config)), engine_(std::move(engine)) {
    if (config_.conn_id) {
        conn_id_ = *config_.conn_id;
    } else {
        Rng rng(config_.seed ^ 0x7455524274ULL);
        conn_id_ = wire::ConnectionId::random(rng);
    }
    client_hello_ = engine_->client_first_flight();

    const std::size_t estimate =
        config_.response_estimate.value_or(engine_->response_size_bound());
    if (config_.mode == Mode::Turbo) {
        plan_ = fragment::plan_request_flight(client_hello_, conn_id_, config_.datagram_budget,
                                              estimate, config_.pad_margin);
    }

    reassembly::BufferConfig buf;
    buf.max_entries = 1;
    buf.max_entry_bytes = estimate;
    buf.max_total_bytes = estimate + reassembly::kEntryOverheadBytes;
    buf.entry_ttl = std::chrono::hours(24);  // session lifetime; no timed eviction
    response_buffer_ = reassembly::ReassemblyBuffer(buf);
}

std::vector<Action> Session::start(TimePoint now) {
    if (phase_ != Phase::Init) throw ProtocolViolation("start() called twice");
    Emit emit;
    sent_at_ = now;

    if (config_.mode == Mode::Turbo) {
        SendUdpDatagrams send;
        send.datagrams.reserve(plan_.request_count());
        for (const auto& dg : plan_.ch_fragments) send.datagrams.push_back(dg);
        for (const auto& dg : plan_.pad_requests) send.datagrams.push_back(dg);
        metrics_.udp_datagrams_sent = send.datagrams.size();
        metrics_.udp_bytes_sent = plan_.total_bytes();
        emit.add(std::move(send));
    } else {
        path_ = Path::Vanilla;
    }
    emit.add(OpenTcp{});
    set_phase(Phase::Racing, now);
    return std::move(emit.actions);
}

std::vector<Action> Session::step(const Event& event, TimePoint now) {
    if (phase_ == Phase::Init) throw ProtocolViolation("step() before start()");
    Emit emit;
    if (phase_ == Phase::Failed) {
        // Terminal: late datagrams, timers, or stream events change nothing.
        emit.metric("client.event_after_failure");
        return std::move(emit.actions);
    }
    std::visit(
        [&](const auto& ev) {
            using T = std::decay_t<decltype(ev)>;
            if constexpr (std::is_same_v<T, UdpDatagram>) {
                on_udp(ev, now, emit);
            } else if constexpr (std::is_same_v<T, TcpConnected>) {
                on_tcp_connected(now, emit);
            } else if constexpr (std::is_same_v<T, TcpBytes>) {
                on_tcp_bytes(ev, now, emit);
            } else if constexpr (std::is_same_v<T, TimerFired>) {
                on_timer(ev, now, emit);
            } else {
                on_tcp_failed(now, emit);
            }
        },
        event);
    return std::move(emit.actions);
}

void Session::on_udp(const UdpDatagram& dg, TimePoint now, Emit& emit) {
    metrics_.udp_datagrams_received += 1;
    metrics_.udp_bytes_received += dg.data.size();

    // A vanilla session sent no requests; whatever arrives is not for us.
    if (config_.mode == Mode::Vanilla) {
        metrics_.ignored_datagrams += 1;
        emit.metric("client.udp_ignored");
        return;
    }
    if (phase_ != Phase::Racing && phase_ != Phase::TcpReadyUdpPending) {
        metrics_.ignored_datagrams += 1;
        emit.metric("client.udp_ignored");
        return;
    }
    auto decoded = wire::decode_fragment(dg.data);
    if (!decoded.ok() || decoded.value().header.type != wire::FragType::RespFrag ||
        decoded.value().header.conn_id != conn_id_) {
        metrics_.ignored_datagrams += 1;
        emit.metric("client.udp_ignored");
        return;
    }
    if (!first_udp_resp_at_) first_udp_resp_at_ = now;
    if (udp_poisoned_) {
        metrics_.ignored_datagrams += 1;
        return;
    }

    auto result = response_buffer_.insert(decoded.value().header, decoded.value().payload, now);
    using Kind = reassembly::InsertResult::Kind;
    switch (result.kind) {
        case Kind::Rejected:
            metrics_.ignored_datagrams += 1;
            emit.metric("client.resp_rejected");
            return;
        case Kind::Complete: {
            auto finish = engine_->client_finish(result.message);
            if (!finish) {
                // Response failed verification; let the grace timer route us
                // to the TCP fallback.
                udp_poisoned_ = true;
                emit.metric("client.resp_verify_failed");
                trace(now, "udp response rejected by engine");
                return;
            }
            finish_flight_ = std::move(*finish);
            udp_complete_ = true;
            if (tcp_connected_) {
                emit_finish(/*turbo_path=*/true, now, emit);
            } else {
                set_phase(Phase::UdpCompleteTcpPending, now);
            }
            return;
        }
        case Kind::Incomplete:
        case Kind::PadRecorded:
            return;
    }
}

void Session::on_tcp_connected(TimePoint now, Emit& emit) {
    if (tcp_connected_) throw ProtocolViolation("TcpConnected delivered twice");
    tcp_connected_ = true;
    tcp_ready_at_ = now;

    if (config_.mode == Mode::Vanilla) {
        emit.add(SendTcpBytes{client_hello_});
        set_phase(Phase::FallingBack, now);
        return;
    }
    if (udp_complete_) {
        emit_finish(/*turbo_path=*/true, now, emit);
        return;
    }
    set_phase(Phase::TcpReadyUdpPending, now);
    arm_grace_timer(now, emit);
}

void Session::on_timer(const TimerFired& ev, TimePoint now, Emit& emit) {
    if (phase_ != Phase::TcpReadyUdpPending || ev.tag != timer_generation_) {
        metrics_.stale_timers += 1;
        emit.metric("client.stale_timer");
        return;
    }
    enter_fallback(now, emit);
}

void Session::on_tcp_bytes(const TcpBytes& ev, TimePoint now, Emit& emit) {
    if (!tcp_connected_) throw ProtocolViolation("TcpBytes before TcpConnected");

    if (phase_ == Phase::Established) {
        emit.observe(AppData{ev.data});
        return;
    }
    if (phase_ != Phase::FallingBack) {
        // Nothing has been sent on the stream yet, so a legitimate server has
        // nothing to say; drop and count.
        emit.metric("client.unexpected_tcp_bytes");
        return;
    }

    tcp_buffer_.insert(tcp_buffer_.end(), ev.data.begin(), ev.data.end());
    auto total = handshake::flight_length(tcp_buffer_);
    if (!total || tcp_buffer_.size() < *total) return;  // need more stream bytes

    Bytes flight(tcp_buffer_.begin(), tcp_buffer_.begin() + static_cast<std::ptrdiff_t>(*total));
    Bytes leftover(tcp_buffer_.begin() + static_cast<std::ptrdiff_t>(*total), tcp_buffer_.end());
    tcp_buffer_.clear();

    auto finish = engine_->client_finish(flight);
    if (!finish) {
        set_phase(Phase::Failed, now);
        emit.observe(SessionFailed{"server response failed verification"});
        return;
    }
    finish_flight_ = std::move(*finish);
    emit_finish(/*turbo_path=*/false, now, emit);
    if (!leftover.empty()) emit.observe(AppData{std::move(leftover)});
}

void Session::on_tcp_failed(TimePoint now, Emit& emit) {
    if (phase_ == Phase::Failed) return;
    set_phase(Phase::Failed, now);
    emit.observe(SessionFailed{"tcp connection failed"});
}

void Session::emit_finish(bool turbo_path, TimePoint now, Emit& emit) {
    if (finish_emitted_) throw std::logic_error("finish flight emitted twice");
    finish_emitted_ = true;
    if (path_ == Path::None) path_ = turbo_path ? Path::Turbo : Path::Fallback;

    set_phase(Phase::Finishing, now);
    Bytes out;
    if (turbo_path) {
        out = wire::encode_tcp_preface(conn_id_);
    }
    out.insert(out.end(), finish_flight_.begin(), finish_flight_.end());
    out.insert(out.end(), config_.first_app_data.begin(), config_.first_app_data.end());
    emit.add(SendTcpBytes{std::move(out)});

    established_at_ = now;
    set_phase(Phase::Established, now);
    emit.observe(EstablishedInfo{path_});
}

void Session::arm_grace_timer(TimePoint now, Emit& emit) {
    timer_generation_ += 1;
    emit.add(SetTimer{grace_duration(), timer_generation_});
    trace(now, "grace timer armed");
}

void Session::enter_fallback(TimePoint now, Emit& emit) {
    metrics_.fell_back = true;
    path_ = Path::Fallback;
    emit.metric("client.fallback");
    // Full ClientHello over TCP, no preface: byte-identical to vanilla TLS.
    emit.add(SendTcpBytes{client_hello_});
    set_phase(Phase::FallingBack, now);
}

Duration Session::grace_duration() const {
    Duration grace = config_.grace_delay;
    if (config_.grace_rtt_fraction > 0 && first_udp_resp_at_) {
        const Duration observed = *first_udp_resp_at_ - sent_at_;
        const Duration scaled{
            std::llround(config_.grace_rtt_fraction * static_cast<double>(observed.count()))};
        grace = std::max(grace, scaled);
    }
    return grace;
}

void Session::set_phase(Phase next, TimePoint now) {
    if (phase_ == next) return;
    trace(now, std::string("phase ") + to_string(phase_) + " -> " + to_string(next));
    phase_ = next;
}

void Session::trace(TimePoint now, const std::string& line) {
    if (!trace_) return;
    trace_("t=" + std::to_string(now.count()) + "ns conn=" + conn_id_.hex() + " " + line);
}

}  // namespace turbotls::client
