#include "turbotls/server_engine.hpp"

#include <cassert>

namespace turbotls::server {

struct Engine::Emit {
    std::vector<Action> actions;
    void add(Action a) { actions.push_back(std::move(a)); }
    void metric(std::string name, std::int64_t value = 1) {
        actions.push_back(RecordMetric{std::move(name), value});
    }
    void observe(Observable obs) { actions.push_back(DeliverEvent{std::move(obs)}); }
};

Engine::Engine(Config config, handshake::EngineFactory factory)
    : config_(config), factory_(std::move(factory)), buffer_(config.buffer) {}

std::vector<Action> Engine::step(const Event& event, TimePoint now) {
    Emit emit;
    std::visit(
        [&](const auto& ev) {
            using T = std::decay_t<decltype(ev)>;
            if constexpr (std::is_same_v<T, UdpDatagram>) {
                on_udp(ev, now, emit);
            } else if constexpr (std::is_same_v<T, TcpAccepted>) {
                on_tcp_accepted(ev, now, emit);
            } else if constexpr (std::is_same_v<T, TcpBytes>) {
                on_tcp_bytes(ev, now, emit);
            } else {
                on_tick(now, emit);
            }
        },
        event);
    // One response datagram per request datagram, never more.
    assert(amplification_.udp_pkts_out <= amplification_.udp_pkts_in);
    return std::move(emit.actions);
}

void Engine::on_udp(const UdpDatagram& dg, TimePoint now, Emit& emit) {
    amplification_.udp_pkts_in += 1;
    amplification_.udp_bytes_in += dg.data.size();

    auto decoded = wire::decode_fragment(dg.data);
    if (!decoded.ok()) {
        emit.metric("server.udp_malformed");
        return;
    }
    const auto& header = decoded.value().header;
    if (header.type == wire::FragType::RespFrag) {
        // Clients never send response fragments; reflected traffic.
        emit.metric("server.udp_unexpected_type");
        return;
    }

    // A completed hello already has its record; every further request
    // datagram for it is a credit for one more response fragment.
    if (auto rit = records_.find(header.conn_id); rit != records_.end()) {
        rit->second.requests_seen += 1;
        release_fragments(rit->first, rit->second, dg.peer, now, emit);
        return;
    }

    auto result = buffer_.insert(header, decoded.value().payload, now);
    using Kind = reassembly::InsertResult::Kind;
    switch (result.kind) {
        case Kind::Rejected:
            emit.metric(std::string("server.udp_rejected.") + to_string(result.reason));
            return;
        case Kind::PadRecorded:
        case Kind::Incomplete:
            return;
        case Kind::Complete:
            break;
    }

    // Fully formed ClientHello: compute the response, then answer as credits
    // allow. The reassembly entry is dropped; the record carries on.
    const std::size_t credits = buffer_.requests_seen(header.conn_id);
    buffer_.drop(header.conn_id);

    auto engine = factory_();
    udp_engine_invocations_ += 1;
    auto response = engine->server_response(result.message);
    if (!response) {
        emit.metric("server.hello_rejected");
        return;
    }

    ConnRecord record;
    record.response_fragments = fragment::fragment_message(
        *response, header.conn_id, wire::FragType::RespFrag, config_.datagram_budget);
    record.requests_seen = credits;
    record.engine = std::move(engine);
    record.created_at = now;
    record.response_ready_at = now + config_.compute_delay;
    trace(now, "conn " + header.conn_id.hex() + " hello complete, " +
                   std::to_string(record.response_fragments.size()) + " response fragments, " +
                   std::to_string(credits) + " credits");

    auto [it, inserted] = records_.emplace(header.conn_id, std::move(record));
    release_fragments(it->first, it->second, dg.peer, now, emit);
}

void Engine::release_fragments(const wire::ConnectionId& conn_id, ConnRecord& record, PeerId peer,
                               TimePoint now, Emit& emit) {
    (void)conn_id;
    while (record.fragments_sent < record.requests_seen &&
           record.fragments_sent < record.response_fragments.size()) {
        const Bytes& dg = record.response_fragments[record.fragments_sent];
        record.fragments_sent += 1;
        amplification_.udp_pkts_out += 1;
        amplification_.udp_bytes_out += dg.size();
        // Responses go to the source of the most recent request datagram.
        emit.add(SendUdpDatagram{peer, dg, std::max(now, record.response_ready_at)});
    }
}

void Engine::on_tcp_accepted(const TcpAccepted& ev, TimePoint, Emit&) {
    if (streams_.contains(ev.stream)) throw ProtocolViolation("TcpAccepted stream id reused");
    streams_.emplace(ev.stream, StreamState{});
}

void Engine::on_tcp_bytes(const TcpBytes& ev, TimePoint now, Emit& emit) {
    auto it = streams_.find(ev.stream);
    if (it == streams_.end()) throw ProtocolViolation("TcpBytes for unknown stream");
    auto& state = it->second;
    state.buffer.insert(state.buffer.end(), ev.data.begin(), ev.data.end());
    process_stream(ev.stream, state, now, emit);
}

void Engine::process_stream(StreamId stream, StreamState& state, TimePoint now, Emit& emit) {
    bool progress = true;
    while (progress && !state.buffer.empty()) {
        progress = false;
        switch (state.stage) {
            case StreamStage::ExpectPreface: {
                if (state.buffer[0] == wire::kPrefaceMagic[0] &&
                    state.buffer.size() < wire::kPrefaceSize) {
                    return;  // wait for the rest of the preface
                }
                auto decision = wire::decode_tcp_preface(state.buffer);
                if (std::holds_alternative<wire::VanillaTls>(decision)) {
                    state.stage = StreamStage::VanillaHello;
                    state.path = SessionPath::Vanilla;
                    state.vanilla_engine = factory_();
                    progress = true;
                    break;
                }
                if (std::holds_alternative<wire::WireError>(decision)) {
                    emit.metric("server.preface_malformed");
                    close_stream(stream, emit);
                    return;
                }
                const auto& attach = std::get<wire::TurboAttach>(decision);
                auto rit = records_.find(attach.conn_id);
                if (rit == records_.end()) {
                    // Preface without UDP state: nothing to attach to.
                    emit.metric("server.unknown_conn_id");
                    close_stream(stream, emit);
                    return;
                }
                state.record = std::move(rit->second);
                state.record.attached = true;
                state.conn_id = attach.conn_id;
                state.path = SessionPath::Turbo;
                state.stage = StreamStage::TurboFinish;
                records_.erase(rit);
                state.buffer.erase(state.buffer.begin(),
                                   state.buffer.begin() + wire::kPrefaceSize);
                trace(now, "conn " + attach.conn_id.hex() + " attached to stream " +
                               std::to_string(stream));
                progress = true;
                break;
            }
            case StreamStage::VanillaHello: {
                auto total = handshake::flight_length(state.buffer);
                if (!total || state.buffer.size() < *total) return;
                Bytes flight(state.buffer.begin(),
                             state.buffer.begin() + static_cast<std::ptrdiff_t>(*total));
                state.buffer.erase(state.buffer.begin(),
                                   state.buffer.begin() + static_cast<std::ptrdiff_t>(*total));
                auto response = state.vanilla_engine->server_response(flight);
                if (!response) {
                    emit.metric("server.hello_rejected");
                    close_stream(stream, emit);
                    return;
                }
                emit.add(SendTcpBytes{stream, std::move(*response),
                                      now + config_.compute_delay});
                state.stage = StreamStage::VanillaFinish;
                progress = true;
                break;
            }
            case StreamStage::VanillaFinish:
            case StreamStage::TurboFinish: {
                auto total = handshake::flight_length(state.buffer);
                if (!total || state.buffer.size() < *total) return;
                Bytes flight(state.buffer.begin(),
                             state.buffer.begin() + static_cast<std::ptrdiff_t>(*total));
                state.buffer.erase(state.buffer.begin(),
                                   state.buffer.begin() + static_cast<std::ptrdiff_t>(*total));
                auto* engine = state.stage == StreamStage::TurboFinish
                                   ? state.record.engine.get()
                                   : state.vanilla_engine.get();
                if (engine == nullptr ||
                    engine->server_verify_finish(flight) != handshake::VerifyResult::Accept) {
                    emit.metric("server.finish_rejected");
                    close_stream(stream, emit);
                    return;
                }
                const bool turbo = state.stage == StreamStage::TurboFinish;
                state.stage = StreamStage::Established;
                // Response fragments are no longer needed once the stream is up.
                state.record.response_fragments.clear();
                emit.observe(SessionEstablished{stream, state.path, state.conn_id});
                trace(now, std::string("stream ") + std::to_string(stream) + " established via " +
                               (turbo ? "turbo" : "vanilla/fallback"));
                progress = true;
                break;
            }
            case StreamStage::Established: {
                Bytes app = std::move(state.buffer);
                state.buffer.clear();
                emit.observe(AppData{stream, std::move(app)});
                return;
            }
        }
    }
}

void Engine::close_stream(StreamId stream, Emit& emit) {
    streams_.erase(stream);
    emit.add(CloseTcp{stream});
}

void Engine::on_tick(TimePoint now, Emit& emit) {
    const std::size_t evicted = buffer_.evict_expired(now);
    if (evicted > 0) emit.metric("server.entries_evicted", static_cast<std::int64_t>(evicted));

    std::size_t dropped = 0;
    for (auto it = records_.begin(); it != records_.end();) {
        if (now - it->second.created_at > config_.record_ttl) {
            it = records_.erase(it);
            ++dropped;
        } else {
            ++it;
        }
    }
    if (dropped > 0) emit.metric("server.records_expired", static_cast<std::int64_t>(dropped));
}

void Engine::trace(TimePoint now, const std::string& line) {
    if (!trace_) return;
    trace_("t=" + std::to_string(now.count()) + "ns " + line);
}

}  // namespace turbotls::server
