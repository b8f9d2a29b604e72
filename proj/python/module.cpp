// Python bindings for the main operations: wire codecs, fragmentation,
// reassembly, HTTPS-RR discovery, and the network simulator.
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "turbotls/discovery.hpp"
#include "turbotls/fragment.hpp"
#include "turbotls/handshake.hpp"
#include "turbotls/netsim.hpp"
#include "turbotls/reassembly.hpp"
#include "turbotls/wire.hpp"

namespace py = pybind11;
using namespace turbotls;

namespace {

Bytes to_vec(const py::bytes& b) {
    const std::string s = b;
    return Bytes(s.begin(), s.end());
}

py::bytes to_py(BytesView b) {
    return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
}

wire::ConnectionId conn_from_bytes(const py::bytes& raw) {
    auto id = wire::ConnectionId::from_bytes(to_vec(raw));
    if (!id) throw py::value_error("connection id must be exactly 12 bytes");
    return *id;
}

netsim::Protocol protocol_from_name(const std::string& name) {
    if (name == "turbo" || name == "turbotls") return netsim::Protocol::TurboTls;
    if (name == "vanilla" || name == "tls" || name == "vanilla_tls")
        return netsim::Protocol::VanillaTls;
    throw py::value_error("protocol must be 'turbo' or 'vanilla'");
}

}  // namespace

PYBIND11_MODULE(_turbotls, m) {
    m.doc() = "TurboTLS delivery-layer toolkit: wire codecs, request-based "
              "fragmentation, bounded reassembly, discovery, and the deterministic "
              "network simulator";
    m.attr("__version__") = "0.1.0";
    m.attr("FRAGMENT_HEADER_SIZE") = wire::kFragmentHeaderSize;
    m.attr("PREFACE_SIZE") = wire::kPrefaceSize;
    m.attr("CONNECTION_ID_SIZE") = wire::kConnectionIdSize;
    m.attr("TURBO_FLAG_KEY") = discovery::kTurboTlsFlagKey;
    m.attr("DEFAULT_DATAGRAM_BUDGET") = fragment::kDefaultDatagramBudget;

    py::class_<wire::ConnectionId>(m, "ConnectionId")
        .def(py::init(&conn_from_bytes), py::arg("raw"))
        .def_static("random",
                    [](std::uint64_t seed) {
                        Rng rng(seed);
                        return wire::ConnectionId::random(rng);
                    },
                    py::arg("seed"))
        .def_property_readonly("bytes",
                               [](const wire::ConnectionId& id) { return to_py(id.bytes); })
        .def("hex", &wire::ConnectionId::hex)
        .def("__eq__", [](const wire::ConnectionId& a,
                          const wire::ConnectionId& b) { return a == b; })
        .def("__hash__",
             [](const wire::ConnectionId& id) { return wire::ConnectionIdHash{}(id); })
        .def("__repr__",
             [](const wire::ConnectionId& id) { return "ConnectionId(" + id.hex() + ")"; });

    py::enum_<wire::FragType>(m, "FragType")
        .value("CH_FRAG", wire::FragType::ChFrag)
        .value("PAD_REQ", wire::FragType::PadReq)
        .value("RESP_FRAG", wire::FragType::RespFrag);

    py::class_<wire::FragmentHeader>(m, "FragmentHeader")
        .def(py::init([](wire::FragType type, const wire::ConnectionId& conn_id,
                         std::uint32_t total_len, std::uint32_t offset) {
                 wire::FragmentHeader h;
                 h.type = type;
                 h.conn_id = conn_id;
                 h.total_len = total_len;
                 h.offset = offset;
                 return h;
             }),
             py::arg("type"), py::arg("conn_id"), py::arg("total_len"), py::arg("offset"))
        .def_readwrite("type", &wire::FragmentHeader::type)
        .def_readwrite("conn_id", &wire::FragmentHeader::conn_id)
        .def_readwrite("total_len", &wire::FragmentHeader::total_len)
        .def_readwrite("offset", &wire::FragmentHeader::offset)
        .def_readonly("version", &wire::FragmentHeader::version);

    m.def("encode_fragment",
          [](const wire::FragmentHeader& header, const py::bytes& payload) {
              return to_py(wire::encode_fragment(header, to_vec(payload)));
          },
          py::arg("header"), py::arg("payload"));
    m.def("decode_fragment",
          [](const py::bytes& datagram) {
              auto r = wire::decode_fragment(to_vec(datagram));
              if (!r.ok()) throw py::value_error(wire::to_string(r.error()));
              return py::make_tuple(r.value().header, to_py(r.value().payload));
          },
          py::arg("datagram"), "Returns (header, payload); raises ValueError on bad input.");
    m.def("encode_tcp_preface",
          [](const wire::ConnectionId& conn_id) { return to_py(wire::encode_tcp_preface(conn_id)); },
          py::arg("conn_id"));
    m.def("decode_tcp_preface",
          [](const py::bytes& prefix) -> py::object {
              auto decision = wire::decode_tcp_preface(to_vec(prefix));
              if (std::holds_alternative<wire::VanillaTls>(decision)) return py::none();
              if (const auto* err = std::get_if<wire::WireError>(&decision)) {
                  throw py::value_error(wire::to_string(*err));
              }
              return py::cast(std::get<wire::TurboAttach>(decision).conn_id);
          },
          py::arg("stream_prefix"),
          "Returns the attached ConnectionId, or None for a vanilla TLS stream.");

    m.def("fragment_message",
          [](const py::bytes& message, const wire::ConnectionId& conn_id, wire::FragType type,
             std::size_t budget) {
              auto datagrams = fragment::fragment_message(to_vec(message), conn_id, type, budget);
              py::list out;
              for (const auto& dg : datagrams) out.append(to_py(dg));
              return out;
          },
          py::arg("message"), py::arg("conn_id"), py::arg("type"),
          py::arg("budget") = fragment::kDefaultDatagramBudget);
    m.def("predict_response_fragments", &fragment::predict_response_fragments,
          py::arg("estimated_response_len"), py::arg("budget") = fragment::kDefaultDatagramBudget);

    py::class_<fragment::FragmentPlan>(m, "FragmentPlan")
        .def_property_readonly("ch_fragments",
                               [](const fragment::FragmentPlan& plan) {
                                   py::list out;
                                   for (const auto& dg : plan.ch_fragments) out.append(to_py(dg));
                                   return out;
                               })
        .def_property_readonly("pad_requests",
                               [](const fragment::FragmentPlan& plan) {
                                   py::list out;
                                   for (const auto& dg : plan.pad_requests) out.append(to_py(dg));
                                   return out;
                               })
        .def_readonly("predicted_response_fragments",
                      &fragment::FragmentPlan::predicted_response_fragments)
        .def_property_readonly("request_count", &fragment::FragmentPlan::request_count)
        .def_property_readonly("total_bytes", &fragment::FragmentPlan::total_bytes);

    m.def("plan_request_flight",
          [](const py::bytes& client_hello, const wire::ConnectionId& conn_id, std::size_t budget,
             std::size_t estimated_response_len, std::size_t pad_margin) {
              return fragment::plan_request_flight(to_vec(client_hello), conn_id, budget,
                                                   estimated_response_len, pad_margin);
          },
          py::arg("client_hello"), py::arg("conn_id"),
          py::arg("budget") = fragment::kDefaultDatagramBudget,
          py::arg("estimated_response_len"), py::arg("pad_margin") = fragment::kDefaultPadMargin);

    py::class_<reassembly::BufferConfig>(m, "BufferConfig")
        .def(py::init<>())
        .def_readwrite("max_total_bytes", &reassembly::BufferConfig::max_total_bytes)
        .def_readwrite("max_entries", &reassembly::BufferConfig::max_entries)
        .def_readwrite("max_entry_bytes", &reassembly::BufferConfig::max_entry_bytes)
        .def_property(
            "entry_ttl_ms",
            [](const reassembly::BufferConfig& c) { return to_ms(c.entry_ttl); },
            [](reassembly::BufferConfig& c, double ms) { c.entry_ttl = from_ms(ms); });

    py::class_<reassembly::InsertResult>(m, "InsertResult")
        .def_property_readonly("kind",
                               [](const reassembly::InsertResult& r) -> std::string {
                                   using Kind = reassembly::InsertResult::Kind;
                                   switch (r.kind) {
                                       case Kind::Incomplete: return "incomplete";
                                       case Kind::Complete: return "complete";
                                       case Kind::PadRecorded: return "pad_recorded";
                                       case Kind::Rejected: return "rejected";
                                   }
                                   return "?";
                               })
        .def_property_readonly("message",
                               [](const reassembly::InsertResult& r) -> py::object {
                                   if (r.kind != reassembly::InsertResult::Kind::Complete)
                                       return py::none();
                                   return to_py(r.message);
                               })
        .def_property_readonly("reason",
                               [](const reassembly::InsertResult& r) -> py::object {
                                   if (r.kind != reassembly::InsertResult::Kind::Rejected)
                                       return py::none();
                                   return py::cast(std::string(to_string(r.reason)));
                               });

    py::class_<reassembly::ReassemblyBuffer>(m, "ReassemblyBuffer")
        .def(py::init<reassembly::BufferConfig>(), py::arg("config") = reassembly::BufferConfig{})
        .def("insert",
             [](reassembly::ReassemblyBuffer& buffer, const wire::FragmentHeader& header,
                const py::bytes& payload, double now_ms) {
                 return buffer.insert(header, to_vec(payload), from_ms(now_ms));
             },
             py::arg("header"), py::arg("payload"), py::arg("now_ms") = 0.0)
        .def("evict_expired",
             [](reassembly::ReassemblyBuffer& buffer, double now_ms) {
                 return buffer.evict_expired(from_ms(now_ms));
             },
             py::arg("now_ms"))
        .def("requests_seen", &reassembly::ReassemblyBuffer::requests_seen, py::arg("conn_id"))
        .def("drop", &reassembly::ReassemblyBuffer::drop, py::arg("conn_id"))
        .def_property_readonly("memory_in_use", &reassembly::ReassemblyBuffer::memory_in_use)
        .def_property_readonly("entry_count", &reassembly::ReassemblyBuffer::entry_count);

    py::class_<handshake::MockSuite>(m, "MockSuite")
        .def_static("ec", &handshake::MockSuite::ec)
        .def_static("pq", &handshake::MockSuite::pq)
        .def_static("named",
                    [](const std::string& name) {
                        auto suite = handshake::MockSuite::named(name);
                        if (!suite) throw py::value_error("unknown suite: " + name);
                        return *suite;
                    })
        .def_property_readonly("name", &handshake::MockSuite::name)
        .def_readwrite("ch_len", &handshake::MockSuite::ch_len)
        .def_readwrite("response_len", &handshake::MockSuite::response_len)
        .def_readwrite("finish_len", &handshake::MockSuite::finish_len);

    py::class_<discovery::HttpsRecord>(m, "HttpsRecord")
        .def(py::init<>())
        .def_readwrite("priority", &discovery::HttpsRecord::priority)
        .def_readwrite("target_name", &discovery::HttpsRecord::target_name)
        .def("add_turbo_flag", &discovery::HttpsRecord::add_turbo_flag)
        .def("add_param",
             [](discovery::HttpsRecord& record, std::uint16_t key, const py::bytes& value) {
                 record.svc_params.emplace_back(key, to_vec(value));
             },
             py::arg("key"), py::arg("value"))
        .def_property_readonly("params", [](const discovery::HttpsRecord& record) {
            py::list out;
            for (const auto& [key, value] : record.svc_params) {
                out.append(py::make_tuple(key, to_py(value)));
            }
            return out;
        });

    m.def("encode_https_rdata",
          [](const discovery::HttpsRecord& record) {
              auto r = discovery::encode_https_rdata(record);
              if (!r.ok()) throw py::value_error(discovery::to_string(r.error()));
              return to_py(r.value());
          },
          py::arg("record"));
    m.def("decode_https_rdata",
          [](const py::bytes& rdata) {
              auto r = discovery::decode_https_rdata(to_vec(rdata));
              if (!r.ok()) throw py::value_error(discovery::to_string(r.error()));
              return r.value();
          },
          py::arg("rdata"));
    m.def("supports_turbotls", &discovery::supports_turbotls, py::arg("record"));

    py::class_<discovery::CapabilityCache>(m, "CapabilityCache")
        .def(py::init<>())
        .def("store",
             [](discovery::CapabilityCache& cache, const std::string& domain, bool supports,
                double now_ms, double ttl_ms) {
                 cache.store(domain, supports, from_ms(now_ms), from_ms(ttl_ms));
             },
             py::arg("domain"), py::arg("supports_turbo"), py::arg("now_ms"), py::arg("ttl_ms"))
        .def("lookup",
             [](const discovery::CapabilityCache& cache, const std::string& domain,
                double now_ms) -> py::object {
                 auto hit = cache.lookup(domain, from_ms(now_ms));
                 if (!hit) return py::none();
                 return py::cast(*hit);
             },
             py::arg("domain"), py::arg("now_ms"))
        .def("serialize", &discovery::CapabilityCache::serialize)
        .def_static("deserialize", &discovery::CapabilityCache::deserialize, py::arg("text"))
        .def_property_readonly("size", &discovery::CapabilityCache::size);

    py::class_<netsim::Scenario>(m, "Scenario")
        .def(py::init<>())
        .def_property(
            "protocol",
            [](const netsim::Scenario& s) { return std::string(netsim::to_string(s.protocol)); },
            [](netsim::Scenario& s, const std::string& name) {
                s.protocol = protocol_from_name(name);
            })
        .def_readwrite("suite", &netsim::Scenario::suite)
        .def_property(
            "rtt_ms", [](const netsim::Scenario& s) { return to_ms(2 * s.link.one_way_delay); },
            [](netsim::Scenario& s, double ms) { s.link.one_way_delay = from_ms(ms / 2.0); })
        .def_property(
            "udp_loss", [](const netsim::Scenario& s) { return s.link.udp_loss_prob; },
            [](netsim::Scenario& s, double p) { s.link.udp_loss_prob = p; })
        .def_property(
            "jitter_ms", [](const netsim::Scenario& s) { return to_ms(s.link.reorder_jitter); },
            [](netsim::Scenario& s, double ms) { s.link.reorder_jitter = from_ms(ms); })
        .def_property(
            "seed", [](const netsim::Scenario& s) { return s.link.seed; },
            [](netsim::Scenario& s, std::uint64_t seed) { s.link.seed = seed; })
        .def_readwrite("sessions", &netsim::Scenario::sessions)
        .def_property(
            "grace_ms", [](const netsim::Scenario& s) { return to_ms(s.client.grace_delay); },
            [](netsim::Scenario& s, double ms) { s.client.grace_delay = from_ms(ms); })
        .def_property(
            "grace_rtt_fraction",
            [](const netsim::Scenario& s) { return s.client.grace_rtt_fraction; },
            [](netsim::Scenario& s, double f) { s.client.grace_rtt_fraction = f; })
        .def_property(
            "budget", [](const netsim::Scenario& s) { return s.client.datagram_budget; },
            [](netsim::Scenario& s, std::size_t b) {
                s.client.datagram_budget = b;
                s.server.datagram_budget = b;
            })
        .def_property(
            "pad_margin", [](const netsim::Scenario& s) { return s.client.pad_margin; },
            [](netsim::Scenario& s, std::size_t margin) { s.client.pad_margin = margin; })
        .def_property(
            "compute_ms", [](const netsim::Scenario& s) { return to_ms(s.server.compute_delay); },
            [](netsim::Scenario& s, double ms) { s.server.compute_delay = from_ms(ms); })
        .def_readwrite("turbo_advertised", &netsim::Scenario::turbo_advertised)
        .def_property(
            "https_rr_rdata",
            [](const netsim::Scenario& s) -> py::object {
                if (!s.https_rr_rdata) return py::none();
                return to_py(*s.https_rr_rdata);
            },
            [](netsim::Scenario& s, py::object value) {
                if (value.is_none()) {
                    s.https_rr_rdata.reset();
                } else {
                    s.https_rr_rdata = to_vec(py::cast<py::bytes>(value));
                }
            })
        .def_static("from_string", &netsim::Scenario::from_string, py::arg("text"))
        .def_static("from_file", &netsim::Scenario::from_file, py::arg("path"))
        .def("to_key_values", &netsim::Scenario::to_key_values)
        .def("validate", &netsim::Scenario::validate);

    py::class_<netsim::SessionStats>(m, "SessionStats")
        .def_readonly("established", &netsim::SessionStats::established)
        .def_property_readonly("path",
                               [](const netsim::SessionStats& s) {
                                   return std::string(client::to_string(s.path));
                               })
        .def_property_readonly("ttfab_ms",
                               [](const netsim::SessionStats& s) {
                                   return to_ms(s.time_to_first_app_byte);
                               })
        .def_property_readonly("ttfrb_ms",
                               [](const netsim::SessionStats& s) {
                                   return to_ms(s.time_to_first_response_byte);
                               })
        .def_readonly("requests_sent", &netsim::SessionStats::requests_sent)
        .def_readonly("responses_expected", &netsim::SessionStats::responses_expected);

    py::class_<netsim::RunMetrics>(m, "RunMetrics")
        .def_readonly("sessions", &netsim::RunMetrics::sessions)
        .def_readonly("fallback_count", &netsim::RunMetrics::fallback_count)
        .def_readonly("turbo_count", &netsim::RunMetrics::turbo_count)
        .def_readonly("vanilla_count", &netsim::RunMetrics::vanilla_count)
        .def_readonly("failed_count", &netsim::RunMetrics::failed_count)
        .def_readonly("udp_engine_invocations", &netsim::RunMetrics::udp_engine_invocations)
        .def_property_readonly("udp_pkts_in",
                               [](const netsim::RunMetrics& m) {
                                   return m.amplification.udp_pkts_in;
                               })
        .def_property_readonly("udp_pkts_out",
                               [](const netsim::RunMetrics& m) {
                                   return m.amplification.udp_pkts_out;
                               })
        .def_property_readonly("udp_bytes_in",
                               [](const netsim::RunMetrics& m) {
                                   return m.amplification.udp_bytes_in;
                               })
        .def_property_readonly("udp_bytes_out",
                               [](const netsim::RunMetrics& m) {
                                   return m.amplification.udp_bytes_out;
                               })
        .def("ttfab_percentile_ms",
             [](const netsim::RunMetrics& m, double p) { return to_ms(m.ttfab_percentile(p)); },
             py::arg("p"))
        .def("ttfrb_percentile_ms",
             [](const netsim::RunMetrics& m, double p) { return to_ms(m.ttfrb_percentile(p)); },
             py::arg("p"));

    m.def("run_scenario", &netsim::run_scenario, py::arg("scenario"),
          py::call_guard<py::gil_scoped_release>());
    m.def("compare",
          [](const std::string& a, const std::string& b, const netsim::Scenario& base) {
              auto rows = netsim::compare(protocol_from_name(a), protocol_from_name(b), base);
              py::list out;
              for (const auto& row : rows) {
                  py::dict d;
                  d["metric"] = row.metric;
                  d["a_us"] = row.a_us;
                  d["b_us"] = row.b_us;
                  d["ratio"] = row.ratio;
                  out.append(d);
              }
              return out;
          },
          py::arg("a"), py::arg("b"), py::arg("scenario"));
    m.def("csv_header", &netsim::csv_header);
    m.def("csv_row", &netsim::csv_row, py::arg("scenario"), py::arg("metrics"));
}
