#include "turbotls/fragment.hpp"

#include <cassert>

namespace turbotls::fragment {

std::size_t payload_capacity(std::size_t datagram_budget) {
    if (datagram_budget <= wire::kFragmentHeaderSize) {
        throw BudgetTooSmall("datagram budget must exceed the 22-byte header");
    }
    return datagram_budget - wire::kFragmentHeaderSize;
}

std::vector<Bytes> fragment_message(BytesView message, const wire::ConnectionId& conn_id,
                                    wire::FragType type, std::size_t datagram_budget) {
    const std::size_t capacity = payload_capacity(datagram_budget);
    if (message.empty()) throw std::invalid_argument("cannot fragment an empty message");
    if (message.size() > 0xffffffffu) throw std::invalid_argument("message exceeds 2^32-1 bytes");

    std::vector<Bytes> out;
    out.reserve((message.size() + capacity - 1) / capacity);
    for (std::size_t off = 0; off < message.size(); off += capacity) {
        const std::size_t len = std::min(capacity, message.size() - off);
        wire::FragmentHeader h;
        h.type = type;
        h.conn_id = conn_id;
        h.total_len = static_cast<std::uint32_t>(message.size());
        h.offset = static_cast<std::uint32_t>(off);
        out.push_back(wire::encode_fragment(h, message.subspan(off, len)));
    }
    return out;
}

std::size_t predict_response_fragments(std::size_t estimated_response_len,
                                       std::size_t datagram_budget) {
    const std::size_t capacity = payload_capacity(datagram_budget);
    if (estimated_response_len == 0) {
        throw std::invalid_argument("response estimate must be positive");
    }
    return (estimated_response_len + capacity - 1) / capacity;
}

std::size_t FragmentPlan::total_bytes() const {
    std::size_t n = 0;
    for (const auto& d : ch_fragments) n += d.size();
    for (const auto& d : pad_requests) n += d.size();
    return n;
}

FragmentPlan plan_request_flight(BytesView client_hello, const wire::ConnectionId& conn_id,
                                 std::size_t datagram_budget, std::size_t estimated_response_len,
                                 std::size_t pad_margin) {
    FragmentPlan plan;
    plan.ch_fragments =
        fragment_message(client_hello, conn_id, wire::FragType::ChFrag, datagram_budget);
    plan.predicted_response_fragments =
        predict_response_fragments(estimated_response_len, datagram_budget);

    const std::size_t ch = plan.ch_fragments.size();
    const std::size_t shortfall =
        plan.predicted_response_fragments > ch ? plan.predicted_response_fragments - ch : 0;
    const std::size_t pads = shortfall + pad_margin;
    plan.pad_requests.reserve(pads);
    for (std::size_t i = 0; i < pads; ++i) {
        wire::FragmentHeader h;
        h.type = wire::FragType::PadReq;
        h.conn_id = conn_id;
        h.total_len = 0;
        h.offset = static_cast<std::uint32_t>(i);  // informational pad index
        plan.pad_requests.push_back(wire::encode_fragment(h, {}));
    }
    // One response datagram per request datagram: the flight must cover the
    // predicted response count.
    assert(plan.request_count() >= plan.predicted_response_fragments);
    return plan;
}

}  // namespace turbotls::fragment
