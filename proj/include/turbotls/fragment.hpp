// Request-based fragmentation: splitting flights into datagrams and planning
// the padded request flight that reserves one response datagram per request.
#pragma once

#include <stdexcept>
#include <vector>

#include "turbotls/wire.hpp"

namespace turbotls::fragment {

struct BudgetTooSmall : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t kDefaultDatagramBudget = 1472;  // 1500 MTU - IP/UDP headers
inline constexpr std::size_t kDefaultPadMargin = 1;

// Payload bytes available per datagram. Throws BudgetTooSmall when the budget
// cannot fit the header plus one payload byte.
std::size_t payload_capacity(std::size_t datagram_budget);

// Splits `message` into encoded datagrams with contiguous offsets starting at
// zero. All but the last payload are exactly payload_capacity(budget) bytes.
std::vector<Bytes> fragment_message(BytesView message, const wire::ConnectionId& conn_id,
                                    wire::FragType type, std::size_t datagram_budget);

// ceil(estimated_response_len / payload_capacity(budget)).
std::size_t predict_response_fragments(std::size_t estimated_response_len,
                                       std::size_t datagram_budget);

struct FragmentPlan {
    std::vector<Bytes> ch_fragments;  // encoded ChFrag datagrams
    std::vector<Bytes> pad_requests;  // encoded PadReq datagrams
    std::size_t predicted_response_fragments = 0;

    std::size_t request_count() const { return ch_fragments.size() + pad_requests.size(); }
    std::size_t total_bytes() const;
};

// pad count = max(0, predicted - ch_fragments) + pad_margin, so the total
// request count always covers the predicted response fragments.
FragmentPlan plan_request_flight(BytesView client_hello, const wire::ConnectionId& conn_id,
                                 std::size_t datagram_budget, std::size_t estimated_response_len,
                                 std::size_t pad_margin = kDefaultPadMargin);

}  // namespace turbotls::fragment
