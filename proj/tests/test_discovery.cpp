#include <algorithm>

#include "doctest.h"
#include "turbotls/discovery.hpp"

using namespace turbotls;
using namespace turbotls::discovery;

namespace {

constexpr TimePoint at_s(std::int64_t s) { return TimePoint{s * 1'000'000'000}; }

}  // namespace

TEST_CASE("single-flag record golden vector") {
    HttpsRecord record;
    record.priority = 1;
    record.target_name = ".";
    record.add_turbo_flag();

    auto encoded = encode_https_rdata(record);
    REQUIRE(encoded.ok());
    // Pinned in docs/https-rr.md.
    CHECK(hex_encode(encoded.value()) == "000100ff000000");

    auto decoded = decode_https_rdata(encoded.value());
    REQUIRE(decoded.ok());
    CHECK(decoded.value().priority == 1);
    CHECK(decoded.value().target_name == ".");
    CHECK(supports_turbotls(decoded.value()));
}

TEST_CASE("record with alpn-style param and flag") {
    HttpsRecord record;
    record.priority = 16;
    record.target_name = "svc.example.com";
    record.svc_params.emplace_back(1, Bytes{0x02, 'h', '2'});  // alpn, opaque here
    record.add_turbo_flag();

    auto encoded = encode_https_rdata(record);
    REQUIRE(encoded.ok());
    CHECK(hex_encode(encoded.value()) ==
          "001003737663076578616d706c6503636f6d0000010003026832ff000000");

    auto decoded = decode_https_rdata(encoded.value());
    REQUIRE(decoded.ok());
    CHECK(decoded.value().target_name == "svc.example.com");
    REQUIRE(decoded.value().svc_params.size() == 2);
    CHECK(decoded.value().svc_params[0].first == 1);
    CHECK(decoded.value().svc_params[0].second == Bytes{0x02, 'h', '2'});
    CHECK(supports_turbotls(decoded.value()));
}

TEST_CASE("record without the flag does not support turbo") {
    HttpsRecord record;
    record.svc_params.emplace_back(1, Bytes{0x02, 'h', '2'});
    auto encoded = encode_https_rdata(record);
    REQUIRE(encoded.ok());
    auto decoded = decode_https_rdata(encoded.value());
    REQUIRE(decoded.ok());
    CHECK(!supports_turbotls(decoded.value()));
}

TEST_CASE("unsorted or duplicate params are rejected") {
    HttpsRecord record;
    record.svc_params.emplace_back(kTurboTlsFlagKey, Bytes{});
    record.svc_params.emplace_back(1, Bytes{0x01, 'x'});
    auto encoded = encode_https_rdata(record);
    REQUIRE(!encoded.ok());
    CHECK(encoded.error() == RecordError::UnsortedParams);

    // Same rule on decode: craft key 2 before key 1.
    Bytes wire = {0x00, 0x01, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00};
    auto decoded = decode_https_rdata(wire);
    REQUIRE(!decoded.ok());
    CHECK(decoded.error() == RecordError::UnsortedParams);

    HttpsRecord dup;
    dup.add_turbo_flag();
    dup.add_turbo_flag();
    auto dup_encoded = encode_https_rdata(dup);
    REQUIRE(!dup_encoded.ok());
    CHECK(dup_encoded.error() == RecordError::UnsortedParams);
}

TEST_CASE("truncation and bad names are rejected") {
    SUBCASE("rdata shorter than priority plus root") {
        CHECK(!decode_https_rdata(Bytes{0x00, 0x01}).ok());
    }
    SUBCASE("param value extends past the end") {
        Bytes wire = {0x00, 0x01, 0x00, 0xff, 0x00, 0x00, 0x09, 0x01};
        auto decoded = decode_https_rdata(wire);
        REQUIRE(!decoded.ok());
        CHECK(decoded.error() == RecordError::Truncated);
    }
    SUBCASE("name label runs past the end") {
        Bytes wire = {0x00, 0x01, 0x3f, 'a', 'b'};
        auto decoded = decode_https_rdata(wire);
        REQUIRE(!decoded.ok());
        CHECK(decoded.error() == RecordError::Truncated);
    }
    SUBCASE("empty label on encode") {
        HttpsRecord record;
        record.target_name = "a..b";
        CHECK(!encode_https_rdata(record).ok());
    }
    SUBCASE("oversized label on encode") {
        HttpsRecord record;
        record.target_name = std::string(64, 'x') + ".com";
        CHECK(!encode_https_rdata(record).ok());
    }
}

TEST_CASE("random records round-trip") {
    Rng rng(21);
    const std::string charset = "abcdefghijklmnopqrstuvwxyz0123456789-";
    for (int i = 0; i < 300; ++i) {
        HttpsRecord record;
        record.priority = static_cast<std::uint16_t>(rng.below(65536));
        const std::size_t labels = rng.below(4);
        if (labels == 0) {
            record.target_name = ".";
        } else {
            std::string name;
            for (std::size_t l = 0; l < labels; ++l) {
                if (l > 0) name.push_back('.');
                const std::size_t len = 1 + rng.below(20);
                for (std::size_t c = 0; c < len; ++c)
                    name.push_back(charset[rng.below(charset.size())]);
            }
            record.target_name = name;
        }
        std::uint32_t key = 0;
        const std::size_t params = rng.below(5);
        for (std::size_t p = 0; p < params; ++p) {
            key += 1 + static_cast<std::uint32_t>(rng.below(20000));
            if (key > 0xffff) break;
            record.svc_params.emplace_back(static_cast<std::uint16_t>(key),
                                           rng.bytes(rng.below(32)));
        }

        auto encoded = encode_https_rdata(record);
        REQUIRE(encoded.ok());
        auto decoded = decode_https_rdata(encoded.value());
        REQUIRE(decoded.ok());
        CHECK(decoded.value().priority == record.priority);
        CHECK(decoded.value().target_name == record.target_name);
        CHECK(decoded.value().svc_params == record.svc_params);
    }
}

TEST_CASE("decode is total under fuzz") {
    Rng rng(22);
    int ok_count = 0;
    for (int i = 0; i < 100000; ++i) {
        Bytes rdata = rng.bytes(rng.below(48));
        auto r = decode_https_rdata(rdata);
        if (r.ok()) ++ok_count;
    }
    CHECK(ok_count >= 0);  // totality: no crash; validity is incidental
}

TEST_CASE("capability cache expiry") {
    CapabilityCache cache;
    cache.store("example.com", true, at_s(0), std::chrono::seconds(60));

    auto hit = cache.lookup("example.com", at_s(59));
    REQUIRE(hit.has_value());
    CHECK(*hit == true);

    CHECK(cache.lookup("example.com", at_s(60)).has_value());   // boundary: age == ttl survives
    CHECK(!cache.lookup("example.com", at_s(61)).has_value());  // expired
    CHECK(!cache.lookup("other.org", at_s(10)).has_value());    // absent

    cache.store("no-turbo.net", false, at_s(0), std::chrono::seconds(60));
    auto negative = cache.lookup("no-turbo.net", at_s(1));
    REQUIRE(negative.has_value());
    CHECK(*negative == false);
}

TEST_CASE("cache persists as line-delimited text") {
    CapabilityCache cache;
    cache.store("example.com", true, at_s(10), std::chrono::seconds(50));
    cache.store("plain.org", false, at_s(10), std::chrono::seconds(50));

    auto restored = CapabilityCache::deserialize(cache.serialize());
    CHECK(restored.size() == 2);
    // Persisted entries keep their absolute expiry (t=60s here).
    auto hit = restored.lookup("example.com", at_s(59));
    REQUIRE(hit.has_value());
    CHECK(*hit == true);
    CHECK(!restored.lookup("example.com", at_s(61)).has_value());
    auto plain = restored.lookup("plain.org", at_s(59));
    REQUIRE(plain.has_value());
    CHECK(*plain == false);
}
