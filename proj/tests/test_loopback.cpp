// Real-socket smoke tests: serve/connect over loopback, turbo and fallback.
#include "doctest.h"
#include "turbotls/net_runner.hpp"

using namespace turbotls;
using namespace turbotls::net;

namespace {

ServerOptions ephemeral_server(handshake::MockSuite suite) {
    ServerOptions options;
    options.suite = suite;
    options.udp_port = 0;
    options.tcp_port = 0;
    return options;
}

ClientOptions client_for(const ServerRunner& server, handshake::MockSuite suite) {
    ClientOptions options;
    options.suite = suite;
    options.udp_port = server.udp_port();
    options.tcp_port = server.tcp_port();
    // Loopback scheduling hiccups should not flip the path under test.
    options.config.grace_delay = std::chrono::milliseconds(250);
    options.config.grace_rtt_fraction = 0.0;
    return options;
}

}  // namespace

TEST_CASE("loopback turbo establishment with echo") {
    for (auto suite : {handshake::MockSuite::ec(), handshake::MockSuite::pq()}) {
        ServerRunner server(ephemeral_server(suite));
        server.start();

        ClientOptions options = client_for(server, suite);
        options.app_data = to_bytes("hello over turbo");
        auto outcome = run_client(options);

        REQUIRE(outcome.established);
        CHECK(outcome.path == client::Path::Turbo);
        CHECK(outcome.echoed == options.app_data);
        server.stop();
        CHECK(server.sessions_established() == 1);
    }
}

TEST_CASE("loopback fallback when the udp path is dead") {
    ServerRunner server(ephemeral_server(handshake::MockSuite::ec()));
    server.start();

    ClientOptions options = client_for(server, handshake::MockSuite::ec());
    // Aim the datagrams at a port nobody owns; the grace timer must route the
    // session over TCP.
    options.udp_port = server.udp_port() == 1 ? 2 : static_cast<std::uint16_t>(1);
    options.config.grace_delay = std::chrono::milliseconds(30);
    options.app_data = to_bytes("fallback echo");
    auto outcome = run_client(options);

    REQUIRE(outcome.established);
    CHECK(outcome.path == client::Path::Fallback);
    CHECK(outcome.echoed == options.app_data);
}

TEST_CASE("loopback vanilla client against the same server") {
    ServerRunner server(ephemeral_server(handshake::MockSuite::ec()));
    server.start();

    ClientOptions options = client_for(server, handshake::MockSuite::ec());
    options.use_turbo = false;
    options.app_data = to_bytes("plain old tls");
    auto outcome = run_client(options);

    REQUIRE(outcome.established);
    CHECK(outcome.path == client::Path::Vanilla);
    CHECK(outcome.echoed == options.app_data);
}

TEST_CASE("repeated loopback connects hold the turbo path") {
    ServerRunner server(ephemeral_server(handshake::MockSuite::pq()));
    server.start();

    int turbo = 0;
    const int attempts = 100;
    for (int i = 0; i < attempts; ++i) {
        ClientOptions options = client_for(server, handshake::MockSuite::pq());
        options.app_data = to_bytes("ping");
        auto outcome = run_client(options);
        REQUIRE(outcome.established);
        turbo += outcome.path == client::Path::Turbo ? 1 : 0;
    }
    // Loopback UDP loss is essentially zero; allow one scheduling fluke.
    CHECK(turbo >= attempts - 1);
}
