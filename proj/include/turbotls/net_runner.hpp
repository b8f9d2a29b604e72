// Real-socket runners for the demo CLI and the loopback tests: a poll-driven
// server loop hosting the server engine, and a blocking single-session client
// that drives the client engine over UDP + TCP on actual sockets.
#pragma once

#include <atomic>
#include <thread>

#include "turbotls/client_engine.hpp"
#include "turbotls/server_engine.hpp"

namespace turbotls::net {

struct ServerOptions {
    std::string bind_host = "127.0.0.1";
    std::uint16_t udp_port = 0;  // 0 picks an ephemeral port
    std::uint16_t tcp_port = 0;
    handshake::MockSuite suite = handshake::MockSuite::ec();
    server::Config engine;
    bool echo = true;  // application layer echoes received bytes
    bool verbose = false;
};

class ServerRunner {
public:
    explicit ServerRunner(ServerOptions options);
    ~ServerRunner();

    ServerRunner(const ServerRunner&) = delete;
    ServerRunner& operator=(const ServerRunner&) = delete;

    // Binds both sockets and spawns the event loop; throws std::runtime_error
    // on bind failure.
    void start();
    void stop();

    std::uint16_t udp_port() const { return udp_port_; }
    std::uint16_t tcp_port() const { return tcp_port_; }
    std::uint64_t sessions_established() const { return sessions_established_.load(); }

private:
    struct PeerTable;
    void loop();
    void handle_actions(const std::vector<server::Action>& actions);
    void log(const std::string& line) const;

    ServerOptions options_;
    int udp_fd_ = -1;
    int listen_fd_ = -1;
    int wake_fds_[2] = {-1, -1};
    std::uint16_t udp_port_ = 0;
    std::uint16_t tcp_port_ = 0;
    std::unique_ptr<server::Engine> engine_;
    std::unique_ptr<PeerTable> peers_;
    std::unordered_map<server::StreamId, int> stream_fds_;
    std::unordered_map<int, server::StreamId> fd_streams_;
    std::thread thread_;
    std::atomic<bool> running_{false};
    std::atomic<std::uint64_t> sessions_established_{0};
};

struct ClientOptions {
    std::string host = "127.0.0.1";
    std::uint16_t udp_port = 0;
    std::uint16_t tcp_port = 0;
    bool use_turbo = true;
    handshake::MockSuite suite = handshake::MockSuite::ec();
    client::Config config;  // grace, budget; mode is set from use_turbo
    Bytes app_data = to_bytes("ping");
    Duration timeout = std::chrono::seconds(5);
    std::uint64_t seed = 0;  // 0 draws a random engine seed
    bool verbose = false;

    bool echo_expected() const { return !app_data.empty(); }
};

struct ClientOutcome {
    bool established = false;
    client::Path path = client::Path::None;
    Duration time_to_established{0};
    Bytes echoed;
    std::string error;
};

// Runs one session to establishment plus the application echo (when app_data
// is non-empty), or until the timeout.
ClientOutcome run_client(const ClientOptions& options);

}  // namespace turbotls::net
