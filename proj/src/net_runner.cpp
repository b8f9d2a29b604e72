#include "turbotls/net_runner.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <iostream>
#include <map>
#include <random>
#include <stdexcept>

namespace turbotls::net {

namespace {

TimePoint steady_now() {
    return std::chrono::duration_cast<Duration>(
        std::chrono::steady_clock::now().time_since_epoch());
}

sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        throw std::runtime_error("bad IPv4 address: " + host);
    }
    return addr;
}

int bind_socket(int type, const std::string& host, std::uint16_t port) {
    const int fd = ::socket(AF_INET, type, 0);
    if (fd < 0) throw std::runtime_error("socket() failed");
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = make_addr(host, port);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        ::close(fd);
        throw std::runtime_error("bind failed on " + host + ":" + std::to_string(port) + ": " +
                                 std::strerror(errno));
    }
    return fd;
}

std::uint16_t bound_port(int fd) {
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    return ntohs(addr.sin_port);
}

void set_nonblocking(int fd) {
    ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL, 0) | O_NONBLOCK);
}

bool write_all(int fd, BytesView data) {
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
        if (n > 0) {
            off += static_cast<std::size_t>(n);
            continue;
        }
        if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
            pollfd pfd{fd, POLLOUT, 0};
            ::poll(&pfd, 1, 1000);
            continue;
        }
        if (n < 0 && errno == EINTR) continue;
        return false;
    }
    return true;
}

constexpr std::size_t kMaxDatagram = 65535;

}  // namespace

// Maps datagram source addresses to stable peer ids and back.
struct ServerRunner::PeerTable {
    std::map<std::pair<std::uint32_t, std::uint16_t>, server::PeerId> ids;
    std::vector<sockaddr_in> addrs;

    server::PeerId id_for(const sockaddr_in& addr) {
        const auto key = std::make_pair(addr.sin_addr.s_addr, addr.sin_port);
        auto it = ids.find(key);
        if (it != ids.end()) return it->second;
        const server::PeerId id = addrs.size();
        ids.emplace(key, id);
        addrs.push_back(addr);
        return id;
    }
};

ServerRunner::ServerRunner(ServerOptions options) : options_(std::move(options)) {}

ServerRunner::~ServerRunner() { stop(); }

void ServerRunner::start() {
    udp_fd_ = bind_socket(SOCK_DGRAM, options_.bind_host, options_.udp_port);
    listen_fd_ = bind_socket(SOCK_STREAM, options_.bind_host, options_.tcp_port);
    if (::listen(listen_fd_, 64) != 0) throw std::runtime_error("listen failed");
    udp_port_ = bound_port(udp_fd_);
    tcp_port_ = bound_port(listen_fd_);
    set_nonblocking(udp_fd_);
    set_nonblocking(listen_fd_);
    if (::pipe(wake_fds_) != 0) throw std::runtime_error("pipe failed");

    engine_ = std::make_unique<server::Engine>(
        options_.engine, [suite = options_.suite] { return handshake::mock_engine(suite, 0); });
    if (options_.verbose) {
        engine_->set_trace([](const std::string& line) { std::cerr << "server: " << line << "\n"; });
    }
    peers_ = std::make_unique<PeerTable>();
    running_ = true;
    thread_ = std::thread([this] { loop(); });
}

void ServerRunner::stop() {
    if (!running_.exchange(false)) return;
    const char byte = 0;
    (void)!::write(wake_fds_[1], &byte, 1);
    if (thread_.joinable()) thread_.join();
    for (auto& [stream, fd] : stream_fds_) ::close(fd);
    stream_fds_.clear();
    fd_streams_.clear();
    for (int fd : {udp_fd_, listen_fd_, wake_fds_[0], wake_fds_[1]}) {
        if (fd >= 0) ::close(fd);
    }
    udp_fd_ = listen_fd_ = wake_fds_[0] = wake_fds_[1] = -1;
}

void ServerRunner::log(const std::string& line) const {
    if (options_.verbose) std::cerr << "server: " << line << "\n";
}

void ServerRunner::loop() {
    server::StreamId next_stream = 1;
    Bytes buf(kMaxDatagram);
    TimePoint last_tick = steady_now();

    while (running_) {
        std::vector<pollfd> fds;
        fds.push_back({wake_fds_[0], POLLIN, 0});
        fds.push_back({udp_fd_, POLLIN, 0});
        fds.push_back({listen_fd_, POLLIN, 0});
        for (const auto& [stream, fd] : stream_fds_) fds.push_back({fd, POLLIN, 0});

        ::poll(fds.data(), fds.size(), 200);
        if (!running_) break;
        const TimePoint now = steady_now();

        if (fds[1].revents & POLLIN) {
            while (true) {
                sockaddr_in src{};
                socklen_t srclen = sizeof src;
                const ssize_t n = ::recvfrom(udp_fd_, buf.data(), buf.size(), 0,
                                             reinterpret_cast<sockaddr*>(&src), &srclen);
                if (n < 0) break;
                Bytes datagram(buf.begin(), buf.begin() + n);
                const server::PeerId peer = peers_->id_for(src);
                handle_actions(engine_->step(server::UdpDatagram{std::move(datagram), peer}, now));
            }
        }
        if (fds[2].revents & POLLIN) {
            while (true) {
                const int conn = ::accept(listen_fd_, nullptr, nullptr);
                if (conn < 0) break;
                set_nonblocking(conn);
                const server::StreamId stream = next_stream++;
                stream_fds_[stream] = conn;
                fd_streams_[conn] = stream;
                handle_actions(engine_->step(server::TcpAccepted{stream}, now));
            }
        }
        for (std::size_t i = 3; i < fds.size(); ++i) {
            if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            const int fd = fds[i].fd;
            auto sit = fd_streams_.find(fd);
            if (sit == fd_streams_.end()) continue;
            const server::StreamId stream = sit->second;
            while (true) {
                const ssize_t n = ::read(fd, buf.data(), buf.size());
                if (n > 0) {
                    Bytes data(buf.begin(), buf.begin() + n);
                    handle_actions(engine_->step(server::TcpBytes{stream, std::move(data)}, now));
                    continue;
                }
                if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) break;
                if (n < 0 && errno == EINTR) continue;
                // Peer closed or errored.
                engine_->forget_stream(stream);
                fd_streams_.erase(fd);
                stream_fds_.erase(stream);
                ::close(fd);
                break;
            }
        }

        if (now - last_tick >= std::chrono::milliseconds(200)) {
            handle_actions(engine_->step(server::Tick{}, now));
            last_tick = now;
        }
    }
}

void ServerRunner::handle_actions(const std::vector<server::Action>& actions) {
    for (const auto& action : actions) {
        if (const auto* send = std::get_if<server::SendUdpDatagram>(&action)) {
            if (send->peer >= peers_->addrs.size()) continue;
            const sockaddr_in& dst = peers_->addrs[send->peer];
            (void)::sendto(udp_fd_, send->data.data(), send->data.size(), 0,
                           reinterpret_cast<const sockaddr*>(&dst), sizeof dst);
        } else if (const auto* send = std::get_if<server::SendTcpBytes>(&action)) {
            auto it = stream_fds_.find(send->stream);
            if (it != stream_fds_.end()) write_all(it->second, send->data);
        } else if (const auto* close = std::get_if<server::CloseTcp>(&action)) {
            auto it = stream_fds_.find(close->stream);
            if (it != stream_fds_.end()) {
                fd_streams_.erase(it->second);
                ::close(it->second);
                stream_fds_.erase(it);
            }
        } else if (const auto* deliver = std::get_if<server::DeliverEvent>(&action)) {
            if (const auto* est = std::get_if<server::SessionEstablished>(&deliver->observable)) {
                sessions_established_.fetch_add(1);
                log("session established stream=" + std::to_string(est->stream) + " path=" +
                    (est->path == server::SessionPath::Turbo ? "turbo" : "vanilla") +
                    " conn=" + est->conn_id.hex());
            } else if (const auto* app = std::get_if<server::AppData>(&deliver->observable)) {
                if (options_.echo) {
                    auto it = stream_fds_.find(app->stream);
                    if (it != stream_fds_.end()) write_all(it->second, app->data);
                }
            }
        }
    }
}

ClientOutcome run_client(const ClientOptions& options) {
    ClientOutcome outcome;

    client::Config config = options.config;
    config.mode = options.use_turbo ? client::Mode::Turbo : client::Mode::Vanilla;
    config.first_app_data = options.app_data;
    std::uint64_t seed = options.seed;
    if (seed == 0) {
        std::random_device rd;
        seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    }
    config.seed = seed;

    client::Session session(config, handshake::mock_engine(options.suite, seed));
    if (options.verbose) {
        session.set_trace([](const std::string& line) { std::cerr << "client: " << line << "\n"; });
    }

    const int udp_fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    const int tcp_fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (udp_fd < 0 || tcp_fd < 0) {
        outcome.error = "socket creation failed";
        return outcome;
    }
    set_nonblocking(udp_fd);
    set_nonblocking(tcp_fd);
    const sockaddr_in udp_dst = make_addr(options.host, options.udp_port);
    const sockaddr_in tcp_dst = make_addr(options.host, options.tcp_port);

    const TimePoint start = steady_now();
    const TimePoint deadline = start + options.timeout;
    bool tcp_connecting = false;
    bool tcp_connected = false;
    std::vector<std::pair<TimePoint, std::uint64_t>> timers;
    Bytes buf(kMaxDatagram);

    std::function<void(const std::vector<client::Action>&)> handle_actions;
    handle_actions = [&](const std::vector<client::Action>& actions) {
        for (const auto& action : actions) {
            if (const auto* send = std::get_if<client::SendUdpDatagrams>(&action)) {
                for (const auto& dg : send->datagrams) {
                    (void)::sendto(udp_fd, dg.data(), dg.size(), 0,
                                   reinterpret_cast<const sockaddr*>(&udp_dst), sizeof udp_dst);
                }
            } else if (std::holds_alternative<client::OpenTcp>(action)) {
                const int rc = ::connect(tcp_fd, reinterpret_cast<const sockaddr*>(&tcp_dst),
                                         sizeof tcp_dst);
                tcp_connecting = rc == 0 || errno == EINPROGRESS;
                if (!tcp_connecting) {
                    handle_actions(session.step(client::TcpFailed{}, steady_now() - start));
                }
            } else if (const auto* send = std::get_if<client::SendTcpBytes>(&action)) {
                write_all(tcp_fd, send->data);
            } else if (const auto* timer = std::get_if<client::SetTimer>(&action)) {
                timers.emplace_back(steady_now() + timer->after, timer->tag);
            } else if (const auto* deliver = std::get_if<client::DeliverEvent>(&action)) {
                if (const auto* est = std::get_if<client::EstablishedInfo>(&deliver->observable)) {
                    outcome.established = true;
                    outcome.path = est->path;
                    outcome.time_to_established = steady_now() - start;
                } else if (const auto* app = std::get_if<client::AppData>(&deliver->observable)) {
                    outcome.echoed.insert(outcome.echoed.end(), app->data.begin(),
                                          app->data.end());
                } else if (const auto* fail =
                               std::get_if<client::SessionFailed>(&deliver->observable)) {
                    outcome.error = fail->reason;
                }
            }
        }
    };

    handle_actions(session.start(TimePoint{0}));

    const bool want_echo = options.echo_expected();
    while (steady_now() < deadline) {
        if (session.phase() == client::Phase::Failed) break;
        if (outcome.established && (!want_echo || outcome.echoed.size() >= options.app_data.size()))
            break;

        pollfd fds[2];
        fds[0] = {udp_fd, POLLIN, 0};
        fds[1] = {tcp_fd, static_cast<short>(tcp_connected ? POLLIN : POLLOUT), 0};

        TimePoint next_wake = deadline;
        for (const auto& [at, tag] : timers) next_wake = std::min(next_wake, at);
        const auto wait =
            std::chrono::duration_cast<std::chrono::milliseconds>(next_wake - steady_now());
        const int timeout_ms = std::max(0, static_cast<int>(wait.count()) + 1);

        ::poll(fds, 2, timeout_ms);
        const TimePoint now = steady_now();
        const TimePoint rel = now - start;

        // Expired timers first: a fired grace timer must not lose to a
        // slightly later datagram in the same wakeup.
        for (std::size_t i = 0; i < timers.size();) {
            if (timers[i].first <= now) {
                const std::uint64_t tag = timers[i].second;
                timers.erase(timers.begin() + static_cast<std::ptrdiff_t>(i));
                handle_actions(session.step(client::TimerFired{tag}, rel));
            } else {
                ++i;
            }
        }

        if (fds[0].revents & POLLIN) {
            while (true) {
                const ssize_t n = ::recvfrom(udp_fd, buf.data(), buf.size(), 0, nullptr, nullptr);
                if (n <= 0) break;
                Bytes datagram(buf.begin(), buf.begin() + n);
                handle_actions(session.step(client::UdpDatagram{std::move(datagram)}, rel));
            }
        }
        if (!tcp_connected && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
            int err = 0;
            socklen_t len = sizeof err;
            ::getsockopt(tcp_fd, SOL_SOCKET, SO_ERROR, &err, &len);
            if (err == 0 && (fds[1].revents & POLLOUT)) {
                tcp_connected = true;
                handle_actions(session.step(client::TcpConnected{}, rel));
            } else if (err != 0) {
                handle_actions(session.step(client::TcpFailed{}, rel));
            }
        } else if (tcp_connected && (fds[1].revents & (POLLIN | POLLHUP | POLLERR))) {
            while (true) {
                const ssize_t n = ::read(tcp_fd, buf.data(), buf.size());
                if (n > 0) {
                    Bytes data(buf.begin(), buf.begin() + n);
                    handle_actions(session.step(client::TcpBytes{std::move(data)}, rel));
                    continue;
                }
                if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) break;
                if (n < 0 && errno == EINTR) continue;
                handle_actions(session.step(client::TcpFailed{}, rel));
                break;
            }
        }
    }

    if (!outcome.established && outcome.error.empty()) outcome.error = "timed out";
    ::close(udp_fd);
    ::close(tcp_fd);
    return outcome;
}

}  // namespace turbotls::net
