#include "orthomix/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>

#include "orthomix/formats.hpp"

namespace orthomix {

namespace {

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

sockaddr_in resolve(const Endpoint& ep) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string host = ep.host.empty() ? "0.0.0.0" : ep.host;
    if (int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res); rc != 0 || res == nullptr) {
        throw NetError("cannot resolve " + host + ": " + ::gai_strerror(rc));
    }
    sockaddr_in addr{};
    std::memcpy(&addr, res->ai_addr, sizeof addr);
    ::freeaddrinfo(res);
    addr.sin_port = htons(ep.port);
    return addr;
}

// Reads exactly out.size() bytes. Returns false on a clean EOF before the
// first byte; throws on errors, timeouts and EOF mid-buffer.
bool read_exact(int fd, std::span<std::uint8_t> out) {
    std::size_t got = 0;
    while (got < out.size()) {
        const ssize_t n = ::recv(fd, out.data() + got, out.size() - got, 0);
        if (n > 0) {
            got += static_cast<std::size_t>(n);
        } else if (n == 0) {
            if (got == 0) return false;
            throw NetError("connection closed mid-frame");
        } else if (errno == EINTR) {
            continue;
        } else if (errno == EAGAIN || errno == EWOULDBLOCK) {
            throw TimeoutError("timed out waiting for data");
        } else {
            throw NetError(errno_text("recv"));
        }
    }
    return true;
}

void write_all(int fd, std::span<const std::uint8_t> bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n >= 0) {
            sent += static_cast<std::size_t>(n);
        } else if (errno == EINTR) {
            continue;
        } else if (errno == EAGAIN || errno == EWOULDBLOCK) {
            throw TimeoutError("timed out sending data");
        } else {
            throw NetError(errno_text("send"));
        }
    }
}

void set_timeouts(int fd, std::chrono::milliseconds timeout) {
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

}  // namespace

Endpoint parse_endpoint(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon + 1 == address.size()) {
        throw Error("address must be HOST:PORT, got \"" + address + "\"");
    }
    const std::string port_text = address.substr(colon + 1);
    unsigned long port = 0;
    try {
        std::size_t used = 0;
        port = std::stoul(port_text, &used);
        if (used != port_text.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
        throw Error("invalid port in \"" + address + "\"");
    }
    if (port > 65535) throw Error("port out of range in \"" + address + "\"");
    return {address.substr(0, colon), static_cast<std::uint16_t>(port)};
}

ProviderServer::ProviderServer(ConvMixerModel model, Endpoint bind)
    : model_(std::move(model)), bind_(std::move(bind)) {
    if (!model_.encrypted) throw StateError("provider refuses to serve a plain (untransformed) model");
    model_.validate();
}

ProviderServer::~ProviderServer() { stop(); }

void ProviderServer::start() {
    if (listen_fd_ >= 0) return;
    const sockaddr_in addr = resolve(bind_);
    const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw NetError(errno_text("socket"));
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 64) != 0) {
        const std::string msg = errno_text("bind/listen");
        ::close(fd);
        throw NetError(msg);
    }
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
    bound_port_ = ntohs(bound.sin_port);
    listen_fd_ = fd;
    stopping_ = false;
    acceptor_ = std::thread([this] { accept_loop(); });
}

void ProviderServer::stop() {
    if (listen_fd_ < 0) return;
    stopping_ = true;
    if (acceptor_.joinable()) acceptor_.join();
    {
        std::lock_guard lock(mutex_);
        for (auto& c : connections_) ::shutdown(c->fd, SHUT_RDWR);
    }
    reap(true);
    ::close(listen_fd_);
    listen_fd_ = -1;
}

void ProviderServer::reap(bool all) {
    std::list<std::unique_ptr<Connection>> finished;
    {
        std::lock_guard lock(mutex_);
        for (auto it = connections_.begin(); it != connections_.end();) {
            if (all || (*it)->done) {
                finished.push_back(std::move(*it));
                it = connections_.erase(it);
            } else {
                ++it;
            }
        }
    }
    for (auto& c : finished) {
        if (c->worker.joinable()) c->worker.join();
        ::close(c->fd);
    }
}

void ProviderServer::accept_loop() {
    while (!stopping_) {
        pollfd pfd{listen_fd_, POLLIN, 0};
        const int rc = ::poll(&pfd, 1, 100);
        reap(false);
        if (rc <= 0 || !(pfd.revents & POLLIN)) continue;
        const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
        if (fd < 0) continue;
        const int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        auto conn = std::make_unique<Connection>();
        conn->fd = fd;
        Connection* raw = conn.get();
        std::lock_guard lock(mutex_);
        connections_.push_back(std::move(conn));
        raw->worker = std::thread([this, raw] { serve_connection(*raw); });
    }
}

void ProviderServer::serve_connection(Connection& conn) {
    try {
        std::array<std::uint8_t, frame_header_size> header{};
        while (!stopping_ && read_exact(conn.fd, header)) {
            FrameHeader h{};
            try {
                h = decode_frame_header(header);
            } catch (const ProtocolError& e) {
                // Framing is lost; report and drop the connection.
                write_all(conn.fd, encode_frame(make_error({e.code(), e.what()})));
                break;
            }
            WireMessage request{h.type, Bytes(h.length)};
            if (h.length > 0 && !read_exact(conn.fd, request.payload)) break;
            const WireMessage reply = request.type == MessageType::infer_request
                                          ? handle_request(model_, request)
                                          : make_error({ErrorCode::malformed_frame, "expected an InferRequest"});
            ++served_;
            write_all(conn.fd, encode_frame(reply));
        }
    } catch (const std::exception&) {
        // Connection-local failure; other sessions are unaffected.
    }
    ::shutdown(conn.fd, SHUT_RDWR);
    conn.done = true;
}

ProviderClient::ProviderClient(const Endpoint& server, std::chrono::milliseconds timeout) {
    const sockaddr_in addr = resolve(server);
    fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) throw NetError(errno_text("socket"));
    const int flags = ::fcntl(fd_, F_GETFL, 0);
    ::fcntl(fd_, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr);
    if (rc != 0 && errno == EINPROGRESS) {
        pollfd pfd{fd_, POLLOUT, 0};
        rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
        if (rc == 0) {
            ::close(fd_);
            throw TimeoutError("timed out connecting to " + server.host + ":" + std::to_string(server.port));
        }
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(fd_, SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
        errno = err;
    }
    if (rc != 0) {
        const std::string msg = errno_text(("connect to " + server.host + ":" + std::to_string(server.port)).c_str());
        ::close(fd_);
        throw NetError(msg);
    }
    ::fcntl(fd_, F_SETFL, flags);
    const int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    set_timeouts(fd_, timeout);
}

ProviderClient::~ProviderClient() {
    if (fd_ >= 0) ::close(fd_);
}

WireMessage ProviderClient::exchange(const WireMessage& request) {
    write_all(fd_, encode_frame(request));
    std::array<std::uint8_t, frame_header_size> header{};
    if (!read_exact(fd_, header)) throw NetError("provider closed the connection");
    const FrameHeader h = decode_frame_header(header);
    WireMessage reply{h.type, Bytes(h.length)};
    if (h.length > 0 && !read_exact(fd_, reply.payload)) throw NetError("provider closed the connection");
    return reply;
}

InferResponse ProviderClient::infer(const ImageTensor& encrypted, std::uint32_t patch) {
    const WireMessage reply = exchange(make_request({encrypted, patch}));
    if (reply.type == MessageType::error) {
        const ErrorReply err = parse_error(reply);
        throw ProtocolError(err.code, "provider error " + std::to_string(static_cast<int>(err.code)) + ": " +
                                          err.detail);
    }
    return parse_response(reply);
}

InferResponse client_infer(const Endpoint& server, const SecretKey& key, const ImageTensor& plain,
                           std::chrono::milliseconds timeout) {
    const OrthoMatrix a = generate_orthogonal(key);
    const ImageTensor encrypted = encrypt_image(plain, a);
    ProviderClient client(server, timeout);
    return client.infer(encrypted, key.patch);
}

void thirdparty_provision(const SecretKey& key, const std::filesystem::path& plain_model,
                          const std::filesystem::path& key_out, const std::filesystem::path& model_out) {
    const ConvMixerModel plain = load_model(plain_model);
    if (plain.encrypted) throw StateError("provision: " + plain_model.string() + " is already encrypted");
    if (key.patch != plain.geometry.patch || key.channels != plain.geometry.channels) {
        throw DimensionError("provision: key geometry (patch " + std::to_string(key.patch) + ", channels " +
                             std::to_string(key.channels) + ") does not match model (patch " +
                             std::to_string(plain.geometry.patch) + ", channels " +
                             std::to_string(plain.geometry.channels) + ")");
    }
    const ConvMixerModel encrypted = transform_model(plain, generate_orthogonal(key));
    save_key(key_out, key);
    save_model(model_out, encrypted);
}

}  // namespace orthomix
