#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "orthomix/cipher.hpp"
#include "orthomix/model.hpp"
#include "orthomix/protocol.hpp"

namespace orthomix {

class NetError : public Error {
public:
    using Error::Error;
};

class TimeoutError : public NetError {
public:
    using NetError::NetError;
};

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;
};

/// Parses "HOST:PORT". Throws Error on a malformed address.
Endpoint parse_endpoint(const std::string& address);

/// Runs encrypted inference for any number of concurrent connections over
/// one shared, immutable model. Holds no key material.
class ProviderServer {
public:
    /// Throws StateError for a model without the encrypted flag.
    ProviderServer(ConvMixerModel model, Endpoint bind);
    ~ProviderServer();

    ProviderServer(const ProviderServer&) = delete;
    ProviderServer& operator=(const ProviderServer&) = delete;

    /// Binds, listens and starts accepting in a background thread.
    void start();
    /// Stops accepting, closes open connections and joins all threads.
    void stop();
    /// Port actually bound (useful when binding port 0).
    std::uint16_t port() const noexcept { return bound_port_; }
    std::size_t requests_served() const noexcept { return served_.load(); }

private:
    struct Connection {
        int fd = -1;
        std::thread worker;
        std::atomic<bool> done{false};
    };

    void accept_loop();
    void serve_connection(Connection& conn);
    void reap(bool all);

    const ConvMixerModel model_;
    Endpoint bind_;
    int listen_fd_ = -1;
    std::uint16_t bound_port_ = 0;
    std::atomic<bool> stopping_{false};
    std::atomic<std::size_t> served_{0};
    std::thread acceptor_;
    std::mutex mutex_;
    std::list<std::unique_ptr<Connection>> connections_;
};

/// Synchronous client holding one connection; one request in flight.
class ProviderClient {
public:
    explicit ProviderClient(const Endpoint& server,
                            std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));
    ~ProviderClient();

    ProviderClient(const ProviderClient&) = delete;
    ProviderClient& operator=(const ProviderClient&) = delete;

    /// Sends one frame and waits for the reply frame.
    WireMessage exchange(const WireMessage& request);
    /// Sends an encrypted image; throws ProtocolError carrying the
    /// provider's code when it answers with an Error frame.
    InferResponse infer(const ImageTensor& encrypted, std::uint32_t patch);

private:
    int fd_ = -1;
};

/// Client side of the protocol: encrypts `plain` with A from `key`, sends
/// it and returns the provider's answer. Neither the plain image nor the
/// key is transmitted.
InferResponse client_infer(const Endpoint& server, const SecretKey& key, const ImageTensor& plain,
                           std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));

/// Third-party provisioning: writes the key file and the transformed model
/// derived from the plain model at `plain_model`. The plain model file is
/// only read. Throws DimensionError when the key geometry does not match
/// the model.
void thirdparty_provision(const SecretKey& key, const std::filesystem::path& plain_model,
                          const std::filesystem::path& key_out, const std::filesystem::path& model_out);

}  // namespace orthomix
