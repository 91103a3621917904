#pragma once

#include <memory>
#include <string>

namespace ctxforge {

/// In-process HTTP server speaking the integration wire schema in mock mode.
/// Binds 127.0.0.1 on an ephemeral port; stops on destruction.
class MockIntegrationServer {
public:
    MockIntegrationServer();
    ~MockIntegrationServer();
    MockIntegrationServer(const MockIntegrationServer&) = delete;
    MockIntegrationServer& operator=(const MockIntegrationServer&) = delete;

    int port() const;
    std::string endpoint() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace ctxforge
