#include "ctxforge/mock_service.hpp"

#include <chrono>
#include <stdexcept>
#include <thread>

#include "ctxforge/wire.hpp"

#include <httplib.h>

namespace ctxforge {

struct MockIntegrationServer::Impl {
    httplib::Server server;
    std::thread thread;
    int port = -1;
};

MockIntegrationServer::MockIntegrationServer() : impl_(std::make_unique<Impl>()) {
    impl_->server.Post("/v1/integrate", [](const httplib::Request& req, httplib::Response& res) {
        const auto start = std::chrono::steady_clock::now();
        try {
            wire::IntegrateRequest request = wire::decode_request(nlohmann::json::parse(req.body));
            RgbImage out = wire::mock_integrate(request);
            const double ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            res.set_content(wire::encode_response(out, "mock", ms).dump(), "application/json");
        } catch (const wire::RequestError& e) {
            res.status = e.status;
            res.set_content(nlohmann::json{{"error", e.message}}.dump(), "application/json");
        } catch (const nlohmann::json::exception& e) {
            res.status = 400;
            res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
        }
    });
    impl_->server.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"status":"ok","mode":"mock","model_loaded":false})", "application/json");
    });
    impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
    if (impl_->port < 0) throw std::runtime_error("mock integration server could not bind");
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

MockIntegrationServer::~MockIntegrationServer() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

int MockIntegrationServer::port() const { return impl_->port; }

std::string MockIntegrationServer::endpoint() const { return "http://127.0.0.1:" + std::to_string(impl_->port); }

}  // namespace ctxforge
