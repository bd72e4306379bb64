#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "sfk/eval/metrics.hpp"
#include "sfk/triage/triage.hpp"

namespace httplib {
class Server;
}

namespace sfk::triage {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8765;  ///< 0 picks a free port
  std::optional<eval::ConfusionMatrix> confusion;
  /// Maps a case id to a media file; nullopt means no clip is available.
  std::function<std::optional<std::filesystem::path>(const std::string&)> media_for;
};

/// HTTP API over a TriageStore. Endpoints are documented in docs/triage_api.md.
class TriageServer {
 public:
  TriageServer(TriageStore& store, ServerOptions options);
  ~TriageServer();
  TriageServer(const TriageServer&) = delete;
  TriageServer& operator=(const TriageServer&) = delete;

  /// Binds and returns the port; throws RuntimeError when binding fails.
  int bind();
  /// Serves until stop(); call after bind().
  void serve();
  /// bind() + serve() on a background thread.
  int start();
  void stop();
  int port() const { return port_; }

 private:
  void routes();

  TriageStore& store_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace sfk::triage
