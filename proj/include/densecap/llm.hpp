#pragma once

// HTTP client for an external text-generation service and a local stub
// server speaking the same wire contract:
//   POST {"prompt": str, "max_tokens": int, "temperature": number}
//   ->   {"text": str}

#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "densecap/errors.hpp"

namespace httplib {
class Server;
}

namespace densecap {

struct TransportError : Error {
  explicit TransportError(const std::string& m) : Error(ErrorKind::io, m) {}
};

class TextGenerationClient {
 public:
  virtual ~TextGenerationClient() = default;

  /// Returns the completion text. Throws TransportError on failure.
  virtual std::string generate(const std::string& prompt) = 0;
};

struct LlmClientConfig {
  std::string endpoint;  // e.g. "http://127.0.0.1:8080/generate"
  double timeout_s = 30.0;
  int retries = 0;       // extra attempts after the first
  int max_tokens = 64;
  double temperature = 0.0;
  std::size_t max_in_flight = 1;
};

class HttpTextGenerationClient final : public TextGenerationClient {
 public:
  /// Throws ConfigError on an endpoint that is not http://host[:port]/path.
  explicit HttpTextGenerationClient(LlmClientConfig cfg);

  std::string generate(const std::string& prompt) override;

  const LlmClientConfig& config() const { return cfg_; }

 private:
  std::string attempt(const std::string& body) const;

  LlmClientConfig cfg_;
  std::string host_;
  int port_ = 80;
  std::string path_;
};

/// In-process test double for the wire contract.
class StubServer {
 public:
  enum class Mode {
    echo,        // returns the prompt unchanged
    first_line,  // returns the first non-empty line of the prompt
    fail,        // answers every request with HTTP 500
    fixed,       // returns a configured string
  };

  explicit StubServer(Mode mode, std::string fixed_text = {});
  ~StubServer();

  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  /// Binds to host:port (port 0 picks a free one) and starts serving on a
  /// background thread. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop() is called from elsewhere.
  void listen_blocking(const std::string& host, int port);
  void stop();

  std::string endpoint() const;
  std::vector<std::string> prompts() const;
  std::size_t request_count() const;

 private:
  void install_handlers();

  Mode mode_;
  std::string fixed_text_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
  mutable std::mutex mu_;
  std::vector<std::string> prompts_;
};

StubServer::Mode parse_stub_mode(std::string_view s);

}  // namespace densecap
