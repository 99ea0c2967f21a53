#include "densecap/llm.hpp"

#include <cmath>

#include "httplib.h"
#include "json.hpp"

namespace densecap {

using nlohmann::json;

namespace {

void set_timeouts(httplib::Client& cli, double timeout_s) {
  const auto sec = static_cast<time_t>(std::floor(timeout_s));
  const auto usec = static_cast<time_t>((timeout_s - static_cast<double>(sec)) * 1e6);
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);
}

}  // namespace

HttpTextGenerationClient::HttpTextGenerationClient(LlmClientConfig cfg) : cfg_(std::move(cfg)) {
  constexpr std::string_view kScheme = "http://";
  std::string_view rest = cfg_.endpoint;
  if (rest.substr(0, kScheme.size()) != kScheme) {
    throw ConfigError("llm endpoint must start with http:// (got '" + cfg_.endpoint + "')");
  }
  rest.remove_prefix(kScheme.size());
  const auto slash = rest.find('/');
  std::string_view authority = rest.substr(0, slash);
  path_ = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
  const auto colon = authority.rfind(':');
  if (colon != std::string_view::npos) {
    try {
      port_ = std::stoi(std::string(authority.substr(colon + 1)));
    } catch (const std::exception&) {
      throw ConfigError("bad port in llm endpoint '" + cfg_.endpoint + "'");
    }
    authority = authority.substr(0, colon);
  }
  host_ = std::string(authority);
  if (host_.empty()) throw ConfigError("llm endpoint has no host");
  if (!(cfg_.timeout_s > 0)) throw ConfigError("llm timeout must be positive");
  if (cfg_.retries < 0) throw ConfigError("llm retries must be non-negative");
}

std::string HttpTextGenerationClient::attempt(const std::string& body) const {
  httplib::Client cli(host_, port_);
  set_timeouts(cli, cfg_.timeout_s);
  auto res = cli.Post(path_, body, "application/json");
  if (!res) {
    throw TransportError("request to " + cfg_.endpoint + " failed: " +
                         httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw TransportError("request to " + cfg_.endpoint + " returned HTTP " +
                         std::to_string(res->status));
  }
  json reply;
  try {
    reply = json::parse(res->body);
  } catch (const json::parse_error&) {
    throw TransportError("reply from " + cfg_.endpoint + " is not JSON");
  }
  if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
    throw TransportError("reply from " + cfg_.endpoint + " has no string 'text' field");
  }
  return reply["text"].get<std::string>();
}

std::string HttpTextGenerationClient::generate(const std::string& prompt) {
  const json request = {
      {"prompt", prompt}, {"max_tokens", cfg_.max_tokens}, {"temperature", cfg_.temperature}};
  const std::string body = request.dump();
  std::string last_error;
  for (int i = 0; i <= cfg_.retries; ++i) {
    try {
      return attempt(body);
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  throw TransportError(last_error + " (after " + std::to_string(cfg_.retries + 1) + " attempts)");
}

// --- stub server ----------------------------------------------------------

StubServer::Mode parse_stub_mode(std::string_view s) {
  if (s == "echo") return StubServer::Mode::echo;
  if (s == "first-line") return StubServer::Mode::first_line;
  if (s == "fail") return StubServer::Mode::fail;
  if (s == "fixed") return StubServer::Mode::fixed;
  throw ConfigError("unknown stub mode '" + std::string(s) + "'");
}

StubServer::StubServer(Mode mode, std::string fixed_text)
    : mode_(mode), fixed_text_(std::move(fixed_text)), server_(std::make_unique<httplib::Server>()) {
  install_handlers();
}

StubServer::~StubServer() { stop(); }

void StubServer::install_handlers() {
  server_->Post(R"(.*)", [this](const httplib::Request& req, httplib::Response& res) {
    std::string prompt;
    try {
      const json body = json::parse(req.body);
      prompt = body.at("prompt").get<std::string>();
    } catch (const json::exception&) {
      res.status = 400;
      res.set_content(R"({"error":"bad request"})", "application/json");
      return;
    }
    {
      std::lock_guard lock(mu_);
      prompts_.push_back(prompt);
    }
    std::string text;
    switch (mode_) {
      case Mode::fail:
        res.status = 500;
        res.set_content(R"({"error":"stub failure"})", "application/json");
        return;
      case Mode::echo:
        text = prompt;
        break;
      case Mode::first_line: {
        std::size_t pos = 0;
        while (pos <= prompt.size()) {
          const auto nl = prompt.find('\n', pos);
          std::string line = prompt.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
          if (line.find_first_not_of(" \t\r") != std::string::npos) {
            text = std::move(line);
            break;
          }
          if (nl == std::string::npos) break;
          pos = nl + 1;
        }
        break;
      }
      case Mode::fixed:
        text = fixed_text_;
        break;
    }
    res.set_content(json{{"text", text}}.dump(), "application/json");
  });
}

int StubServer::start(const std::string& host, int port) {
  host_ = host;
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  if (port_ < 0) throw IoError("stub server cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void StubServer::listen_blocking(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  if (!server_->listen(host, port)) {
    throw IoError("stub server cannot listen on " + host + ":" + std::to_string(port));
  }
}

void StubServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string StubServer::endpoint() const {
  return "http://" + host_ + ":" + std::to_string(port_) + "/generate";
}

std::vector<std::string> StubServer::prompts() const {
  std::lock_guard lock(mu_);
  return prompts_;
}

std::size_t StubServer::request_count() const {
  std::lock_guard lock(mu_);
  return prompts_.size();
}

}  // namespace densecap
