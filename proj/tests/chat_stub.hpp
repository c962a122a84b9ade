#pragma once

#include <algorithm>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace sgtest {

/// A loopback port with no listener: bound to port 0, then closed.
inline int unused_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

/// Local chat-completions server replaying scripted (status, body) replies,
/// repeating the last one, and recording every request.
class ChatStub {
 public:
  struct Seen {
    std::string body;
    std::string authorization;
    std::string content_type;
  };

  explicit ChatStub(std::vector<std::pair<int, std::string>> replies) : replies_(std::move(replies)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mutex_);
      seen_.push_back({req.body, req.get_header_value("Authorization"), req.get_header_value("Content-Type")});
      const auto& r = replies_[std::min(seen_.size(), replies_.size()) - 1];
      res.status = r.first;
      res.set_content(r.second, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ChatStub() {
    server_.stop();
    thread_.join();
  }
  ChatStub(const ChatStub&) = delete;
  ChatStub& operator=(const ChatStub&) = delete;

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  std::vector<Seen> seen() const {
    std::lock_guard lock(mutex_);
    return seen_;
  }

  static std::string reply(const std::string& content) {
    return R"({"id":"x","object":"chat.completion","choices":[{"index":0,"message":{"role":"assistant","content":)" +
           nlohmann::json(content).dump() + R"(},"finish_reason":"stop"}]})";
  }

 private:
  std::vector<std::pair<int, std::string>> replies_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mutex_;
  std::vector<Seen> seen_;
};

}  // namespace sgtest
