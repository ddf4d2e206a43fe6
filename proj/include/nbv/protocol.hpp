#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "nbv/env.hpp"

namespace nbv {

inline constexpr int kProtocolVersion = 1;

std::string encode_gray_b64(const GrayImage& gray);   // base64 of row-major round(v*255) bytes
std::string encode_grid_b64(const VoxelGrid& grid);   // base64 of the grid binary layout
nlohmann::json observation_to_json(const Observation& obs);
nlohmann::json step_result_to_json(const StepResult& result);

// Request router over named scenes; one Env per env_id, created on reset.
// Thread-safe: distinct env_ids may be served concurrently, one env_id is
// strictly serial.
class EnvServer {
 public:
  EnvServer(std::map<std::string, std::shared_ptr<const PreparedScene>> scenes, EnvConfig cfg,
            int max_envs = 64);

  // One JSON request in, one JSON response out. Never throws for bad input;
  // malformed requests yield {type:"error", error:{code,message}}.
  nlohmann::json handle_request(const nlohmann::json& request);

  // Convenience for line transports: parse text, route, serialize.
  std::string handle_line(const std::string& line);

  std::vector<std::string> scene_names() const;

 private:
  struct Slot {
    std::unique_ptr<Env> env;
    std::mutex mutex;
  };

  nlohmann::json do_hello(const nlohmann::json& request);
  nlohmann::json do_reset(const nlohmann::json& request, const std::string& env_id);
  nlohmann::json do_step(const nlohmann::json& request, const std::string& env_id);
  nlohmann::json do_close(const std::string& env_id);

  std::map<std::string, std::shared_ptr<const PreparedScene>> scenes_;
  EnvConfig cfg_;
  int max_envs_;
  std::mutex table_mutex_;  // guards envs_ only; per-slot mutex guards the env
  std::map<std::string, std::shared_ptr<Slot>> envs_;
};

// Newline-delimited JSON over a blocking stream pair; returns at EOF.
void serve_stream(EnvServer& server, std::istream& in, std::ostream& out);

// TCP front end, thread per connection. start() returns the bound port
// (pass port 0 for an ephemeral one). stop() is idempotent and joins all
// connection threads.
class TcpServer {
 public:
  explicit TcpServer(EnvServer& core) : core_(core) {}
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  int start(const std::string& host, int port);
  void stop();

 private:
  void accept_loop();
  void client_loop(int fd);

  EnvServer& core_;
  int listen_fd_ = -1;
  std::thread accept_thread_;
  std::mutex clients_mutex_;
  std::vector<int> client_fds_;
  std::vector<std::thread> client_threads_;
  bool running_ = false;
};

// Minimal blocking NDJSON client for tests and the extern planner bridge.
class TcpClient {
 public:
  TcpClient(const std::string& host, int port);
  ~TcpClient();
  TcpClient(const TcpClient&) = delete;
  TcpClient& operator=(const TcpClient&) = delete;

  nlohmann::json call(const nlohmann::json& request);

 private:
  int fd_ = -1;
  std::string buffer_;
};

}  // namespace nbv
