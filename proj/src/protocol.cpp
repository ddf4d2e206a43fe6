#include "nbv/protocol.hpp"

#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "nbv/util.hpp"

namespace nbv {

using nlohmann::json;

std::string encode_gray_b64(const GrayImage& gray) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(gray.value.size());
  for (const double v : gray.value) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    bytes.push_back(static_cast<std::uint8_t>(std::lround(clamped * 255.0)));
  }
  return base64_encode(bytes);
}

std::string encode_grid_b64(const VoxelGrid& grid) { return base64_encode(serialize_grid(grid)); }

namespace {

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json error_response(const std::string& env_id, const std::string& code,
                    const std::string& message) {
  json r;
  r["type"] = "error";
  if (!env_id.empty()) r["env_id"] = env_id;
  r["error"] = {{"code", code}, {"message", message}};
  return r;
}

// Reads a non-negative integer field; returns false (and fills err) on a
// malformed value. Missing field keeps fallback.
bool read_u64(const json& request, const char* key, std::uint64_t fallback, std::uint64_t& out,
              std::string& err) {
  out = fallback;
  if (!request.contains(key)) return true;
  const json& j = request[key];
  if (j.is_number_unsigned()) {
    out = j.get<std::uint64_t>();
    return true;
  }
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) {
    out = static_cast<std::uint64_t>(j.get<std::int64_t>());
    return true;
  }
  err = std::string(key) + " must be a non-negative integer";
  return false;
}

bool read_vec3(const json& request, const char* key, Vec3& out, std::string& err) {
  if (!request.contains(key) || !request[key].is_array() || request[key].size() != 3) {
    err = std::string(key) + " must be an array of 3 numbers";
    return false;
  }
  for (int i = 0; i < 3; ++i) {
    const json& j = request[key][static_cast<std::size_t>(i)];
    if (!j.is_number()) {
      err = std::string(key) + " must be an array of 3 numbers";
      return false;
    }
    out[i] = j.get<double>();
  }
  return true;
}

}  // namespace

json observation_to_json(const Observation& obs) {
  json j;
  j["gray_b64"] = encode_gray_b64(obs.gray);
  j["height"] = obs.gray.height;
  j["width"] = obs.gray.width;
  j["vector"] = json::array();
  for (int i = 0; i < 6; ++i) j["vector"].push_back(obs.vector[i]);
  j["grid_b64"] = encode_grid_b64(obs.grid);
  j["lookat"] = vec3_json(obs.lookat);
  j["step_index"] = obs.step_index;
  return j;
}

json step_result_to_json(const StepResult& result) {
  json j;
  j["obs"] = observation_to_json(result.obs);
  j["reward"] = result.reward;
  j["coverage_reward"] = result.coverage_reward;
  j["penalty"] = result.penalty;
  j["m_col"] = result.m_col ? 1 : 0;
  j["newly_seen_faces"] = result.newly_seen_faces;
  j["face_coverage"] = result.face_coverage;
  j["terminated"] = result.terminated;
  j["reason"] = result.termination_reason;
  j["action_clamped"] = result.action_clamped;
  j["labels"] = json{{"a_prime", vec3_json(result.a_prime)},
                     {"gt_lookat", result.gt_lookat_valid ? vec3_json(result.gt_lookat_label)
                                                          : json(nullptr)}};
  return j;
}

EnvServer::EnvServer(std::map<std::string, std::shared_ptr<const PreparedScene>> scenes,
                     EnvConfig cfg, int max_envs)
    : scenes_(std::move(scenes)), cfg_(std::move(cfg)), max_envs_(max_envs) {
  if (scenes_.empty()) throw Error("env server: no scenes");
  for (const auto& [name, scene] : scenes_) {
    if (!scene) throw Error("env server: null scene '" + name + "'");
  }
  cfg_.validate();
  if (max_envs_ < 1) throw Error("env server: max_envs must be >= 1");
}

std::vector<std::string> EnvServer::scene_names() const {
  std::vector<std::string> names;
  names.reserve(scenes_.size());
  for (const auto& [name, scene] : scenes_) names.push_back(name);
  return names;
}

json EnvServer::handle_request(const json& request) {
  try {
    if (!request.is_object()) {
      return error_response("", "BAD_REQUEST", "request must be a JSON object");
    }
    if (!request.contains("type") || !request["type"].is_string()) {
      return error_response("", "BAD_REQUEST", "missing string field 'type'");
    }
    const auto type = request["type"].get<std::string>();
    if (type == "hello") return do_hello(request);

    if (!request.contains("env_id") || !request["env_id"].is_string()) {
      return error_response("", "BAD_REQUEST", "missing string field 'env_id'");
    }
    const auto env_id = request["env_id"].get<std::string>();
    if (env_id.empty()) return error_response("", "BAD_REQUEST", "env_id must be non-empty");
    if (type == "reset") return do_reset(request, env_id);
    if (type == "step") return do_step(request, env_id);
    if (type == "close") return do_close(env_id);
    return error_response(env_id, "BAD_REQUEST", "unknown request type '" + type + "'");
  } catch (const std::exception& e) {
    return error_response("", "INTERNAL", e.what());
  }
}

std::string EnvServer::handle_line(const std::string& line) {
  json request;
  try {
    request = json::parse(line);
  } catch (const json::parse_error& e) {
    return error_response("", "BAD_REQUEST", std::string("invalid JSON: ") + e.what()).dump();
  }
  return handle_request(request).dump();
}

json EnvServer::do_hello(const json& request) {
  (void)request;
  json r;
  r["type"] = "hello_ok";
  r["version"] = kProtocolVersion;
  r["g"] = cfg_.g;
  r["height"] = cfg_.image_height;
  r["width"] = cfg_.image_width;
  r["max_steps"] = cfg_.max_steps;
  r["face_target"] = cfg_.face_target;
  r["scenes"] = scene_names();
  return r;
}

json EnvServer::do_reset(const json& request, const std::string& env_id) {
  std::string scene_name = scenes_.begin()->first;
  if (request.contains("scene")) {
    if (!request["scene"].is_string()) {
      return error_response(env_id, "BAD_REQUEST", "scene must be a string");
    }
    scene_name = request["scene"].get<std::string>();
  }
  const auto scene_it = scenes_.find(scene_name);
  if (scene_it == scenes_.end()) {
    return error_response(env_id, "BAD_REQUEST", "unknown scene '" + scene_name + "'");
  }
  std::uint64_t seed = 0;
  std::string err;
  if (!read_u64(request, "seed", 0, seed, err)) {
    return error_response(env_id, "BAD_REQUEST", err);
  }

  std::shared_ptr<Slot> slot;
  {
    std::lock_guard<std::mutex> lock(table_mutex_);
    auto it = envs_.find(env_id);
    if (it == envs_.end()) {
      if (static_cast<int>(envs_.size()) >= max_envs_) {
        return error_response(env_id, "BAD_REQUEST", "too many environments");
      }
      it = envs_.emplace(env_id, std::make_shared<Slot>()).first;
    }
    slot = it->second;
  }
  std::lock_guard<std::mutex> lock(slot->mutex);
  slot->env = std::make_unique<Env>(scene_it->second, cfg_);
  const StepResult result = slot->env->reset(seed);
  json r = step_result_to_json(result);
  r["type"] = "reset_ok";
  r["env_id"] = env_id;
  r["scene"] = scene_name;
  r["seed"] = seed;
  return r;
}

json EnvServer::do_step(const json& request, const std::string& env_id) {
  Vec3 action, lookat;
  std::string err;
  if (!read_vec3(request, "action", action, err)) {
    return error_response(env_id, "BAD_REQUEST", err);
  }
  if (!read_vec3(request, "lookat", lookat, err)) {
    return error_response(env_id, "BAD_REQUEST", err);
  }

  std::shared_ptr<Slot> slot;
  {
    std::lock_guard<std::mutex> lock(table_mutex_);
    const auto it = envs_.find(env_id);
    if (it != envs_.end()) slot = it->second;
  }
  if (!slot) return error_response(env_id, "UNKNOWN_ENV", "no environment '" + env_id + "'");

  std::lock_guard<std::mutex> lock(slot->mutex);
  if (!slot->env) return error_response(env_id, "UNKNOWN_ENV", "no environment '" + env_id + "'");
  if (slot->env->terminated()) {
    return error_response(env_id, "EPISODE_DONE", "episode is over; reset first");
  }
  const StepResult result = slot->env->step(action, lookat);
  json r = step_result_to_json(result);
  r["type"] = "step_ok";
  r["env_id"] = env_id;
  return r;
}

json EnvServer::do_close(const std::string& env_id) {
  std::shared_ptr<Slot> slot;
  {
    std::lock_guard<std::mutex> lock(table_mutex_);
    const auto it = envs_.find(env_id);
    if (it == envs_.end()) {
      return error_response(env_id, "UNKNOWN_ENV", "no environment '" + env_id + "'");
    }
    slot = it->second;
    envs_.erase(it);
  }
  std::lock_guard<std::mutex> lock(slot->mutex);  // let an in-flight call finish
  slot->env.reset();
  json r;
  r["type"] = "close_ok";
  r["env_id"] = env_id;
  return r;
}

void serve_stream(EnvServer& server, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out << server.handle_line(line) << '\n' << std::flush;
  }
}

namespace {

void send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) throw Error("socket send failed");
    sent += static_cast<std::size_t>(n);
  }
}

}  // namespace

TcpServer::~TcpServer() { stop(); }

int TcpServer::start(const std::string& host, int port) {
  if (listen_fd_ >= 0) throw Error("tcp server already started");
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    throw Error("tcp server: cannot resolve '" + host + "'");
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    freeaddrinfo(res);
    throw Error("tcp server: socket() failed");
  }
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd, 16) != 0) {
    freeaddrinfo(res);
    ::close(fd);
    throw Error("tcp server: cannot bind " + host + ":" + std::to_string(port));
  }
  freeaddrinfo(res);

  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len) != 0) {
    ::close(fd);
    throw Error("tcp server: getsockname failed");
  }
  listen_fd_ = fd;
  running_ = true;
  accept_thread_ = std::thread(&TcpServer::accept_loop, this);
  return static_cast<int>(ntohs(bound.sin_port));
}

void TcpServer::accept_loop() {
  for (;;) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) return;
    std::lock_guard<std::mutex> lock(clients_mutex_);
    if (!running_) {
      ::close(fd);
      return;
    }
    client_fds_.push_back(fd);
    client_threads_.emplace_back(&TcpServer::client_loop, this, fd);
  }
}

void TcpServer::client_loop(int fd) {
  std::string buf;
  char chunk[4096];
  bool alive = true;
  while (alive) {
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n <= 0) break;
    buf.append(chunk, static_cast<std::size_t>(n));
    std::size_t pos;
    while (alive && (pos = buf.find('\n')) != std::string::npos) {
      const std::string line = buf.substr(0, pos);
      buf.erase(0, pos + 1);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        send_all(fd, core_.handle_line(line) + '\n');
      } catch (const Error&) {
        alive = false;  // peer went away mid-response
      }
    }
  }
  {
    std::lock_guard<std::mutex> lock(clients_mutex_);
    client_fds_.erase(std::remove(client_fds_.begin(), client_fds_.end(), fd),
                      client_fds_.end());
  }
  ::close(fd);
}

void TcpServer::stop() {
  if (listen_fd_ < 0) return;
  {
    std::lock_guard<std::mutex> lock(clients_mutex_);
    running_ = false;
  }
  ::shutdown(listen_fd_, SHUT_RDWR);
  if (accept_thread_.joinable()) accept_thread_.join();
  {
    std::lock_guard<std::mutex> lock(clients_mutex_);
    for (const int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  for (std::thread& t : client_threads_) {
    if (t.joinable()) t.join();
  }
  client_threads_.clear();
  ::close(listen_fd_);
  listen_fd_ = -1;
}

TcpClient::TcpClient(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    throw Error("tcp client: cannot resolve '" + host + "'");
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd_ < 0) {
    freeaddrinfo(res);
    throw Error("tcp client: socket() failed");
  }
  if (::connect(fd_, res->ai_addr, res->ai_addrlen) != 0) {
    freeaddrinfo(res);
    ::close(fd_);
    fd_ = -1;
    throw Error("tcp client: cannot connect to " + host + ":" + std::to_string(port));
  }
  freeaddrinfo(res);
}

TcpClient::~TcpClient() {
  if (fd_ >= 0) ::close(fd_);
}

json TcpClient::call(const json& request) {
  send_all(fd_, request.dump() + '\n');
  std::size_t pos;
  while ((pos = buffer_.find('\n')) == std::string::npos) {
    char chunk[4096];
    const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n <= 0) throw Error("tcp client: connection closed mid-response");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
  const std::string line = buffer_.substr(0, pos);
  buffer_.erase(0, pos + 1);
  return json::parse(line);
}

}  // namespace nbv
