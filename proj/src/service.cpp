#include "gmp/service.hpp"

#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "gmp/checkpoint.hpp"
#include "gmp/error.hpp"
#include "gmp/log.hpp"

namespace gmp {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

json command_json(const VelocityCommand& c) {
  return {{"vx", c.vx}, {"vy", c.vy}, {"yaw_rate", c.yaw_rate}};
}

json frame_value(const FrameEvent& e, double rate_hz) {
  json pose;
  pose["v_base"] = vec_json(e.pose.v_base);
  pose["w_base"] = vec_json(e.pose.w_base);
  pose["q"] = std::vector<double>(e.pose.q.data(), e.pose.q.data() + e.pose.q.size());
  json pk = json::array(), vk = json::array(), world = json::array();
  for (int k = 0; k < kKeypointCount; ++k) {
    pk.push_back(vec_json(e.pose.p_key[k]));
    vk.push_back(vec_json(e.pose.v_key[k]));
    world.push_back(vec_json(e.keypoints_world[k]));
  }
  pose["p_key"] = pk;
  pose["v_key"] = vk;
  pose["h_base"] = e.pose.h_base;
  const Eigen::Vector3d fwd = e.base.orientation * Eigen::Vector3d::UnitX();
  json out;
  out["schema"] = kFrameSchema;
  out["session"] = e.session;
  out["index"] = e.index;
  // virtual time: frames are generated on a fixed 50 Hz clock
  out["t"] = static_cast<double>(e.index) / kDefaultFps;
  out["rate_hz"] = rate_hz;
  out["command"] = command_json(e.command);
  out["pose"] = pose;
  out["base"] = {{"position", vec_json(e.base.position)}, {"yaw", std::atan2(fwd.y(), fwd.x())}};
  out["keypoints_world"] = world;
  out["dropped"] = e.dropped;
  return out;
}

double env_number(const char* name, double fallback) {
  const char* v = std::getenv(name);
  if (!v || !*v) return fallback;
  char* end = nullptr;
  const double d = std::strtod(v, &end);
  if (end == v || *end != '\0') throw Error(std::string("environment variable ") + name + " is not a number: " + v);
  return d;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void parse_bind_address(const std::string& text, std::string& host, int& port) {
  const auto colon = text.rfind(':');
  std::string h = colon == std::string::npos ? text : text.substr(0, colon);
  if (colon != std::string::npos) {
    const std::string p = text.substr(colon + 1);
    try {
      size_t used = 0;
      const int v = std::stoi(p, &used);
      if (used != p.size() || v < 0 || v > 65535) throw std::invalid_argument(p);
      port = v;
    } catch (const std::logic_error&) {
      throw Error("bad port in bind address '" + text + "'");
    }
  }
  if (!h.empty()) host = h;
}

ServiceConfig ServiceConfig::from_env() {
  ServiceConfig c;
  if (const char* a = std::getenv("GMP_BIND_ADDR"); a && *a) parse_bind_address(a, c.host, c.port);
  if (const char* g = std::getenv("GMP_CHECKPOINT_GMP")) c.gmp_checkpoint = g;
  if (const char* m = std::getenv("GMP_CHECKPOINT_CMD")) c.cmd_checkpoint = m;
  c.rate_hz = env_number("GMP_RATE_HZ", c.rate_hz);
  c.max_sessions = static_cast<int>(env_number("GMP_MAX_SESSIONS", c.max_sessions));
  c.idle_timeout = std::chrono::milliseconds(static_cast<std::int64_t>(
      1000.0 * env_number("GMP_IDLE_TIMEOUT_S", c.idle_timeout.count() / 1000.0)));
  return c;
}

void ServiceConfig::validate() const {
  if (!std::isfinite(rate_hz)) throw Error("service rate must be finite");
  if (max_sessions < 1) throw Error("max_sessions must be >= 1");
  if (queue_capacity < 1) throw Error("queue_capacity must be >= 1");
  if (idle_timeout.count() <= 0) throw Error("idle timeout must be positive");
  if (port < 0 || port > 65535) throw Error("port out of range");
}

GeneratorModels load_generator_models(const std::string& gmp_path, const std::string& cmd_path) {
  const Checkpoint g = load_checkpoint(gmp_path);
  const Checkpoint c = load_checkpoint(cmd_path);
  if (g.metadata.count("kind") && g.meta("kind") != "gmp") {
    throw Error(gmp_path + " is not a motion prior checkpoint (kind " + g.meta("kind") + ")");
  }
  if (c.metadata.count("kind") && c.meta("kind") != "cmd") {
    throw Error(cmd_path + " is not a command encoder checkpoint (kind " + c.meta("kind") + ")");
  }
  GeneratorModels m;
  m.cvae = std::make_shared<const MotionCvae>(MotionCvae::load(g));
  m.encoder = std::make_shared<const CommandEncoder>(CommandEncoder::load(c));
  if (m.encoder->latent_dim() != m.cvae->latent_dim()) {
    throw Error("command encoder and motion prior latent sizes differ");
  }
  if (c.metadata.count("decoder_digest") && c.meta("decoder_digest") != decoder_digest(*m.cvae)) {
    warn("command encoder " + cmd_path + " was trained against a different decoder");
  }
  return m;
}

std::string frame_to_json(const FrameEvent& e, double rate_hz) {
  return frame_value(e, rate_hz).dump();
}

FrameGenerator::FrameGenerator(GeneratorModels models, RobotPose start, const RobotModel& model)
    : models_(std::move(models)), model_(&model), pose_(std::move(start)) {
  if (!models_.cvae || !models_.encoder) throw Error("frame generator needs both models");
  if (!pose_.is_finite()) throw Error("frame generator start pose is not finite");
}

FrameEvent FrameGenerator::next(const VelocityCommand& requested) {
  const VelocityCommand c = clamp_command(requested).command;
  const Eigen::VectorXd z = models_.encoder->encode(c, pose_);
  const RobotPose raw = step(*models_.cvae, pose_, z);
  if (!raw.is_finite()) {
    throw Error("generation diverged at frame " + std::to_string(index_) + ": non-finite pose");
  }
  xy_ += Eigen::Rotation2Dd(yaw_) * pose_.v_base.head<2>() * dt_;
  yaw_ += pose_.w_base.z() * dt_;
  pose_ = reproject(raw, *model_);

  FrameEvent e;
  e.index = index_++;
  e.command = c;
  e.pose = pose_;
  e.base.position = Eigen::Vector3d(xy_.x(), xy_.y(), pose_.h_base);
  e.base.orientation = Eigen::Quaterniond(Eigen::AngleAxisd(yaw_, Eigen::Vector3d::UnitZ()));
  for (int k = 0; k < kKeypointCount; ++k) e.keypoints_world[k] = e.base.apply(pose_.p_key[k]);
  return e;
}

std::vector<FrameEvent> replay_session(const GeneratorModels& models, const RobotPose& start,
                                       const std::vector<CommandLogEntry>& log,
                                       std::int64_t frames, const std::string& session_id) {
  FrameGenerator gen(models, start, default_robot_model());
  std::vector<FrameEvent> out;
  VelocityCommand c;
  size_t next = 0;
  for (std::int64_t k = 0; k < frames; ++k) {
    while (next < log.size() && log[next].frame <= k) c = log[next++].command;
    out.push_back(gen.next(c));
    out.back().session = session_id;
  }
  return out;
}

Session::Session(std::string id, GeneratorModels models, RobotPose start,
                 const ServiceConfig& config)
    : id_(std::move(id)),
      start_(start),
      config_(config),
      gen_(std::move(models), std::move(start), default_robot_model()),
      last_active_(Clock::now()) {
  thread_ = std::jthread([this](std::stop_token st) { run(st); });
}

Session::~Session() { stop(); }

void Session::run(std::stop_token st) {
  const bool paced = config_.rate_hz > 0.0;
  const auto period = std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double>(paced ? 1.0 / config_.rate_hz : 0.0));
  auto due = Clock::now();
  std::unique_lock lock(mutex_);
  while (!st.stop_requested() && !stopped_) {
    try {
      FrameEvent e = gen_.next(command_);
      e.session = id_;
      buffer_.push_back(std::move(e));
    } catch (const Error& e) {
      warn("session " + id_ + ": " + e.what());
      stopped_ = true;
      break;
    }
    if (buffer_.size() > config_.queue_capacity) {
      // drop-oldest
      buffer_.pop_front();
      ++overflow_;
    }
    cv_.notify_all();
    if (paced) {
      due += period;
      cv_.wait_until(lock, due, [&] { return stopped_ || st.stop_requested(); });
    } else {
      lock.unlock();
      std::this_thread::yield();
      lock.lock();
    }
  }
  stopped_ = true;
  cv_.notify_all();
}

CommandAck Session::post_command(const VelocityCommand& requested) {
  const ClampedCommand cc = clamp_command(requested);
  std::lock_guard lock(mutex_);
  if (stopped_) throw SessionError(410, "session " + id_ + " has ended");
  command_ = cc.command;
  CommandAck ack{requested, cc.command, cc.clamped, gen_.next_index()};
  if (!log_.empty() && log_.back().frame == ack.effective_frame) {
    log_.back().command = cc.command;
  } else {
    log_.push_back({ack.effective_frame, cc.command});
  }
  last_active_ = Clock::now();
  return ack;
}

ReadResult Session::read(std::int64_t cursor, std::size_t limit, std::chrono::milliseconds wait) {
  std::unique_lock lock(mutex_);
  last_active_ = Clock::now();
  cv_.wait_for(lock, wait, [&] {
    return stopped_ || (!buffer_.empty() && buffer_.back().index >= cursor);
  });
  ReadResult r;
  r.next_cursor = cursor;
  if (!buffer_.empty() && buffer_.back().index >= cursor) {
    const std::int64_t oldest = buffer_.front().index;
    std::int64_t dropped = 0;
    if (cursor < oldest) {
      dropped = oldest - cursor;
      cursor = oldest;
    }
    for (std::int64_t i = cursor - oldest;
         i < static_cast<std::int64_t>(buffer_.size()) && r.frames.size() < limit; ++i) {
      r.frames.push_back(buffer_[i]);
    }
    r.frames.front().dropped = dropped;
    r.next_cursor = r.frames.back().index + 1;
  }
  r.closed = stopped_;
  return r;
}

Session::Snapshot Session::snapshot() {
  std::lock_guard lock(mutex_);
  last_active_ = Clock::now();
  Snapshot s;
  s.frames = gen_.next_index();
  s.command = command_;
  if (!buffer_.empty()) s.last = buffer_.back();
  s.overflow = overflow_;
  return s;
}

std::vector<CommandLogEntry> Session::command_log() {
  std::lock_guard lock(mutex_);
  return log_;
}

void Session::touch() {
  std::lock_guard lock(mutex_);
  last_active_ = Clock::now();
}

Clock::duration Session::idle() const {
  std::lock_guard lock(mutex_);
  return Clock::now() - last_active_;
}

void Session::stop() {
  {
    std::lock_guard lock(mutex_);
    stopped_ = true;
  }
  thread_.request_stop();
  cv_.notify_all();
  if (thread_.joinable() && thread_.get_id() != std::this_thread::get_id()) thread_.join();
}

bool Session::stopped() const {
  std::lock_guard lock(mutex_);
  return stopped_;
}

SessionManager::SessionManager(ServiceConfig config, const RobotModel& model)
    : config_(std::move(config)), model_(&model), standing_(standing_pose(model)) {
  config_.validate();
  salt_ = std::random_device{}();
  salt_ = (salt_ << 32) ^ std::random_device{}();
  reaper_ = std::jthread([this](std::stop_token st) {
    const auto tick = std::min<std::chrono::milliseconds>(config_.idle_timeout / 4,
                                                          std::chrono::milliseconds(1000));
    std::mutex m;
    std::unique_lock lock(m);
    while (!st.stop_requested()) {
      reaper_cv_.wait_for(lock, tick, [&] { return st.stop_requested(); });
      if (!st.stop_requested()) reap();
    }
  });
}

SessionManager::~SessionManager() {
  reaper_.request_stop();
  reaper_cv_.notify_all();
  reaper_.join();
  std::map<std::string, std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mutex_);
    all.swap(sessions_);
  }
  for (auto& [id, s] : all) s->stop();
}

std::string SessionManager::new_id() {
  std::ostringstream out;
  out << std::hex << splitmix(salt_ + ++counter_);
  return out.str();
}

GeneratorModels SessionManager::models_for(const std::string& gmp_path,
                                           const std::string& cmd_path) {
  const std::string g = gmp_path.empty() ? config_.gmp_checkpoint : gmp_path;
  const std::string c = cmd_path.empty() ? config_.cmd_checkpoint : cmd_path;
  if (g.empty() || c.empty()) {
    throw SessionError(400, "no checkpoint given and none configured (gmp and cmd are required)");
  }
  const auto key = std::make_pair(g, c);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  try {
    GeneratorModels m = load_generator_models(g, c);
    cache_[key] = m;
    return m;
  } catch (const Error& e) {
    throw SessionError(400, std::string("cannot load checkpoints: ") + e.what());
  }
}

std::shared_ptr<Session> SessionManager::create(const std::string& gmp_path,
                                                const std::string& cmd_path) {
  std::lock_guard lock(mutex_);
  if (static_cast<int>(sessions_.size()) >= config_.max_sessions) {
    throw SessionError(429, "session limit reached (" + std::to_string(config_.max_sessions) + ")");
  }
  GeneratorModels models = models_for(gmp_path, cmd_path);
  auto s = std::make_shared<Session>(new_id(), std::move(models), standing_, config_);
  sessions_[s->id()] = s;
  return s;
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

bool SessionManager::remove(const std::string& id) {
  std::shared_ptr<Session> s;
  {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return false;
    s = it->second;
    sessions_.erase(it);
  }
  s->stop();
  return true;
}

std::size_t SessionManager::size() {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

int SessionManager::reap() {
  std::vector<std::shared_ptr<Session>> idle;
  {
    std::lock_guard lock(mutex_);
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      if (it->second->idle() > config_.idle_timeout || it->second->stopped()) {
        idle.push_back(it->second);
        it = sessions_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& s : idle) s->stop();
  return static_cast<int>(idle.size());
}

// ---------------------------------------------------------------------------

struct HttpService::Impl {
  httplib::Server server;
  std::thread thread;
  ServiceConfig config;
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump() + "\n", "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& what) {
  send_json(res, status, {{"error", what}});
}

std::int64_t int_param(const httplib::Request& req, const char* name, std::int64_t fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string v = req.get_param_value(name);
  try {
    size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::logic_error&) {
    throw SessionError(400, std::string("query parameter ") + name + " must be an integer");
  }
}

}  // namespace

HttpService::HttpService(ServiceConfig config)
    : manager_(std::make_unique<SessionManager>(config)), impl_(std::make_unique<Impl>()) {
  impl_->config = std::move(config);
  auto& svr = impl_->server;
  SessionManager* mgr = manager_.get();
  const double rate = impl_->config.rate_hz;
  const int threads = impl_->config.max_sessions + 8;
  svr.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

  auto guarded = [](auto fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const SessionError& e) {
        send_error(res, e.status(), e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, std::string("malformed request body: ") + e.what());
      } catch (const Error& e) {
        send_error(res, 400, e.what());
      }
    };
  };
  auto session_of = [mgr](const httplib::Request& req) {
    auto s = mgr->find(req.matches[1]);
    if (!s) throw SessionError(404, "unknown session '" + std::string(req.matches[1]) + "'");
    return s;
  };

  svr.Get("/health", [mgr](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}, {"sessions", mgr->size()}});
  });

  svr.Post("/sessions", guarded([mgr, rate](const httplib::Request& req, httplib::Response& res) {
    std::string g, c;
    if (!req.body.empty()) {
      const json body = json::parse(req.body);
      if (!body.is_object()) throw SessionError(400, "request body must be a JSON object");
      g = body.value("gmp", "");
      c = body.value("cmd", "");
    }
    auto s = mgr->create(g, c);
    send_json(res, 201,
              {{"id", s->id()},
               {"schema", kFrameSchema},
               {"rate_hz", rate},
               {"stream", "/sessions/" + s->id() + "/stream"}});
  }));

  svr.Post(R"(/sessions/([^/]+)/command)",
           guarded([session_of](const httplib::Request& req, httplib::Response& res) {
             auto s = session_of(req);
             const json body = json::parse(req.body);
             if (!body.is_object()) throw SessionError(400, "request body must be a JSON object");
             VelocityCommand c;
             for (auto [key, field] : {std::pair{"vx", &c.vx}, std::pair{"vy", &c.vy},
                                       std::pair{"yaw_rate", &c.yaw_rate}}) {
               if (!body.contains(key) || !body[key].is_number()) {
                 throw SessionError(400, std::string("command field '") + key + "' must be a number");
               }
               *field = body[key].get<double>();
             }
             const CommandAck ack = s->post_command(c);
             send_json(res, 200,
                       {{"requested", command_json(ack.requested)},
                        {"command", command_json(ack.command)},
                        {"clamped", ack.clamped},
                        {"effective_frame", ack.effective_frame}});
           }));

  svr.Get(R"(/sessions/([^/]+)/state)",
          guarded([session_of, rate](const httplib::Request& req, httplib::Response& res) {
            auto s = session_of(req);
            const Session::Snapshot snap = s->snapshot();
            send_json(res, 200,
                      {{"id", s->id()},
                       {"frames", snap.frames},
                       {"command", command_json(snap.command)},
                       {"overflow", snap.overflow},
                       {"last", snap.last ? frame_value(*snap.last, rate) : json(nullptr)}});
          }));

  svr.Get(R"(/sessions/([^/]+)/frames)",
          guarded([session_of, rate](const httplib::Request& req, httplib::Response& res) {
            auto s = session_of(req);
            const std::int64_t cursor = int_param(req, "cursor", 0);
            const std::int64_t limit = int_param(req, "limit", 256);
            const std::int64_t wait = int_param(req, "wait_ms", 0);
            if (cursor < 0 || limit < 1 || wait < 0 || wait > 30000) {
              throw SessionError(400, "cursor >= 0, limit >= 1 and 0 <= wait_ms <= 30000 required");
            }
            const ReadResult r = s->read(cursor, static_cast<std::size_t>(limit),
                                         std::chrono::milliseconds(wait));
            json frames = json::array();
            for (const auto& f : r.frames) frames.push_back(frame_value(f, rate));
            send_json(res, 200,
                      {{"frames", frames}, {"next_cursor", r.next_cursor}, {"closed", r.closed}});
          }));

  svr.Get(R"(/sessions/([^/]+)/stream)",
          guarded([session_of, rate](const httplib::Request& req, httplib::Response& res) {
            auto s = session_of(req);
            auto cursor = std::make_shared<std::int64_t>(int_param(req, "cursor", 0));
            const std::int64_t max_frames = int_param(req, "max_frames", -1);
            auto sent = std::make_shared<std::int64_t>(0);
            res.set_chunked_content_provider(
                "application/x-ndjson",
                [s, cursor, sent, max_frames, rate](size_t, httplib::DataSink& sink) {
                  if (!sink.is_writable()) return false;
                  std::size_t limit = 64;
                  if (max_frames >= 0) limit = static_cast<std::size_t>(max_frames - *sent);
                  const ReadResult r = s->read(*cursor, limit, std::chrono::milliseconds(500));
                  for (const auto& f : r.frames) {
                    const std::string line = frame_to_json(f, rate) + "\n";
                    if (!sink.write(line.data(), line.size())) return false;
                    ++*sent;
                  }
                  *cursor = r.next_cursor;
                  if ((max_frames >= 0 && *sent >= max_frames) || (r.closed && r.frames.empty())) {
                    sink.done();
                  }
                  return true;
                });
          }));

  svr.Delete(R"(/sessions/([^/]+))",
             guarded([mgr](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               if (!mgr->remove(id)) throw SessionError(404, "unknown session '" + id + "'");
               send_json(res, 200, {{"deleted", id}});
             }));
}

HttpService::~HttpService() { stop(); }

int HttpService::start() {
  auto& svr = impl_->server;
  int port = impl_->config.port;
  if (port == 0) {
    port = svr.bind_to_any_port(impl_->config.host);
  } else if (!svr.bind_to_port(impl_->config.host, port)) {
    port = -1;
  }
  if (port < 0) {
    throw Error("cannot bind " + impl_->config.host + ":" + std::to_string(impl_->config.port));
  }
  impl_->thread = std::thread([&svr] { svr.listen_after_bind(); });
  svr.wait_until_ready();
  return port;
}

void HttpService::stop() {
  if (impl_->thread.joinable()) {
    impl_->server.stop();
    impl_->thread.join();
  }
}

}  // namespace gmp
