#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "gmp/command.hpp"
#include "gmp/command_encoder.hpp"
#include "gmp/motion_cvae.hpp"
#include "gmp/rollout.hpp"

namespace gmp {

inline constexpr const char* kFrameSchema = "gmp.frame/1";

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string gmp_checkpoint;
  std::string cmd_checkpoint;
  double rate_hz = 50.0;        // <= 0 generates as fast as possible
  int max_sessions = 64;
  std::chrono::milliseconds idle_timeout{5 * 60 * 1000};
  std::size_t queue_capacity = 512;  // frames kept per session

  // GMP_BIND_ADDR (host:port), GMP_CHECKPOINT_GMP, GMP_CHECKPOINT_CMD,
  // GMP_RATE_HZ, GMP_MAX_SESSIONS, GMP_IDLE_TIMEOUT_S override the defaults.
  static ServiceConfig from_env();
  void validate() const;
};

// "host:port", "host" or ":port".
void parse_bind_address(const std::string& text, std::string& host, int& port);

// Decoder and command encoder shared read-only by the sessions using them.
struct GeneratorModels {
  std::shared_ptr<const MotionCvae> cvae;
  std::shared_ptr<const CommandEncoder> encoder;
};

GeneratorModels load_generator_models(const std::string& gmp_path, const std::string& cmd_path);

struct FrameEvent {
  std::string session;
  std::int64_t index = 0;
  VelocityCommand command;
  RobotPose pose;
  BasePose base;   // yaw-only base integrated from the pose velocities
  KeypointSet keypoints_world{};
  std::int64_t dropped = 0;  // frames this reader missed since its last event
};

std::string frame_to_json(const FrameEvent& e, double rate_hz);

// Command log entry: `command` is in effect from frame `frame` on.
struct CommandLogEntry {
  std::int64_t frame = 0;
  VelocityCommand command;
};

// Deterministic per-session generator state.
class FrameGenerator {
 public:
  FrameGenerator(GeneratorModels models, RobotPose start, const RobotModel& model);

  FrameEvent next(const VelocityCommand& c);
  std::int64_t next_index() const { return index_; }
  const RobotPose& pose() const { return pose_; }

 private:
  GeneratorModels models_;
  const RobotModel* model_;
  RobotPose pose_;
  double yaw_ = 0.0;
  Eigen::Vector2d xy_ = Eigen::Vector2d::Zero();
  double dt_ = 1.0 / kDefaultFps;
  std::int64_t index_ = 0;
};

// Frames 0..frames-1 for a command log, as a live session would produce them.
std::vector<FrameEvent> replay_session(const GeneratorModels& models, const RobotPose& start,
                                       const std::vector<CommandLogEntry>& log,
                                       std::int64_t frames, const std::string& session_id = "");

struct CommandAck {
  VelocityCommand requested;
  VelocityCommand command;
  bool clamped = false;
  std::int64_t effective_frame = 0;
};

struct ReadResult {
  std::vector<FrameEvent> frames;
  std::int64_t next_cursor = 0;
  bool closed = false;
};

class Session {
 public:
  Session(std::string id, GeneratorModels models, RobotPose start, const ServiceConfig& config);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const { return id_; }
  CommandAck post_command(const VelocityCommand& requested);

  // Frames with index >= cursor that are still buffered. Blocks up to `wait`
  // for the first one. A reader that fell behind gets the gap in `dropped`.
  ReadResult read(std::int64_t cursor, std::size_t limit, std::chrono::milliseconds wait);

  struct Snapshot {
    std::int64_t frames = 0;  // frames generated so far
    VelocityCommand command;
    std::optional<FrameEvent> last;
    std::int64_t overflow = 0;
    double idle_seconds = 0.0;
  };
  Snapshot snapshot();
  std::vector<CommandLogEntry> command_log();
  const RobotPose& start_pose() const { return start_; }

  void touch();
  std::chrono::steady_clock::duration idle() const;
  void stop();
  bool stopped() const;

 private:
  void run(std::stop_token st);

  std::string id_;
  RobotPose start_;
  ServiceConfig config_;
  mutable std::mutex mutex_;
  std::condition_variable_any cv_;
  FrameGenerator gen_;
  VelocityCommand command_;
  std::vector<CommandLogEntry> log_;
  std::deque<FrameEvent> buffer_;
  std::int64_t overflow_ = 0;
  bool stopped_ = false;
  std::chrono::steady_clock::time_point last_active_;
  std::jthread thread_;
};

class SessionError : public Error {
 public:
  SessionError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class SessionManager {
 public:
  explicit SessionManager(ServiceConfig config, const RobotModel& model = default_robot_model());
  ~SessionManager();

  // Empty paths fall back to the configured checkpoints. Throws SessionError.
  std::shared_ptr<Session> create(const std::string& gmp_path = "",
                                  const std::string& cmd_path = "");
  std::shared_ptr<Session> find(const std::string& id);
  bool remove(const std::string& id);
  std::size_t size();
  // Stops sessions idle for longer than the timeout; returns how many.
  int reap();

  const ServiceConfig& config() const { return config_; }

 private:
  GeneratorModels models_for(const std::string& gmp_path, const std::string& cmd_path);
  std::string new_id();

  ServiceConfig config_;
  const RobotModel* model_;
  RobotPose standing_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::pair<std::string, std::string>, GeneratorModels> cache_;
  std::uint64_t counter_ = 0;
  std::uint64_t salt_;
  std::jthread reaper_;
  std::condition_variable_any reaper_cv_;
};

// HTTP front end; see docs/formats.md for the endpoints and event schema.
class HttpService {
 public:
  explicit HttpService(ServiceConfig config);
  ~HttpService();

  // Binds and serves on a background thread; returns the bound port.
  int start();
  void stop();
  SessionManager& sessions() { return *manager_; }

 private:
  struct Impl;
  std::unique_ptr<SessionManager> manager_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gmp
