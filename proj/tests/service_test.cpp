#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <json.hpp>

#include "gmp/checkpoint.hpp"
#include "gmp/error.hpp"
#include "gmp/service.hpp"
#include "test_models.hpp"

// after Eigen: resolv.h defines _res
#include <httplib.h>

namespace gmp {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Paths {
  std::string gmp, cmd;
};

// Untrained full-size networks are enough for the plumbing and timing tests.
const Paths& checkpoints() {
  static const Paths paths = [] {
    const auto seqs = test::small_corpus(51, 1, 1.0);
    CvaeConfig c;
    MotionCvae cvae(c, PoseStats::fit(seqs));
    std::mt19937_64 rng(3);
    cvae.init(rng);
    const int last = cvae.decoder().layer_count() - 1;
    std::normal_distribution<double> n(0.0, 0.01);
    for (Eigen::Index i = 0; i < cvae.decoder().weight(last).size(); ++i) {
      cvae.decoder().weight(last)(i) = n(rng);
    }
    CommandEncoder enc({256, 256, 256}, cvae.latent_dim(), cvae.stats());
    enc.init(rng);
    const std::string dir = ::testing::TempDir();
    Paths p{dir + "/service_test_gmp.ckpt", dir + "/service_test_cmd.ckpt"};
    Checkpoint g;
    cvae.save(g);
    g.metadata["kind"] = "gmp";
    save_checkpoint(p.gmp, g);
    Checkpoint e;
    enc.save(e);
    e.metadata["kind"] = "cmd";
    save_checkpoint(p.cmd, e);
    return p;
  }();
  return paths;
}

ServiceConfig test_config(double rate = 50.0) {
  ServiceConfig c;
  c.port = 0;
  c.rate_hz = rate;
  c.gmp_checkpoint = checkpoints().gmp;
  c.cmd_checkpoint = checkpoints().cmd;
  return c;
}

class HttpTest : public ::testing::Test {
 protected:
  void start(ServiceConfig config) {
    service_ = std::make_unique<HttpService>(config);
    port_ = service_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(10, 0);
  }
  std::string create() {
    auto res = client_->Post("/sessions", "", "application/json");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 201);
    return json::parse(res->body)["id"];
  }
  json post_command(const std::string& id, double vx, double vy, double yaw) {
    const json body{{"vx", vx}, {"vy", vy}, {"yaw_rate", yaw}};
    auto res = client_->Post("/sessions/" + id + "/command", body.dump(), "application/json");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 200) << res->body;
    return json::parse(res->body);
  }
  std::vector<std::string> stream(const std::string& id, int frames) {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(20, 0);
    std::vector<std::string> lines;
    std::string pending;
    auto res = c.Get("/sessions/" + id + "/stream?max_frames=" + std::to_string(frames),
                     [&](const char* data, size_t n) {
                       pending.append(data, n);
                       size_t pos;
                       while ((pos = pending.find('\n')) != std::string::npos) {
                         lines.push_back(pending.substr(0, pos));
                         pending.erase(0, pos + 1);
                       }
                       return true;
                     });
    EXPECT_TRUE(res);
    return lines;
  }

  std::unique_ptr<HttpService> service_;
  std::unique_ptr<httplib::Client> client_;
  int port_ = 0;
};

TEST_F(HttpTest, CreateGivesDistinctIds) {
  start(test_config());
  const std::string a = create(), b = create();
  EXPECT_NE(a, b);
  EXPECT_EQ(service_->sessions().size(), 2u);
}

TEST_F(HttpTest, BadCheckpointIsClientError) {
  start(test_config());
  auto res = client_->Post("/sessions", R"({"gmp": "/nonexistent/prior.ckpt"})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_NE(res->body.find("nonexistent"), std::string::npos);
  res = client_->Post("/sessions", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST_F(HttpTest, CapacityLimit) {
  ServiceConfig c = test_config();
  c.max_sessions = 2;
  start(c);
  create();
  create();
  auto res = client_->Post("/sessions", "", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 429);
}

TEST_F(HttpTest, CommandIsClampedAndAcknowledged) {
  start(test_config());
  const std::string id = create();
  const json ack = post_command(id, 2.0, 0.0, 0.0);
  EXPECT_TRUE(ack["clamped"].get<bool>());
  EXPECT_EQ(ack["command"]["vx"].get<double>(), 1.5);
  EXPECT_EQ(ack["requested"]["vx"].get<double>(), 2.0);
  const json ok = post_command(id, 0.5, -0.1, 0.2);
  EXPECT_FALSE(ok["clamped"].get<bool>());
  // clamping twice changes nothing
  const json again = post_command(id, 1.5, 0.0, 0.0);
  EXPECT_FALSE(again["clamped"].get<bool>());

  auto res = client_->Post("/sessions/unknown/command", R"({"vx":1,"vy":0,"yaw_rate":0})",
                           "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  res = client_->Post("/sessions/" + id + "/command", R"({"vx":"fast"})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST_F(HttpTest, CommandTakesEffectOnNextFrame) {
  start(test_config());
  const std::string id = create();
  const json ack = post_command(id, 1.0, 0.0, 0.1);
  const std::int64_t k = ack["effective_frame"];
  auto res = client_->Get("/sessions/" + id + "/frames?cursor=" + std::to_string(k) + "&wait_ms=2000&limit=1");
  ASSERT_TRUE(res);
  const json body = json::parse(res->body);
  ASSERT_EQ(body["frames"].size(), 1u);
  EXPECT_EQ(body["frames"][0]["index"].get<std::int64_t>(), k);
  EXPECT_EQ(body["frames"][0]["command"]["vx"].get<double>(), 1.0);
  EXPECT_EQ(body["frames"][0]["command"]["yaw_rate"].get<double>(), 0.1);
}

TEST_F(HttpTest, OneSecondStreamAtFiftyHertz) {
  start(test_config(50.0));
  const std::string id = create();
  const auto t0 = Clock::now();
  const auto lines = stream(id, 50);
  const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
  ASSERT_EQ(lines.size(), 50u);
  for (size_t i = 0; i < lines.size(); ++i) {
    const json f = json::parse(lines[i]);
    EXPECT_EQ(f["schema"], kFrameSchema);
    EXPECT_EQ(f["index"].get<std::int64_t>(), static_cast<std::int64_t>(i));
    for (const auto& v : f["pose"]["q"]) EXPECT_TRUE(std::isfinite(v.get<double>()));
    EXPECT_EQ(f["keypoints_world"].size(), 8u);
  }
  // paced on the wall clock: about one second for 50 frames
  EXPECT_GT(elapsed, 0.8);
  EXPECT_LT(elapsed, 3.0);
}

TEST_F(HttpTest, StateAndDelete) {
  start(test_config());
  const std::string id = create();
  post_command(id, 0.3, 0.0, 0.0);
  stream(id, 3);
  auto res = client_->Get("/sessions/" + id + "/state");
  ASSERT_TRUE(res);
  const json s = json::parse(res->body);
  EXPECT_GE(s["frames"].get<std::int64_t>(), 3);
  EXPECT_EQ(s["command"]["vx"].get<double>(), 0.3);
  EXPECT_FALSE(s["last"].is_null());
  res = client_->Delete("/sessions/" + id);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  res = client_->Get("/sessions/" + id + "/state");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  res = client_->Delete("/sessions/" + id);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
}

TEST_F(HttpTest, ReplayOfCommandLogReproducesPayloads) {
  start(test_config(200.0));
  const std::string id = create();
  std::vector<std::string> lines;
  std::thread reader([&] { lines = stream(id, 120); });
  for (const auto& c : {VelocityCommand{0.8, 0.0, 0.0}, VelocityCommand{1.2, 0.1, -0.2},
                        VelocityCommand{3.0, -1.0, 1.0}, VelocityCommand{0.0, 0.0, 0.0}}) {
    std::this_thread::sleep_for(std::chrono::milliseconds(90));
    post_command(id, c.vx, c.vy, c.yaw_rate);
  }
  reader.join();
  ASSERT_EQ(lines.size(), 120u);
  auto session = service_->sessions().find(id);
  ASSERT_TRUE(session);
  const auto log = session->command_log();
  EXPECT_EQ(log.size(), 4u);
  const GeneratorModels models = load_generator_models(checkpoints().gmp, checkpoints().cmd);
  const auto replay = replay_session(models, session->start_pose(), log, 120, id);
  for (size_t i = 0; i < 120; ++i) {
    EXPECT_EQ(frame_to_json(replay[i], 200.0), lines[i]) << "frame " << i;
  }
}

TEST_F(HttpTest, SessionsAreIsolatedAndGaplessUnderConcurrentLoad) {
  start(test_config(100.0));
  const std::vector<std::string> ids{create(), create(), create()};
  std::vector<std::vector<std::string>> got(3);
  std::vector<std::thread> readers;
  for (int s = 0; s < 3; ++s) readers.emplace_back([&, s] { got[s] = stream(ids[s], 150); });
  // steer only the first two
  for (int k = 0; k < 10; ++k) {
    std::this_thread::sleep_for(std::chrono::milliseconds(40));
    post_command(ids[0], 0.1 * k, 0.0, 0.0);
    post_command(ids[1], 1.5, 0.03 * k, -0.03 * k);
  }
  for (auto& t : readers) t.join();
  for (int s = 0; s < 3; ++s) {
    ASSERT_EQ(got[s].size(), 150u) << "session " << s;
    for (size_t i = 0; i < got[s].size(); ++i) {
      const json f = json::parse(got[s][i]);
      EXPECT_EQ(f["index"].get<std::int64_t>(), static_cast<std::int64_t>(i));
      EXPECT_EQ(f["dropped"].get<std::int64_t>(), 0);
      EXPECT_EQ(f["session"], ids[s]);
    }
  }
  // the unsteered session matches a replay with an empty log
  const GeneratorModels models = load_generator_models(checkpoints().gmp, checkpoints().cmd);
  auto third = service_->sessions().find(ids[2]);
  const auto replay = replay_session(models, third->start_pose(), {}, 150, ids[2]);
  for (size_t i = 0; i < 150; ++i) EXPECT_EQ(frame_to_json(replay[i], 100.0), got[2][i]);
}

TEST(SessionTest, SlowReaderSeesDropOldestOverflow) {
  ServiceConfig c = test_config(0.0);
  c.queue_capacity = 8;
  SessionManager mgr(c);
  auto s = mgr.create();
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  const ReadResult r = s->read(0, 4, std::chrono::milliseconds(0));
  ASSERT_FALSE(r.frames.empty());
  EXPECT_GT(r.frames.front().dropped, 0);
  EXPECT_EQ(r.frames.front().index, r.frames.front().dropped);
  for (size_t i = 1; i < r.frames.size(); ++i) {
    EXPECT_EQ(r.frames[i].index, r.frames[i - 1].index + 1);
    EXPECT_EQ(r.frames[i].dropped, 0);
  }
  EXPECT_GT(s->snapshot().overflow, 0);
}

TEST(SessionTest, IdleSessionsAreReaped) {
  ServiceConfig c = test_config();
  c.idle_timeout = std::chrono::milliseconds(150);
  SessionManager mgr(c);
  auto s = mgr.create();
  const std::string id = s->id();
  s.reset();
  std::this_thread::sleep_for(std::chrono::milliseconds(500));
  EXPECT_EQ(mgr.find(id), nullptr);
  EXPECT_EQ(mgr.size(), 0u);
}

TEST(SessionTest, ActiveSessionsSurviveReaping) {
  ServiceConfig c = test_config();
  c.idle_timeout = std::chrono::milliseconds(200);
  SessionManager mgr(c);
  auto s = mgr.create();
  for (int i = 0; i < 6; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(80));
    s->touch();
  }
  EXPECT_EQ(mgr.find(s->id()), s);
}

TEST(ServiceThroughput, GeneratorSustainsFiftyFramesPerSecond) {
  const GeneratorModels models = load_generator_models(checkpoints().gmp, checkpoints().cmd);
  FrameGenerator gen(models, standing_pose(), default_robot_model());
  const int n = 250;
  const auto t0 = Clock::now();
  for (int i = 0; i < n; ++i) gen.next({1.0, 0.0, 0.0});
  const double fps = n / std::chrono::duration<double>(Clock::now() - t0).count();
  std::printf("single-session generation: %.0f frames/s\n", fps);
  EXPECT_GE(fps, 50.0);

  // unpaced session thread
  ServiceConfig c = test_config(0.0);
  c.queue_capacity = 100000;
  SessionManager mgr(c);
  auto s = mgr.create();
  std::this_thread::sleep_for(std::chrono::seconds(1));
  EXPECT_GE(s->snapshot().frames, 50);
}

TEST(ServiceConfigTest, BindAddressAndEnvironment) {
  std::string host = "127.0.0.1";
  int port = 8080;
  parse_bind_address("0.0.0.0:9000", host, port);
  EXPECT_EQ(host, "0.0.0.0");
  EXPECT_EQ(port, 9000);
  parse_bind_address(":9100", host, port);
  EXPECT_EQ(host, "0.0.0.0");
  EXPECT_EQ(port, 9100);
  EXPECT_THROW(parse_bind_address("host:notaport", host, port), Error);
  EXPECT_THROW(parse_bind_address("host:70000", host, port), Error);

  setenv("GMP_BIND_ADDR", "localhost:7001", 1);
  setenv("GMP_RATE_HZ", "25", 1);
  setenv("GMP_CHECKPOINT_GMP", "/a.ckpt", 1);
  const ServiceConfig c = ServiceConfig::from_env();
  EXPECT_EQ(c.host, "localhost");
  EXPECT_EQ(c.port, 7001);
  EXPECT_EQ(c.rate_hz, 25.0);
  EXPECT_EQ(c.gmp_checkpoint, "/a.ckpt");
  setenv("GMP_RATE_HZ", "fast", 1);
  EXPECT_THROW(ServiceConfig::from_env(), Error);
  unsetenv("GMP_BIND_ADDR");
  unsetenv("GMP_RATE_HZ");
  unsetenv("GMP_CHECKPOINT_GMP");
}

TEST(ServiceModels, RejectsWrongCheckpointKind) {
  EXPECT_THROW(load_generator_models(checkpoints().cmd, checkpoints().gmp), Error);
}

}  // namespace
}  // namespace gmp
