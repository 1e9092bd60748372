#include <algorithm>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gmp/command_encoder.hpp"
#include "gmp/error.hpp"
#include "gmp/gait_synth.hpp"
#include "gmp/json_io.hpp"
#include "gmp/metrics.hpp"
#include "gmp/motion_cvae.hpp"
#include "gmp/retargeter.hpp"
#include "gmp/reward.hpp"
#include "gmp/rollout.hpp"
#include "gmp/service.hpp"

namespace fs = std::filesystem;
using namespace gmp;

namespace {

// Training data: clip files / directories of *.clip, or the synthetic corpus.
struct DataOptions {
  std::vector<std::string> paths;
  int clips = 5;
  double clip_seconds = 4.0;
  std::uint64_t corpus_seed = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--data", paths, "Robot clips or directories of *.clip (default: synthetic corpus)");
    cmd->add_option("--clips", clips, "Synthetic corpus: clips before mirroring")->check(CLI::PositiveNumber);
    cmd->add_option("--clip-seconds", clip_seconds, "Synthetic corpus: seconds per clip")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--corpus-seed", corpus_seed, "Synthetic corpus seed");
  }

  std::vector<PoseSequence> load() const {
    const RobotModel& model = default_robot_model();
    std::vector<MotionClip> clips_out;
    if (paths.empty()) {
      CorpusOptions o;
      o.clips = clips;
      o.clip_seconds = clip_seconds;
      o.seed = corpus_seed;
      clips_out = synth_corpus(o, model);
    } else {
      std::vector<std::string> files;
      for (const auto& p : paths) {
        if (fs::is_directory(p)) {
          for (const auto& e : fs::directory_iterator(p)) {
            if (e.is_regular_file() && e.path().extension() == ".clip") files.push_back(e.path());
          }
        } else {
          files.push_back(p);
        }
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw Error("no clip files found under --data");
      for (const auto& f : files) clips_out.push_back(load_clip(f));
    }
    std::vector<PoseSequence> out;
    std::size_t frames = 0;
    for (const auto& c : clips_out) {
      out.push_back(featurize(c, model));
      frames += out.back().size();
    }
    std::printf("dataset: %zu sequences, %zu frames\n", out.size(), frames);
    return out;
  }
};

int run_retarget(const std::string& input, const std::string& out, const std::string& source,
                 const RetargetWeights& w, const RetargetOptions& opts) {
  const RobotModel human = source.empty() ? default_human_model() : load_model(source);
  const MotionClip clip = load_clip(input);
  const RetargetProblem problem = make_problem(clip, human, default_robot_model(), w);
  const RetargetResult r = retarget(problem, opts);
  save_clip(out, r.clip);
  const RetargetLoss& first = r.trace.front();
  std::printf("frames %d  iterations %zu  converged %s\n", problem.frames(), r.trace.size(),
              r.converged ? "yes" : "no");
  std::printf("loss   initial %.6g  best %.6g (iter %d)  vec %.6g  foot %.6g  smooth %.6g\n",
              first.total, r.best.total, r.best_iter, r.best.vec, r.best.foot, r.best.smooth);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

void write_cvae_curve(const std::string& path, const std::vector<CvaeEpochStats>& curve) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  f << "epoch,lr,ss_probability,train_rec,train_kl,val_rec\n";
  f.precision(10);
  for (const auto& c : curve) {
    f << c.epoch << ',' << c.lr << ',' << c.ss_probability << ',' << c.train_rec << ','
      << c.train_kl << ',' << c.val_rec << '\n';
  }
}

int run_serve(ServiceConfig config) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  HttpService service(config);
  const int port = service.start();
  std::printf("serving on %s:%d (rate %.3g Hz, max %d sessions)\n", config.host.c_str(), port,
              config.rate_hz, config.max_sessions);
  std::fflush(stdout);
  int sig = 0;
  sigwait(&set, &sig);
  std::printf("shutting down\n");
  service.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generative motion prior tools"};
  app.require_subcommand(1);

  // retarget
  auto* retarget_cmd = app.add_subcommand("retarget", "Retarget a human clip onto the robot");
  std::string rt_in, rt_out, rt_source;
  RetargetWeights rt_w;
  RetargetOptions rt_opts;
  retarget_cmd->add_option("--input", rt_in, "Human motion clip")->required();
  retarget_cmd->add_option("--out", rt_out, "Output robot clip")->required();
  retarget_cmd->add_option("--source-model", rt_source, "Human model descriptor (default: bundled)");
  retarget_cmd->add_option("--alpha", rt_w.alpha, "Limb direction weight");
  retarget_cmd->add_option("--beta", rt_w.beta, "Foot contact weight");
  retarget_cmd->add_option("--gamma", rt_w.gamma, "Smoothness weight");
  retarget_cmd->add_option("--iters", rt_opts.max_iters, "Maximum iterations")->check(CLI::PositiveNumber);
  retarget_cmd->add_option("--lr", rt_opts.lr, "Initial step size")->check(CLI::PositiveNumber);

  // train-gmp
  auto* gmp_cmd = app.add_subcommand("train-gmp", "Train the motion prior");
  DataOptions gmp_data;
  gmp_data.add_to(gmp_cmd);
  CvaeConfig cvae_cfg;
  std::string gmp_out, gmp_curve;
  std::uint64_t gmp_seed = 0;
  int gmp_log_every = 10;
  gmp_cmd->add_option("--out", gmp_out, "Output checkpoint")->required();
  gmp_cmd->add_option("--epochs", cvae_cfg.epochs, "Epochs");
  gmp_cmd->add_option("--seed", gmp_seed, "Seed");
  gmp_cmd->add_option("--batch", cvae_cfg.batch_size, "Batch size");
  gmp_cmd->add_option("--lr-start", cvae_cfg.lr_start, "Initial learning rate");
  gmp_cmd->add_option("--lr-end", cvae_cfg.lr_end, "Final learning rate");
  gmp_cmd->add_option("--latent", cvae_cfg.latent_dim, "Latent size");
  gmp_cmd->add_option("--kl-weight", cvae_cfg.kl_weight, "KL weight");
  gmp_cmd->add_option("--curve", gmp_curve, "Write the per-epoch losses as CSV");
  gmp_cmd->add_option("--log-every", gmp_log_every, "Print every N epochs")->check(CLI::PositiveNumber);

  // train-cmd
  auto* cmd_cmd = app.add_subcommand("train-cmd", "Train the command encoder against a frozen prior");
  DataOptions cmd_data;
  cmd_data.add_to(cmd_cmd);
  CommandTrainConfig cmd_cfg;
  std::string cmd_gmp, cmd_out;
  std::uint64_t cmd_seed = 0;
  cmd_cmd->add_option("--gmp", cmd_gmp, "Motion prior checkpoint")->required();
  cmd_cmd->add_option("--out", cmd_out, "Output checkpoint")->required();
  cmd_cmd->add_option("--horizon", cmd_cfg.horizon, "Rollout frames per update");
  cmd_cmd->add_option("--epochs", cmd_cfg.epochs, "Passes over the start poses");
  cmd_cmd->add_option("--seed", cmd_seed, "Seed");
  cmd_cmd->add_option("--lr", cmd_cfg.lr, "Learning rate");
  cmd_cmd->add_option("--latent-reg", cmd_cfg.latent_reg, "Weight of ||z||^2");
  cmd_cmd->add_option("--batch", cmd_cfg.batch_size, "Batch size");

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Roll out the prior into a robot clip");
  std::string gen_gmp, gen_cmdckpt, gen_command, gen_out, gen_start;
  int gen_n = 120, gen_start_frame = 0;
  std::uint64_t gen_seed = 0;
  gen_cmd->add_option("--gmp", gen_gmp, "Motion prior checkpoint")->required();
  auto* gen_cmd_opt = gen_cmd->add_option("--cmd", gen_cmdckpt, "Command encoder checkpoint");
  gen_cmd->add_option("--command", gen_command, "vx,vy,yaw_rate (needs --cmd)")->needs(gen_cmd_opt);
  gen_cmd->add_option("--n", gen_n, "Frames to generate")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen_seed, "Seed for prior sampling (no --cmd)");
  gen_cmd->add_option("--start", gen_start, "Clip holding the start pose (default: standing)");
  gen_cmd->add_option("--start-frame", gen_start_frame, "Frame of --start")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--out", gen_out, "Output clip")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Distribution and alignment metrics between clip sets");
  std::vector<std::string> ev_robot, ev_ref;
  std::string ev_episodes;
  bool ev_json = false;
  eval_cmd->add_option("--robot", ev_robot, "Robot clips")->required();
  eval_cmd->add_option("--ref", ev_ref, "Reference clips, paired with --robot by position")->required();
  eval_cmd->add_option("--episodes", ev_episodes, "Velocity episodes JSON for MELV");
  eval_cmd->add_flag("--json", ev_json, "JSON output");

  // eval-reward
  auto* rw_cmd = app.add_subcommand("eval-reward", "Reward breakdown of one control step");
  std::string rw_state, rw_ref, rw_command = "0,0,0";
  RewardConfig rw_cfg;
  bool rw_json = false;
  rw_cmd->add_option("--state", rw_state, "Control state JSON")->required();
  rw_cmd->add_option("--ref", rw_ref, "Reference frame JSON")->required();
  rw_cmd->add_option("--command", rw_command, "vx,vy,yaw_rate");
  rw_cmd->add_option("--tracking-scale", rw_cfg.tracking_scale, "Scale inside the guidance exponentials");
  rw_cmd->add_flag("--squared-norm", rw_cfg.squared_norm, "Use squared errors in the guidance terms");
  rw_cmd->add_flag("--json", rw_json, "JSON output");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Session service streaming commanded rollouts");
  std::string sv_gmp, sv_cmd, sv_addr;
  double sv_rate = -1.0;
  int sv_max = 0;
  double sv_idle = 0.0;
  serve_cmd->add_option("--gmp", sv_gmp, "Motion prior checkpoint (env GMP_CHECKPOINT_GMP)");
  serve_cmd->add_option("--cmd", sv_cmd, "Command encoder checkpoint (env GMP_CHECKPOINT_CMD)");
  serve_cmd->add_option("--addr", sv_addr, "host:port (env GMP_BIND_ADDR, default 127.0.0.1:8080)");
  serve_cmd->add_option("--rate", sv_rate, "Frames per second, 0 = unpaced (env GMP_RATE_HZ)");
  serve_cmd->add_option("--max-sessions", sv_max, "Concurrent session limit")->check(CLI::PositiveNumber);
  serve_cmd->add_option("--idle-timeout", sv_idle, "Idle seconds before a session is dropped")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (app.get_subcommands().empty()) {
      std::cerr << "error: " << e.what() << "\n\n" << app.help();
      return 2;
    }
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*retarget_cmd) return run_retarget(rt_in, rt_out, rt_source, rt_w, rt_opts);

    if (*gmp_cmd) {
      const auto seqs = gmp_data.load();
      std::printf("training motion prior: %d epochs, batch %d, lr %.3g -> %.3g, seed %llu\n",
                  cvae_cfg.epochs, cvae_cfg.batch_size, cvae_cfg.lr_start, cvae_cfg.lr_end,
                  static_cast<unsigned long long>(gmp_seed));
      const CvaeTrainResult r = train_cvae(seqs, cvae_cfg, gmp_seed, [&](const CvaeEpochStats& s) {
        if (s.epoch == 1 || s.epoch % gmp_log_every == 0 || s.epoch == cvae_cfg.epochs) {
          std::printf("epoch %4d  lr %.3e  ss %.2f  rec %.6f  kl %.6f  val_rec %.6f\n", s.epoch,
                      s.lr, s.ss_probability, s.train_rec, s.train_kl, s.val_rec);
          std::fflush(stdout);
        }
      });
      save_checkpoint(gmp_out, cvae_checkpoint(r, cvae_cfg));
      if (!gmp_curve.empty()) write_cvae_curve(gmp_curve, r.curve);
      std::printf("best epoch %d  val_rec %.6f\nwrote %s\n", r.best_epoch,
                  r.curve[r.best_epoch - 1].val_rec, gmp_out.c_str());
      return 0;
    }

    if (*cmd_cmd) {
      const MotionCvae cvae = MotionCvae::load(load_checkpoint(cmd_gmp));
      const auto seqs = cmd_data.load();
      const CommandTrainResult r = train_command_encoder(
          cvae, seqs, cmd_cfg, cmd_seed, default_robot_model(), [](const CommandEpochStats& s) {
            std::printf("epoch %4d  loss %.6f  velocity_err %.6f  |z| %.3f\n", s.epoch, s.loss,
                        s.velocity_error, s.latent_norm);
            std::fflush(stdout);
          });
      save_checkpoint(cmd_out, command_checkpoint(r, cmd_cfg));
      std::printf("decoder digest unchanged: %s\nwrote %s\n", r.decoder_digest.c_str(),
                  cmd_out.c_str());
      return 0;
    }

    if (*gen_cmd) {
      const MotionCvae cvae = MotionCvae::load(load_checkpoint(gen_gmp));
      RobotPose start = standing_pose();
      if (!gen_start.empty()) {
        const PoseSequence seq = featurize(load_clip(gen_start), default_robot_model());
        if (gen_start_frame >= static_cast<int>(seq.size())) {
          throw Error("--start-frame " + std::to_string(gen_start_frame) + " is past the end of " +
                      gen_start);
        }
        start = seq[gen_start_frame];
      }
      Rollout r;
      if (!gen_cmdckpt.empty()) {
        const CommandEncoder enc = CommandEncoder::load(load_checkpoint(gen_cmdckpt));
        VelocityCommand c;
        if (!gen_command.empty()) c = parse_command(gen_command);
        const ClampedCommand cc = clamp_command(c);
        if (cc.clamped) std::printf("command clamped to %s\n", format_command(cc.command).c_str());
        r = rollout_commanded(cvae, enc, start, {cc.command}, gen_n);
      } else {
        r = rollout_random(cvae, start, gen_n, gen_seed);
      }
      save_clip(gen_out, poses_to_clip(r.poses));
      double vx = 0.0;
      for (const auto& p : r.poses) vx += p.v_base.x();
      std::printf("generated %d frames (mean v_x %.3f m/s)\nwrote %s\n", r.size(), vx / r.size(),
                  gen_out.c_str());
      return 0;
    }

    if (*eval_cmd) {
      if (ev_robot.size() != ev_ref.size()) {
        throw Error("--robot and --ref must list the same number of clips (" +
                    std::to_string(ev_robot.size()) + " vs " + std::to_string(ev_ref.size()) + ")");
      }
      std::vector<MotionClip> robot, ref;
      for (const auto& p : ev_robot) robot.push_back(load_clip(p));
      for (const auto& p : ev_ref) ref.push_back(load_clip(p));
      std::vector<Episode> episodes;
      if (!ev_episodes.empty()) episodes = parse_episodes(read_text_file(ev_episodes));
      const MetricReport rep = evaluate(robot, ref, episodes);
      std::cout << (ev_json ? report_to_json(rep) + "\n" : format_report(rep));
      return 0;
    }

    if (*rw_cmd) {
      const ControlStateSample s = parse_control_state(read_text_file(rw_state));
      const ReferenceFrame ref = parse_reference_frame(read_text_file(rw_ref));
      const ClampedCommand cc = clamp_command(parse_command(rw_command));
      const RewardBreakdown b = total_reward(s, ref, cc.command, rw_cfg);
      std::cout << (rw_json ? breakdown_to_json(b) + "\n" : format_breakdown(b));
      return 0;
    }

    if (*serve_cmd) {
      ServiceConfig cfg = ServiceConfig::from_env();
      if (!sv_gmp.empty()) cfg.gmp_checkpoint = sv_gmp;
      if (!sv_cmd.empty()) cfg.cmd_checkpoint = sv_cmd;
      if (!sv_addr.empty()) parse_bind_address(sv_addr, cfg.host, cfg.port);
      if (sv_rate >= 0.0) cfg.rate_hz = sv_rate;
      if (sv_max > 0) cfg.max_sessions = sv_max;
      if (sv_idle > 0.0) cfg.idle_timeout = std::chrono::milliseconds(static_cast<long>(sv_idle * 1000));
      if (!cfg.gmp_checkpoint.empty() && !cfg.cmd_checkpoint.empty()) {
        load_generator_models(cfg.gmp_checkpoint, cfg.cmd_checkpoint);  // fail early
      }
      return run_serve(cfg);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
