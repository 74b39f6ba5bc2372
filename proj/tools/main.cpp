#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "qpblend/io.hpp"
#include "qpblend/scene.hpp"

namespace qpblend {
namespace {

std::string describe_blocks(const std::vector<int>& blocks) {
  std::string out = "[";
  for (size_t i = 0; i < blocks.size(); ++i)
    out += (i ? "," : "") + std::to_string(blocks[i]);
  return out + "]";
}

void check_model_scene_compat(const ModelArch& arch, const SceneBundle& bundle) {
  std::vector<int> scene_blocks;
  for (const auto& sk : bundle.structure.skills) scene_blocks.push_back(sk.dim);
  if (arch.blocks != scene_blocks)
    throw ConfigError("model/scene mismatch: model blocks " + describe_blocks(arch.blocks) +
                      " vs scene blocks " + describe_blocks(scene_blocks));
  if (arch.groups != bundle.groups)
    throw ConfigError("model/scene mismatch: softmax groups differ");
}

struct TrainArgs {
  std::vector<std::string> demo_paths;
  std::string variant = "diag";
  std::string init_path;
  std::string out_path;
  std::string history_path;
  int epochs = 2000;
  double lr = 1e-2;
  std::string loss = "projected";
  std::string qp_path = "optnet";
  int hidden = 32;
  uint64_t seed = 0;
};

int cmd_train(const TrainArgs& args) {
  std::vector<Demonstration> demos;
  for (const auto& p : args.demo_paths) demos.push_back(load_demo(p));
  const BlendStructure st = demos.front().structure();
  for (size_t d = 1; d < demos.size(); ++d) {
    const BlendStructure other = demos[d].structure();
    if (other.S != st.S || other.P != st.P || other.groups != st.groups)
      throw ConfigError("demo '" + args.demo_paths[d] + "' has a different blend structure");
  }

  ModelArch arch;
  arch.variant = args.variant == "full" ? WeightVariant::full : WeightVariant::diagonal;
  arch.hidden_dim = args.hidden;
  arch.groups = st.groups;
  for (const auto& sk : st.skills) arch.blocks.push_back(sk.dim);
  arch.validate();

  ThetaParams theta0;
  if (!args.init_path.empty()) {
    auto [init_theta, init_arch] = load_model(args.init_path);
    if (arch.variant == WeightVariant::full && init_arch.variant == WeightVariant::diagonal) {
      if (init_arch.groups != arch.groups || init_arch.blocks != arch.blocks ||
          init_arch.hidden_dim != arch.hidden_dim)
        throw ConfigError("--init model does not match the demo structure");
      theta0 = init_full_from_diag(init_theta, arch, args.seed);
    } else if (init_arch.variant == arch.variant) {
      if (init_arch.groups != arch.groups || init_arch.blocks != arch.blocks)
        throw ConfigError("--init model does not match the demo structure");
      arch.hidden_dim = init_arch.hidden_dim;
      theta0 = init_theta;
    } else {
      throw ConfigError("--init must be a diagonal model (for full warm start) or match the variant");
    }
  } else {
    if (arch.variant == WeightVariant::full)
      std::cerr << "warning: training a full model from scratch; consider --init with a trained "
                   "diagonal model\n";
    theta0 = random_init(arch, args.seed);
  }

  TrainConfig config;
  config.epochs = args.epochs;
  config.learning_rate = args.lr;
  config.loss = args.loss == "unprojected" ? LossVariant::unprojected : LossVariant::projected;
  config.path = args.qp_path == "closed" ? QpPath::closed_form : QpPath::optnet;
  config.seed = args.seed;

  const TrainResult result = train(theta0, demos, st, arch, config);
  save_model(result.theta, arch, args.out_path);
  const std::string hist = args.history_path.empty() ? args.out_path + ".history.csv"
                                                     : args.history_path;
  save_history_csv(result.history, hist);
  std::printf("trained %s model: initial loss %.6g, final loss %.6g (%d epochs)\n",
              args.variant.c_str(), result.initial_loss, result.final_loss, args.epochs);
  std::printf("model: %s\nhistory: %s\n", args.out_path.c_str(), hist.c_str());
  return 0;
}

int cmd_gen_demo(const std::string& scene_path, const std::string& out_path) {
  const SceneBundle bundle = load_scene(scene_path);
  if (!bundle.has_schedule)
    throw ConfigError("scene '" + scene_path + "' has no [teacher] schedule");
  const Trajectory raw = scripted_demo(bundle.model, bundle.scene, bundle.structure,
                                       bundle.skill_configs, bundle.schedule, bundle.gains);
  const TaskReport rep = eval_task(raw, bundle.scene);
  const Demonstration demo =
      annotate(raw, bundle.make_skills(), bundle.structure, bundle.skill_configs, bundle.spaces,
               bundle.model, bundle.scene.duration, bundle.task_name);
  save_demo(demo, out_path);
  std::printf("demo: %s (%zu samples, grasp %s, place %s)\n", out_path.c_str(),
              demo.samples.size(), rep.grasp_success ? "ok" : "FAILED",
              rep.place_success ? "ok" : "FAILED");
  return 0;
}

int cmd_rollout(const std::string& scene_path, const std::string& model_path,
                const std::string& out_path) {
  const SceneBundle bundle = load_scene(scene_path);
  auto [theta, arch] = load_model(model_path);
  check_model_scene_compat(arch, bundle);

  WorldState init;
  init.robot.alpha = bundle.scene.initial_alpha;
  init.robot.gamma = bundle.scene.initial_gamma;
  init.object = bundle.scene.object_start;

  const WeightFn weight_fn = [&theta = theta, &arch = arch](double s) {
    return forward(theta, s, arch);
  };
  const Trajectory traj = rollout(weight_fn, bundle.make_skills(), bundle.structure,
                                  bundle.roles, bundle.model, bundle.scene, init);
  save_trajectory_csv(traj, out_path);

  const TaskReport rep = eval_task(traj, bundle.scene);
  std::printf("trajectory: %s (%zu steps)\n", out_path.c_str(), traj.steps.size());
  std::printf("per-step latency (model+solve): p50 %.3f ms, p95 %.3f ms, max %.3f ms\n",
              rep.latency_p50_ms, rep.latency_p95_ms, rep.latency_max_ms);
  return 0;
}

int cmd_eval(const std::string& scene_path, const std::string& traj_path,
             const std::string& out_path) {
  const SceneBundle bundle = load_scene(scene_path);
  const Trajectory traj = load_trajectory_csv(traj_path);
  const TaskReport rep = eval_task(traj, bundle.scene);
  const nlohmann::json doc = report_to_json(rep);
  if (!out_path.empty()) write_text_file(out_path, doc.dump(2) + "\n");
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int cmd_plot(const std::string& model_path, const std::string& traj_path,
             const std::string& out_prefix) {
  if (model_path.empty() && traj_path.empty())
    throw ConfigError("plot: provide --model and/or --traj");

  if (!model_path.empty()) {
    auto [theta, arch] = load_model(model_path);
    const int grid = 500;
    std::vector<PlotSeries> series(arch.num_skills());
    for (int k = 0; k < arch.num_skills(); ++k) series[k].label = "w_" + std::to_string(k + 1);
    PlotSeries offdiag;
    offdiag.label = "offdiag_fro";
    std::ostringstream csv;
    csv << "s";
    for (int k = 1; k <= arch.num_skills(); ++k) csv << ",w_" << k;
    for (size_t g = 1; g <= arch.groups.size(); ++g) csv << ",group_" << g << "_sum";
    if (arch.variant == WeightVariant::full) csv << ",offdiag_fro";
    csv << "\n";
    for (int i = 0; i <= grid; ++i) {
      const double s = static_cast<double>(i) / grid;
      const WeightMatrix wm = forward(theta, s, arch);
      csv << s;
      for (int k = 0; k < arch.num_skills(); ++k) {
        series[k].x.push_back(s);
        series[k].y.push_back(wm.diag_weights[k]);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", wm.diag_weights[k]);
        csv << ',' << buf;
      }
      for (const auto& g : arch.groups) {
        double sum = 0.0;
        for (int k : g) sum += wm.diag_weights[k];
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", sum);
        csv << ',' << buf;
      }
      if (arch.variant == WeightVariant::full) {
        Mat off = wm.W;
        for (int k = 0; k < arch.num_skills(); ++k) {
          const int o = arch.block_offset(k);
          off.block(o, o, arch.blocks[k], arch.blocks[k]).setZero();
        }
        offdiag.x.push_back(s);
        offdiag.y.push_back(off.norm());
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", off.norm());
        csv << ',' << buf;
      }
      csv << '\n';
    }
    if (arch.variant == WeightVariant::full) series.push_back(std::move(offdiag));
    write_text_file(out_prefix + "_weights.csv", csv.str());
    write_svg_plot(out_prefix + "_weights.svg", "skill weights over phase", series);
    std::printf("wrote %s_weights.{csv,svg}\n", out_prefix.c_str());
  }

  if (!traj_path.empty()) {
    const Trajectory traj = load_trajectory_csv(traj_path);
    PlotSeries ee, obj;
    ee.label = "end effector";
    obj.label = "object";
    std::ostringstream csv;
    csv << "s,ee_x,ee_y,obj_x,obj_y\n";
    for (const auto& st : traj.steps) {
      ee.x.push_back(st.robot.ee.x());
      ee.y.push_back(st.robot.ee.y());
      obj.x.push_back(st.object.x());
      obj.y.push_back(st.object.y());
      csv << st.s << ',' << st.robot.ee.x() << ',' << st.robot.ee.y() << ',' << st.object.x()
          << ',' << st.object.y() << '\n';
    }
    write_text_file(out_prefix + "_path.csv", csv.str());
    write_svg_plot(out_prefix + "_path.svg", "end-effector path", {ee, obj});
    std::printf("wrote %s_path.{csv,svg}\n", out_prefix.c_str());
  }
  return 0;
}

}  // namespace
}  // namespace qpblend

int main(int argc, char** argv) {
  CLI::App app{"qpblend: learn to sequence and blend robot skills via a differentiable QP"};
  app.require_subcommand(1);

  std::string scene_path, model_path, traj_path, out_path, init_path, history_path;
  qpblend::TrainArgs train_args;
  uint64_t seed = 0;

  auto* gen = app.add_subcommand("gen-demo", "script a teacher demonstration from a scene");
  gen->add_option("--scene", scene_path, "scene TOML file")->required();
  gen->add_option("--out", out_path, "output demo JSON")->required();
  gen->add_option("--seed", seed, "unused; demos are deterministic");

  auto* tr = app.add_subcommand("train", "train a weight model on demonstrations");
  tr->add_option("--demo", train_args.demo_paths, "demo JSON (repeatable)")->required();
  tr->add_option("--variant", train_args.variant, "diag|full")
      ->check(CLI::IsMember({"diag", "full"}));
  tr->add_option("--init", train_args.init_path, "diagonal model for full warm start");
  tr->add_option("--epochs", train_args.epochs, "training epochs");
  tr->add_option("--lr", train_args.lr, "learning rate");
  tr->add_option("--loss", train_args.loss, "projected|unprojected")
      ->check(CLI::IsMember({"projected", "unprojected"}));
  tr->add_option("--qp-path", train_args.qp_path, "optnet|closed")
      ->check(CLI::IsMember({"optnet", "closed"}));
  tr->add_option("--hidden", train_args.hidden, "hidden layer width");
  tr->add_option("--seed", train_args.seed, "init seed");
  tr->add_option("--out", train_args.out_path, "output model JSON")->required();
  tr->add_option("--history", train_args.history_path, "history CSV (default <out>.history.csv)");

  auto* ro = app.add_subcommand("rollout", "reproduce a task with a trained model");
  ro->add_option("--scene", scene_path, "scene TOML file")->required();
  ro->add_option("--model", model_path, "trained model JSON")->required();
  ro->add_option("--out", out_path, "output trajectory CSV")->required();

  auto* ev = app.add_subcommand("eval", "score a trajectory against a scene");
  ev->add_option("--scene", scene_path, "scene TOML file")->required();
  ev->add_option("--traj", traj_path, "trajectory CSV")->required();
  ev->add_option("--out", out_path, "output report JSON");

  auto* pl = app.add_subcommand("plot", "export weight curves and path plots");
  pl->add_option("--model", model_path, "trained model JSON");
  pl->add_option("--traj", traj_path, "trajectory CSV");
  pl->add_option("--out", out_path, "output file prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return qpblend::cmd_gen_demo(scene_path, out_path);
    if (tr->parsed()) return qpblend::cmd_train(train_args);
    if (ro->parsed()) return qpblend::cmd_rollout(scene_path, model_path, out_path);
    if (ev->parsed()) return qpblend::cmd_eval(scene_path, traj_path, out_path);
    if (pl->parsed()) return qpblend::cmd_plot(model_path, traj_path, out_path);
  } catch (const qpblend::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
