#pragma once

#include "qpblend/planar.hpp"
#include "qpblend/trainer.hpp"

namespace qpblend {

// Demonstration interchange document (JSON, versioned). Numbers round-trip
// bit exactly. Loading validates the schema and reports the failing field path.
nlohmann::json demo_to_json(const Demonstration& demo);
Demonstration demo_from_json(const nlohmann::json& doc);
void save_demo(const Demonstration& demo, const std::string& path);
Demonstration load_demo(const std::string& path);

// Trained-model document: arch metadata plus flat parameter arrays in
// declared order.
nlohmann::json model_to_json(const ThetaParams& theta, const ModelArch& arch);
std::pair<ThetaParams, ModelArch> model_from_json(const nlohmann::json& doc);
void save_model(const ThetaParams& theta, const ModelArch& arch, const std::string& path);
std::pair<ThetaParams, ModelArch> load_model(const std::string& path);

// Training history CSV: epoch, total loss, per-demo losses, gradient norm, wall ms.
void save_history_csv(const std::vector<EpochRecord>& history, const std::string& path);

// Trajectory CSV with columns
//   step,s,alpha_0..alpha_{N-1},gamma,ee_x,ee_y,u_0..,w_1..w_K,obj_x,obj_y,attached
void save_trajectory_csv(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory_csv(const std::string& path);

nlohmann::json report_to_json(const TaskReport& rep);

// Minimal standalone SVG line charts; every emitted file is well-formed XML.
struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};
void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<PlotSeries>& series);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace qpblend
