#include "qpblend/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace qpblend {

namespace {

using nlohmann::json;

constexpr int kDemoVersion = 1;
constexpr int kModelVersion = 1;

// Access helpers that name the failing field path.
const json& field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key))
    throw ConfigError("schema error: missing field " + path + "." + key);
  return j.at(key);
}

double num(const json& j, const std::string& key, const std::string& path) {
  const json& v = field(j, key, path);
  if (!v.is_number()) throw ConfigError("schema error: " + path + "." + key + " is not a number");
  return v.get<double>();
}

Vec vec_field(const json& j, const std::string& key, const std::string& path,
              int expected = -1) {
  const json& v = field(j, key, path);
  if (!v.is_array()) throw ConfigError("schema error: " + path + "." + key + " is not an array");
  if (expected >= 0 && static_cast<int>(v.size()) != expected)
    throw ConfigError("schema error: " + path + "." + key + " has " + std::to_string(v.size()) +
                      " entries, expected " + std::to_string(expected));
  Vec out(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number())
      throw ConfigError("schema error: " + path + "." + key + "[" + std::to_string(i) +
                        "] is not a number");
    out[i] = v[i].get<double>();
  }
  return out;
}

json vec_to_json(const Vec& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

json mat_to_json_flat(const Mat& m) {
  json arr = json::array();
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) arr.push_back(m(i, j));
  return arr;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

json demo_to_json(const Demonstration& demo) {
  const BlendStructure st = demo.structure();
  json doc;
  doc["version"] = kDemoVersion;
  doc["task"] = demo.task;
  doc["robot"]["links"] = vec_to_json(demo.robot_links);
  doc["robot"]["base"] = {demo.robot_base.x(), demo.robot_base.y()};
  doc["duration"] = demo.duration;
  doc["spaces"] = json::array();
  for (const auto& sp : demo.spaces) doc["spaces"].push_back({{"id", sp.id}, {"dim", sp.dim}});
  doc["skills"] = json::array();
  for (const auto& sk : demo.skills)
    doc["skills"].push_back(
        {{"id", sk.id}, {"type", sk.type}, {"space", sk.space}, {"group", sk.group},
         {"params", sk.params}});
  doc["samples"] = json::array();
  for (const auto& smp : demo.samples) {
    json s;
    s["s"] = smp.s;
    s["state"]["alpha"] = vec_to_json(smp.state.alpha);
    s["state"]["gamma"] = smp.state.gamma;
    s["state"]["ee"] = {smp.state.ee.x(), smp.state.ee.y()};
    for (size_t c = 0; c < st.spaces.size(); ++c)
      s["executed"][st.spaces[c].id] =
          vec_to_json(smp.executed.segment(st.space_offsets[c], st.spaces[c].dim));
    for (size_t k = 0; k < st.skills.size(); ++k)
      s["skill_outputs"][st.skills[k].id] =
          vec_to_json(smp.skill_outputs.segment(st.block_offsets[k], st.skills[k].dim));
    doc["samples"].push_back(std::move(s));
  }
  return doc;
}

Demonstration demo_from_json(const json& doc) {
  const int version = static_cast<int>(num(doc, "version", "demo"));
  if (version != kDemoVersion)
    throw ConfigError("demo: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kDemoVersion) + ")");
  Demonstration demo;
  demo.task = field(doc, "task", "demo").get<std::string>();
  const json& robot = field(doc, "robot", "demo");
  demo.robot_links = vec_field(robot, "links", "demo.robot");
  const Vec base = vec_field(robot, "base", "demo.robot", 2);
  demo.robot_base = Vec2(base[0], base[1]);
  demo.duration = num(doc, "duration", "demo");

  for (const auto& sp : field(doc, "spaces", "demo")) {
    ControlSpace cs;
    cs.id = field(sp, "id", "demo.spaces[]").get<std::string>();
    cs.dim = static_cast<int>(num(sp, "dim", "demo.spaces[]"));
    demo.spaces.push_back(std::move(cs));
  }
  for (const auto& sk : field(doc, "skills", "demo")) {
    SkillConfig cfg;
    cfg.id = field(sk, "id", "demo.skills[]").get<std::string>();
    cfg.type = field(sk, "type", "demo.skills[]").get<std::string>();
    cfg.space = field(sk, "space", "demo.skills[]").get<std::string>();
    cfg.group = field(sk, "group", "demo.skills[]").get<std::string>();
    cfg.params = field(sk, "params", "demo.skills[]");
    demo.skills.push_back(std::move(cfg));
  }

  const BlendStructure st = demo.structure();
  const json& samples = field(doc, "samples", "demo");
  for (size_t i = 0; i < samples.size(); ++i) {
    const std::string path = "demo.samples[" + std::to_string(i) + "]";
    const json& s = samples[i];
    DemoSample smp;
    smp.s = num(s, "s", path);
    const json& state = field(s, "state", path);
    smp.state.alpha = vec_field(state, "alpha", path + ".state");
    smp.state.gamma = num(state, "gamma", path + ".state");
    const Vec ee = vec_field(state, "ee", path + ".state", 2);
    smp.state.ee = Vec2(ee[0], ee[1]);

    smp.executed = Vec(st.q);
    const json& executed = field(s, "executed", path);
    for (size_t c = 0; c < st.spaces.size(); ++c)
      smp.executed.segment(st.space_offsets[c], st.spaces[c].dim) =
          vec_field(executed, st.spaces[c].id, path + ".executed", st.spaces[c].dim);

    smp.skill_outputs = Vec(st.n);
    const json& outputs = field(s, "skill_outputs", path);
    for (size_t k = 0; k < st.skills.size(); ++k)
      smp.skill_outputs.segment(st.block_offsets[k], st.skills[k].dim) =
          vec_field(outputs, st.skills[k].id, path + ".skill_outputs", st.skills[k].dim);
    demo.samples.push_back(std::move(smp));
  }
  demo.validate(st);
  return demo;
}

void save_demo(const Demonstration& demo, const std::string& path) {
  write_text_file(path, demo_to_json(demo).dump(2) + "\n");
}

Demonstration load_demo(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("demo '" + path + "': invalid JSON: " + e.what());
  }
  return demo_from_json(doc);
}

json model_to_json(const ThetaParams& theta, const ModelArch& arch) {
  json doc;
  doc["version"] = kModelVersion;
  doc["arch"]["variant"] = arch.variant == WeightVariant::full ? "full" : "diag";
  doc["arch"]["hidden_dim"] = arch.hidden_dim;
  doc["arch"]["groups"] = arch.groups;
  doc["arch"]["blocks"] = arch.blocks;
  doc["params"]["feature_w"] = vec_to_json(theta.feature_w);
  doc["params"]["feature_b"] = vec_to_json(theta.feature_b);
  doc["params"]["softmax_w"] = mat_to_json_flat(theta.softmax_w);
  doc["params"]["softmax_b"] = vec_to_json(theta.softmax_b);
  doc["params"]["contraction"] = json::array();
  for (const auto& head : theta.contraction)
    doc["params"]["contraction"].push_back({{"u_w", mat_to_json_flat(head.u_w)},
                                            {"u_b", vec_to_json(head.u_b)},
                                            {"v_w", vec_to_json(head.v_w)},
                                            {"v_b", head.v_b}});
  return doc;
}

std::pair<ThetaParams, ModelArch> model_from_json(const json& doc) {
  const int version = static_cast<int>(num(doc, "version", "model"));
  if (version != kModelVersion)
    throw ConfigError("model: unsupported version " + std::to_string(version));
  const json& ja = field(doc, "arch", "model");
  ModelArch arch;
  const std::string variant = field(ja, "variant", "model.arch").get<std::string>();
  if (variant == "diag")
    arch.variant = WeightVariant::diagonal;
  else if (variant == "full")
    arch.variant = WeightVariant::full;
  else
    throw ConfigError("model.arch.variant must be 'diag' or 'full'");
  arch.hidden_dim = static_cast<int>(num(ja, "hidden_dim", "model.arch"));
  for (const auto& g : field(ja, "groups", "model.arch")) {
    std::vector<int> group;
    for (const auto& k : g) group.push_back(k.get<int>());
    arch.groups.push_back(std::move(group));
  }
  for (const auto& b : field(ja, "blocks", "model.arch")) arch.blocks.push_back(b.get<int>());
  arch.validate();

  ThetaParams theta = zero_params(arch);
  const json& jp = field(doc, "params", "model");
  theta.feature_w = vec_field(jp, "feature_w", "model.params", arch.hidden_dim);
  theta.feature_b = vec_field(jp, "feature_b", "model.params", arch.hidden_dim);
  const Vec smw = vec_field(jp, "softmax_w", "model.params",
                            arch.num_skills() * arch.hidden_dim);
  for (int i = 0; i < arch.num_skills(); ++i)
    for (int j = 0; j < arch.hidden_dim; ++j) theta.softmax_w(i, j) = smw[i * arch.hidden_dim + j];
  theta.softmax_b = vec_field(jp, "softmax_b", "model.params", arch.num_skills());

  const json& heads = field(jp, "contraction", "model.params");
  if (heads.size() != theta.contraction.size())
    throw ConfigError("model.params.contraction has " + std::to_string(heads.size()) +
                      " heads, expected " + std::to_string(theta.contraction.size()));
  for (size_t h = 0; h < heads.size(); ++h) {
    const std::string path = "model.params.contraction[" + std::to_string(h) + "]";
    auto& head = theta.contraction[h];
    const Vec uw = vec_field(heads[h], "u_w", path,
                             static_cast<int>(head.u_w.rows()) * arch.hidden_dim);
    for (int i = 0; i < head.u_w.rows(); ++i)
      for (int j = 0; j < arch.hidden_dim; ++j) head.u_w(i, j) = uw[i * arch.hidden_dim + j];
    head.u_b = vec_field(heads[h], "u_b", path, static_cast<int>(head.u_b.size()));
    head.v_w = vec_field(heads[h], "v_w", path, arch.hidden_dim);
    head.v_b = num(heads[h], "v_b", path);
  }
  return {std::move(theta), std::move(arch)};
}

void save_model(const ThetaParams& theta, const ModelArch& arch, const std::string& path) {
  write_text_file(path, model_to_json(theta, arch).dump(2) + "\n");
}

std::pair<ThetaParams, ModelArch> load_model(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("model '" + path + "': invalid JSON: " + e.what());
  }
  return model_from_json(doc);
}

void save_history_csv(const std::vector<EpochRecord>& history, const std::string& path) {
  std::ostringstream out;
  const size_t demos = history.empty() ? 0 : history.front().per_demo.size();
  out << "epoch,total_loss";
  for (size_t d = 0; d < demos; ++d) out << ",demo_" << d;
  out << ",grad_norm,wall_ms\n";
  for (const auto& rec : history) {
    out << rec.epoch << ',' << fmt_double(rec.total);
    for (double v : rec.per_demo) out << ',' << fmt_double(v);
    out << ',' << fmt_double(rec.grad_norm) << ',' << fmt_double(rec.wall_ms) << '\n';
  }
  write_text_file(path, out.str());
}

void save_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ostringstream out;
  const int N = traj.dofs;
  const int m = traj.steps.empty() ? 0 : static_cast<int>(traj.steps.front().u.size());
  const int K = traj.steps.empty() ? 0 : static_cast<int>(traj.steps.front().weights.size());
  out << "step,s";
  for (int i = 0; i < N; ++i) out << ",alpha_" << i;
  out << ",gamma,ee_x,ee_y";
  for (int i = 0; i < m; ++i) out << ",u_" << i;
  for (int k = 1; k <= K; ++k) out << ",w_" << k;
  out << ",obj_x,obj_y,attached\n";
  for (size_t i = 0; i < traj.steps.size(); ++i) {
    const TrajStep& st = traj.steps[i];
    out << i << ',' << fmt_double(st.s);
    for (int j = 0; j < N; ++j) out << ',' << fmt_double(st.robot.alpha[j]);
    out << ',' << fmt_double(st.robot.gamma) << ',' << fmt_double(st.robot.ee.x()) << ','
        << fmt_double(st.robot.ee.y());
    for (int j = 0; j < m; ++j) out << ',' << fmt_double(st.u[j]);
    for (int k = 0; k < K; ++k) out << ',' << fmt_double(st.weights[k]);
    out << ',' << fmt_double(st.object.x()) << ',' << fmt_double(st.object.y()) << ','
        << (st.attached ? 1 : 0) << '\n';
  }
  write_text_file(path, out.str());
}

Trajectory load_trajectory_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("trajectory '" + path + "': empty file");

  std::vector<std::string> cols;
  {
    std::istringstream hdr(line);
    std::string c;
    while (std::getline(hdr, c, ',')) cols.push_back(c);
  }
  int n_alpha = 0, n_u = 0, n_w = 0;
  for (const auto& c : cols) {
    if (c.rfind("alpha_", 0) == 0) ++n_alpha;
    if (c.rfind("u_", 0) == 0) ++n_u;
    if (c.rfind("w_", 0) == 0) ++n_w;
  }
  const size_t expected = 2 + n_alpha + 3 + n_u + n_w + 3;
  if (cols.size() != expected || n_alpha == 0)
    throw ConfigError("trajectory '" + path + "': unrecognized header");

  Trajectory traj;
  traj.dofs = n_alpha;
  size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ls, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != expected)
      throw ConfigError("trajectory '" + path + "': row " + std::to_string(row) +
                        " has wrong column count");
    TrajStep st;
    size_t i = 1;
    st.s = vals[i++];
    st.robot.alpha = Vec(n_alpha);
    for (int j = 0; j < n_alpha; ++j) st.robot.alpha[j] = vals[i++];
    st.robot.gamma = vals[i++];
    st.robot.ee = Vec2(vals[i], vals[i + 1]);
    i += 2;
    st.u = Vec(n_u);
    for (int j = 0; j < n_u; ++j) st.u[j] = vals[i++];
    st.weights = Vec(n_w);
    for (int j = 0; j < n_w; ++j) st.weights[j] = vals[i++];
    st.object = Vec2(vals[i], vals[i + 1]);
    i += 2;
    st.attached = vals[i] != 0.0;
    traj.steps.push_back(std::move(st));
  }
  // Reconstruct transition events from the attached flags.
  for (size_t i = 0; i + 1 < traj.steps.size(); ++i) {
    traj.steps[i].attach_event = traj.steps[i + 1].attached && !traj.steps[i].attached;
    traj.steps[i].detach_event = !traj.steps[i + 1].attached && traj.steps[i].attached;
  }
  return traj;
}

json report_to_json(const TaskReport& rep) {
  json doc;
  doc["grasp_success"] = rep.grasp_success;
  doc["place_success"] = rep.place_success;
  doc["grasp_object_error"] = rep.grasp_object_error;
  doc["final_object_to_place"] = rep.final_object_to_place;
  doc["final_ee_to_place"] = rep.final_ee_to_place;
  doc["j_smooth"] = rep.j_smooth;
  doc["latency"]["p50_ms"] = rep.latency_p50_ms;
  doc["latency"]["p95_ms"] = rep.latency_p95_ms;
  doc["latency"]["max_ms"] = rep.latency_max_ms;
  return doc;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<PlotSeries>& series) {
  const double W = 640, H = 420, ml = 56, mr = 120, mt = 36, mb = 42;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        first = false;
      }
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
  if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  svg << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"14\">" << xml_escape(title) << "</text>\n";
  svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\""
      << H - mt - mb << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double fx = xmin + t * (xmax - xmin) / 5;
    const double fy = ymin + t * (ymax - ymin) / 5;
    svg << "<line x1=\"" << px(fx) << "\" y1=\"" << H - mb << "\" x2=\"" << px(fx) << "\" y2=\""
        << H - mb + 4 << "\" stroke=\"#333\"/>\n";
    svg << "<text x=\"" << px(fx) << "\" y=\"" << H - mb + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
        << fmt_double(std::round(fx * 1000) / 1000) << "</text>\n";
    svg << "<line x1=\"" << ml - 4 << "\" y1=\"" << py(fy) << "\" x2=\"" << ml << "\" y2=\""
        << py(fy) << "\" stroke=\"#333\"/>\n";
    svg << "<text x=\"" << ml - 6 << "\" y=\"" << py(fy) + 3
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
        << fmt_double(std::round(fy * 1000) / 1000) << "</text>\n";
  }
  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) svg << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    svg << "\"/>\n";
    const double ly = mt + 16 + 16 * si;
    svg << "<line x1=\"" << W - mr + 8 << "\" y1=\"" << ly - 4 << "\" x2=\"" << W - mr + 28
        << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << W - mr + 32 << "\" y=\"" << ly
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(s.label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  write_text_file(path, svg.str());
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace qpblend
