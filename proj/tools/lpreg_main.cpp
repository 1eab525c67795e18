// Command-line front end: reference fitting, registration, posterior
// segmentation, synthetic benchmark generation and evaluation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lpreg/lpreg.hpp"

namespace fs = std::filesystem;
using namespace lpreg;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNoConvergence = 3;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string tok;
  std::istringstream is(s);
  while (std::getline(is, tok, sep)) out.push_back(tok);
  return out;
}

RectD parse_box(const std::string& s) {
  const auto parts = split(s, ',');
  if (parts.size() != 4) throw CLI::ValidationError("--box", "expected X,Y,W,H");
  return {std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2]),
          std::stod(parts[3])};
}

void parse_range(const std::string& s, double& lo, double& hi, double& step) {
  const auto parts = split(s, ':');
  if (parts.size() != 3) throw CLI::ValidationError("range", "expected lo:hi:step");
  lo = std::stod(parts[0]);
  hi = std::stod(parts[1]);
  step = std::stod(parts[2]);
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& t : split(s, ',')) out.push_back(std::stod(t));
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_result_file(const std::string& path, const EmReport& rep) {
  atomic_write(path, [&rep](std::ostream& os) {
    int total_iters = 0;
    for (const auto& l : rep.levels) total_iters += l.iterations;
    os << "tx=" << fmt(rep.final_state.pose.tx) << "\n"
       << "ty=" << fmt(rep.final_state.pose.ty) << "\n"
       << "s=" << fmt(rep.final_state.pose.s) << "\n"
       << "alpha=" << fmt(rep.final_state.alpha) << "\n"
       << "R=" << fmt(rep.final_r) << "\n"
       << "iterations=" << total_iters << "\n"
       << "converged=" << (rep.converged ? "true" : "false") << "\n";
  });
}

void write_trace_file(const std::string& path, const EmReport& rep) {
  atomic_write(path, [&rep](std::ostream& os) {
    os << "t\tR\ttx\tty\ts\talpha\n";
    int t = 0;
    for (const auto& l : rep.levels)
      for (std::size_t i = 0; i < l.r_trace.size(); ++i, ++t)
        os << t << "\t" << fmt(l.r_trace[i]) << "\t" << fmt(l.poses[i].tx) << "\t"
           << fmt(l.poses[i].ty) << "\t" << fmt(l.poses[i].s) << "\t" << fmt(l.alphas[i])
           << "\n";
  });
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : read_config(path)) out[k] = v;
  return out;
}

SynthSpec parse_synth_spec(const std::string& path) {
  SynthSpec spec;
  bool have_grid = false;
  for (const auto& [key, value] : read_config(path)) {
    if (key == "ref_width") spec.ref_width = std::stoi(value);
    else if (key == "ref_height") spec.ref_height = std::stoi(value);
    else if (key == "target_width") spec.target_width = std::stoi(value);
    else if (key == "target_height") spec.target_height = std::stoi(value);
    else if (key == "labels") spec.labels.names = split(value, ',');
    else if (key == "tx") spec.tx = std::stod(value);
    else if (key == "ty") spec.ty = std::stod(value);
    else if (key == "s") spec.s = std::stod(value);
    else if (key == "prior_true") spec.prior_true = std::stod(value);
    else if (key == "label_noise") spec.label_noise = std::stod(value);
    else if (key == "swap_hi") spec.swap_hi = std::stod(value);
    else if (key == "swap_lo") spec.swap_lo = std::stod(value);
    else if (key == "bg_noise") spec.bg_noise = std::stod(value);
    else if (key == "clutter") spec.clutter_points = std::stoi(value);
    else if (key == "seed") spec.seed = std::stoull(value);
    else if (key == "grid") {
      const auto f = split(value, ':');
      if (f.size() != 9)
        throw std::runtime_error(path + ": grid wants label:rows:cols:w:h:x0:y0:px:py");
      spec.grids.push_back({std::stoi(f[0]), std::stoi(f[1]), std::stoi(f[2]),
                            std::stoi(f[3]), std::stoi(f[4]), std::stoi(f[5]),
                            std::stoi(f[6]), std::stoi(f[7]), std::stoi(f[8])});
      have_grid = true;
    } else if (key == "occlusion") {
      const auto f = parse_doubles(value);
      if (f.size() != 4) throw std::runtime_error(path + ": occlusion wants x,y,w,h");
      spec.occlusions.push_back({f[0], f[1], f[2], f[3]});
    } else if (key == "swap_component") {
      const auto f = split(value, ':');
      if (f.size() != 2) throw std::runtime_error(path + ": swap_component wants label:index");
      spec.swap_label = std::stoi(f[0]);
      spec.swap_index = std::stoi(f[1]);
    } else {
      throw std::runtime_error(path + ": unknown key '" + key + "'");
    }
  }
  if (!have_grid) throw std::runtime_error(path + ": no grid entries");
  return spec;
}

EmConfig make_config(const LpMixtureModel& model, double epsilon, int max_iters, int stride,
                     double threshold) {
  EmConfig cfg;
  cfg.p = model.p;
  cfg.epsilon = epsilon;
  cfg.max_iters = max_iters;
  cfg.stride = stride;
  cfg.threshold = threshold;
  return cfg;
}

EmReport do_register(const LpMixtureModel& model, const LabelProbMap& target,
                     const std::vector<std::string>& box_args, const EmConfig& cfg) {
  if (target.labels.names != model.labels.names)
    throw std::runtime_error("target label set does not match the model");
  std::vector<RectD> boxes;
  for (const auto& b : box_args) boxes.push_back(parse_box(b));
  const PointSet points = extract_points(target, cfg.threshold);
  return run_multi_init(points, model, boxes, cfg);
}

void write_posterior_outputs(const EmReport& rep, const LpMixtureModel& model,
                             const LabelProbMap& target, const EmConfig& cfg,
                             const std::string& posterior_path,
                             const std::string& labels_pgm_path) {
  const PointSet points = extract_points(target, cfg.threshold);
  const auto post = posterior_labels(points, rep.final_resp, model);
  const LabelProbMap map = render_posterior_map(points, post, target);
  if (!posterior_path.empty()) write_lpm(posterior_path, map);
  if (!labels_pgm_path.empty()) {
    const std::size_t k = map.labels.size();
    std::vector<std::uint8_t> vis(map.plane_size(), 0);
    for (int y = 0; y < map.height; ++y)
      for (int x = 0; x < map.width; ++x) {
        float best = 0.0f;
        std::size_t arg = 0;
        for (std::size_t j = 0; j < k; ++j)
          if (map.at(x, y, j) > best) {
            best = map.at(x, y, j);
            arg = j;
          }
        if (best >= cfg.threshold)
          vis[std::size_t(y) * map.width + x] =
              std::uint8_t(std::lround(double(arg + 1) * 255.0 / double(k)));
      }
    write_pgm(labels_pgm_path, map.width, map.height, vis);
  }
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Facade registration with Lp Gaussian mixtures"};
  app.require_subcommand(1);

  // fit-reference
  auto* fit = app.add_subcommand("fit-reference",
                                 "Fit a mixture model to a reference segmentation (PGM)");
  std::string fit_seg, fit_labels, fit_out;
  int fit_p = 4;
  fit->add_option("segmentation", fit_seg, "indexed PGM mask")->required();
  fit->add_option("--labels", fit_labels, "comma-separated label names")->required();
  fit->add_option("--p", fit_p, "even exponent of the Lp Gaussians");
  fit->add_option("-o,--output", fit_out, "output .lpmix path")->required();

  // shared EM options
  const auto add_em_options = [](CLI::App* cmd, std::vector<std::string>& boxes,
                                 double& epsilon, int& max_iters, int& stride,
                                 double& threshold) {
    cmd->add_option("--box", boxes, "detection box X,Y,W,H (repeatable)")->required();
    cmd->add_option("--epsilon", epsilon, "convergence threshold in px");
    cmd->add_option("--max-iters", max_iters, "maximum EM iterations per level");
    cmd->add_option("--stride", stride, "coarse level stride");
    cmd->add_option("--threshold", threshold, "point extraction threshold");
  };

  // register
  auto* reg = app.add_subcommand("register", "Register a reference model onto a target map");
  std::string reg_model, reg_target, reg_out, reg_posterior, reg_trace;
  std::vector<std::string> reg_boxes;
  double reg_eps = 0.1, reg_thresh = 0.01;
  int reg_iters = 100, reg_stride = 2;
  reg->add_option("model", reg_model, ".lpmix model")->required();
  reg->add_option("target", reg_target, ".lpm label probability map")->required();
  add_em_options(reg, reg_boxes, reg_eps, reg_iters, reg_stride, reg_thresh);
  reg->add_option("-o,--output", reg_out, "result file")->required();
  reg->add_option("--posterior", reg_posterior, "write posterior map (.lpm)");
  reg->add_option("--trace", reg_trace, "write per-iteration trace (TSV)");

  // segment
  auto* seg = app.add_subcommand("segment", "Registration-refined posterior segmentation");
  std::string seg_model, seg_target, seg_out, seg_pgm;
  std::vector<std::string> seg_boxes;
  double seg_eps = 0.1, seg_thresh = 0.01;
  int seg_iters = 100, seg_stride = 2;
  seg->add_option("model", seg_model, ".lpmix model")->required();
  seg->add_option("target", seg_target, ".lpm label probability map")->required();
  add_em_options(seg, seg_boxes, seg_eps, seg_iters, seg_stride, seg_thresh);
  seg->add_option("-o,--output", seg_out, "posterior map output (.lpm)")->required();
  seg->add_option("--labels-pgm", seg_pgm, "argmax label visualization (PGM)");

  // synth
  auto* syn = app.add_subcommand("synth", "Generate a synthetic facade instance");
  std::string syn_spec, syn_out;
  syn->add_option("--spec", syn_spec, "key = value spec file")->required();
  syn->add_option("-o,--output", syn_out, "output directory")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Cumulative error histograms over runs");
  std::string ev_runs, ev_out;
  std::string ev_dt = "0.25,0.5,1,2,5,10", ev_ds = "0.0025,0.005,0.01,0.02,0.05";
  ev->add_option("--runs", ev_runs, "directory of runs (result.txt + truth.txt)")
      ->required();
  ev->add_option("-o,--output", ev_out, "output TSV")->required();
  ev->add_option("--dt-thresholds", ev_dt, "translation thresholds (px)");
  ev->add_option("--ds-thresholds", ev_ds, "scale thresholds (relative)");

  // oracle
  auto* orc = app.add_subcommand("oracle", "Exhaustive grid argmax of the MAP objective");
  std::string orc_model, orc_target;
  std::string orc_tx = "-40:40:0.5", orc_ty = "-40:40:0.5", orc_s = "0.6:1.6:0.01";
  double orc_alpha = 0.25, orc_thresh = 0.01;
  orc->add_option("model", orc_model, ".lpmix model")->required();
  orc->add_option("target", orc_target, ".lpm label probability map")->required();
  orc->add_option("--tx", orc_tx, "tx grid lo:hi:step");
  orc->add_option("--ty", orc_ty, "ty grid lo:hi:step");
  orc->add_option("--s", orc_s, "scale grid lo:hi:step");
  orc->add_option("--alpha", orc_alpha, "fixed outlier rate");
  orc->add_option("--threshold", orc_thresh, "point extraction threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*fit) {
      LabelSet labels;
      labels.names = split(fit_labels, ',');
      const auto segm = read_reference_pgm(fit_seg, labels);
      const auto model = build_model(segm, fit_p);
      write_lpmix(fit_out, model);
      std::cout << "components=" << model.size() << " p=" << model.p << " -> " << fit_out
                << "\n";
      return 0;
    }
    if (*reg) {
      const auto model = read_lpmix(reg_model);
      const auto target = read_lpm(reg_target);
      const auto cfg = make_config(model, reg_eps, reg_iters, reg_stride, reg_thresh);
      const auto rep = do_register(model, target, reg_boxes, cfg);
      write_result_file(reg_out, rep);
      if (!reg_trace.empty()) write_trace_file(reg_trace, rep);
      if (!reg_posterior.empty())
        write_posterior_outputs(rep, model, target, cfg, reg_posterior, "");
      std::cout << "tx=" << fmt(rep.final_state.pose.tx)
                << " ty=" << fmt(rep.final_state.pose.ty)
                << " s=" << fmt(rep.final_state.pose.s) << " R=" << fmt(rep.final_r)
                << " converged=" << (rep.converged ? "true" : "false") << "\n";
      return rep.converged ? 0 : kExitNoConvergence;
    }
    if (*seg) {
      const auto model = read_lpmix(seg_model);
      const auto target = read_lpm(seg_target);
      const auto cfg = make_config(model, seg_eps, seg_iters, seg_stride, seg_thresh);
      const auto rep = do_register(model, target, seg_boxes, cfg);
      write_posterior_outputs(rep, model, target, cfg, seg_out, seg_pgm);
      return rep.converged ? 0 : kExitNoConvergence;
    }
    if (*syn) {
      const auto spec = parse_synth_spec(syn_spec);
      const auto inst = generate_instance(spec);
      fs::create_directories(syn_out);
      write_pgm((fs::path(syn_out) / "ref.pgm").string(), inst.reference.width,
                inst.reference.height, inst.reference.mask);
      write_lpm((fs::path(syn_out) / "target.lpm").string(), inst.target);
      atomic_write((fs::path(syn_out) / "truth.txt").string(), [&](std::ostream& os) {
        os << "tx=" << fmt(inst.truth.tx) << "\nty=" << fmt(inst.truth.ty)
           << "\ns=" << fmt(inst.truth.s) << "\nlabels=";
        for (std::size_t j = 0; j < spec.labels.size(); ++j)
          os << (j ? "," : "") << spec.labels.names[j];
        os << "\n";
      });
      return 0;
    }
    if (*ev) {
      std::vector<RegError> errors;
      const auto consider = [&errors](const fs::path& dir) {
        const auto res = dir / "result.txt", tru = dir / "truth.txt";
        if (!fs::exists(res) || !fs::exists(tru)) return;
        const auto r = read_kv_file(res.string());
        const auto t = read_kv_file(tru.string());
        const Similarity est{std::stod(r.at("tx")), std::stod(r.at("ty")),
                             std::stod(r.at("s"))};
        const Similarity truth{std::stod(t.at("tx")), std::stod(t.at("ty")),
                               std::stod(t.at("s"))};
        errors.push_back(registration_error(est, truth));
      };
      consider(ev_runs);
      std::vector<fs::path> subdirs;
      for (const auto& e : fs::directory_iterator(ev_runs))
        if (e.is_directory()) subdirs.push_back(e.path());
      std::sort(subdirs.begin(), subdirs.end());
      for (const auto& d : subdirs) consider(d);
      if (errors.empty()) throw std::runtime_error(ev_runs + ": no runs found");
      const auto rows = evaluate(errors, parse_doubles(ev_dt), parse_doubles(ev_ds));
      atomic_write(ev_out, [&rows](std::ostream& os) {
        os << "metric\tthreshold\tfraction\n";
        for (const auto& r : rows)
          os << r.metric << "\t" << fmt(r.threshold) << "\t" << fmt(r.fraction) << "\n";
      });
      std::cout << "runs=" << errors.size() << " -> " << ev_out << "\n";
      return 0;
    }
    if (*orc) {
      const auto model = read_lpmix(orc_model);
      const auto target = read_lpm(orc_target);
      if (target.labels.names != model.labels.names)
        throw std::runtime_error("target label set does not match the model");
      const PointSet points = extract_points(target, orc_thresh);
      GridRanges ranges;
      parse_range(orc_tx, ranges.tx_lo, ranges.tx_hi, ranges.tx_step);
      parse_range(orc_ty, ranges.ty_lo, ranges.ty_hi, ranges.ty_step);
      parse_range(orc_s, ranges.s_lo, ranges.s_hi, ranges.s_step);
      std::vector<double> weights;
      for (const auto& c : model.components) weights.push_back(c.weight);
      const auto res = grid_oracle(points, model, weights, orc_alpha, ranges);
      std::cout << "tx=" << fmt(res.pose.tx) << " ty=" << fmt(res.pose.ty)
                << " s=" << fmt(res.pose.s) << " R=" << fmt(res.value) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run_cli(argc, argv); }
