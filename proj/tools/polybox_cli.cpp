// Command-line front end: polygon IoU, loss vectors, desk-scale fitting,
// mask ingestion, mAP evaluation and the ablation summary.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "polybox/harness.hpp"
#include "polybox/io.hpp"

using namespace polybox;

namespace {

constexpr int kExitBadInput = 2;
constexpr int kExitDiverged = 3;

std::pair<int, int> parse_grid(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw IoError("grid must look like WxH, got '" + s + "'");
  try {
    const int w = std::stoi(s.substr(0, x));
    const int h = std::stoi(s.substr(x + 1));
    if (w < 1 || h < 1) throw IoError("grid dimensions must be >= 1");
    return {w, h};
  } catch (const std::invalid_argument&) {
    throw IoError("grid must look like WxH, got '" + s + "'");
  }
}

int cmd_iou(const std::string& a_path, const std::string& b_path, const std::string& grid) {
  const auto [w, h] = parse_grid(grid);
  const PolyBox a = read_polybox(a_path);
  const PolyBox b = read_polybox(b_path);
  std::cout << poly_iou(a, b, w, h) << "\n";
  return 0;
}

int cmd_loss(const std::string& gt_path, const std::string& pd_path, const std::string& mode,
             const std::string& grid) {
  const auto [w, h] = parse_grid(grid);
  const PolyBox gt = read_polybox(gt_path);
  const PolyBox pd = read_polybox(pd_path);
  LossVector lv = crrs_loss(gt, pd, w, h);
  if (mode == "circle" || mode == "both") lv.circle_losses = circle_giou_loss(gt, pd);
  std::cout << nlohmann::json(lv).dump(2) << "\n";
  return 0;
}

int cmd_fit(const std::string& config_path, const std::string& gt_path,
            const std::string& init_path, const std::string& out_path) {
  FitConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open " + config_path);
    try {
      nlohmann::json j;
      in >> j;
      cfg = j.get<FitConfig>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError(config_path + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string(config_path.empty() ? "config" : config_path) + ": " + e.what());
  }

  const PolyBox gt = read_polybox(gt_path);
  const PolyBox init = init_path.empty() ? perturb_box(gt, cfg.seed) : read_polybox(init_path);
  const FitTrace trace = fit(gt, init, cfg);

  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write " + out_path);
  write_trace_csv(out, trace);
  if (trace.diverged) {
    std::cerr << "fit diverged after " << trace.steps.size() << " steps\n";
    return kExitDiverged;
  }
  std::cout << "final poly_iou " << trace.final_poly_iou() << " after " << trace.steps.size()
            << " steps\n";
  return 0;
}

int cmd_ingest(const std::string& masks_dir, const std::string& out_path) {
  const IngestResult res = ingest_masks(masks_dir);
  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write " + out_path);
  out << nlohmann::json(res.manifest).dump(2) << "\n";
  std::cout << "loaded " << res.n_loaded << " masks, skipped " << res.n_skipped << "\n";
  return res.n_skipped > 0 ? 1 : 0;
}

int cmd_map(const std::string& dets_path, const std::string& gt_path, double iou_thresh,
            const std::string& out_path, const std::string& pr_dir) {
  const auto dets = read_detections_jsonl(dets_path);
  const auto manifest = read_manifest(gt_path);
  const EvalReport report = mean_ap(dets, manifest, iou_thresh);

  nlohmann::json j{{"map", report.map}, {"iou_threshold", report.iou_threshold}};
  for (const auto& [cls, ap] : report.per_class_ap) j["per_class"][std::to_string(cls)] = ap;
  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write " + out_path);
  out << j.dump(2) << "\n";

  if (!pr_dir.empty()) {
    std::filesystem::create_directories(pr_dir);
    for (const auto& [cls, curve] : report.per_class_curve) {
      std::ofstream csv(pr_dir + "/pr_class_" + std::to_string(cls) + ".csv");
      csv << "recall,precision\n";
      for (const auto& p : curve) csv << p.recall << "," << p.precision << "\n";
    }
  }
  std::cout << "mAP@" << iou_thresh << " = " << report.map << "\n";
  return 0;
}

int cmd_ablate(int steps, int seeds, const std::string& out_path) {
  FitConfig base;
  base.steps = steps;
  const std::vector<LossMode> modes{LossMode::poly_only, LossMode::circles_giou,
                                    LossMode::rects_eiou, LossMode::circles_plus_poly,
                                    LossMode::rects_plus_poly, LossMode::rects_vertex_eiou};
  const auto rows = run_ablation(modes, base, seeds);

  std::cout << "mode                  mean_final_poly_iou\n";
  nlohmann::json j;
  for (const auto& row : rows) {
    std::printf("%-22s%.4f\n", loss_mode_name(row.mode), row.mean_final_iou);
    j[loss_mode_name(row.mode)] = row.mean_final_iou;
  }
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write " + out_path);
    out << j.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"24-point polygon boxes: pixel IoU, concentric-rectangle losses, "
               "DWA weighting, mAP evaluation and a desk-scale fit harness"};
  app.require_subcommand(1);

  std::string a_path, b_path, grid = "512x512";
  auto* iou = app.add_subcommand("iou", "Poly IoU of two PolyBox JSON files");
  iou->add_option("a", a_path, "first PolyBox JSON")->required();
  iou->add_option("b", b_path, "second PolyBox JSON")->required();
  iou->add_option("--grid", grid, "rasterization grid WxH");

  std::string gt_path, pd_path, mode = "rect";
  auto* loss = app.add_subcommand("loss", "per-term loss vector for a gt/pd pair");
  loss->add_option("--gt", gt_path, "ground truth PolyBox JSON")->required();
  loss->add_option("--pd", pd_path, "predicted PolyBox JSON")->required();
  loss->add_option("--mode", mode, "rect | circle | both")
      ->check(CLI::IsMember({"rect", "circle", "both"}));
  loss->add_option("--grid", grid, "rasterization grid WxH");

  std::string config_path, init_path, out_path = "trace.csv";
  auto* fit_cmd = app.add_subcommand("fit", "gradient-descent fit, writes a FitTrace CSV");
  fit_cmd->add_option("--config", config_path, "FitConfig JSON");
  fit_cmd->add_option("--gt", gt_path, "ground truth PolyBox JSON")->required();
  fit_cmd->add_option("--init", init_path, "initial PolyBox JSON (default: seeded perturbation)");
  fit_cmd->add_option("--out", out_path, "trace CSV path");

  std::string masks_dir, manifest_out = "manifest.json";
  auto* ingest = app.add_subcommand("ingest", "build a GT manifest from PGM instance masks");
  ingest->add_option("--masks", masks_dir, "directory of <image>_<class>_<obj>.pgm masks")
      ->required();
  ingest->add_option("--out", manifest_out, "manifest JSON path");

  std::string dets_path, report_out = "report.json", pr_dir;
  double iou_thresh = 0.5;
  auto* map_cmd = app.add_subcommand("map", "mAP over a detections file and GT manifest");
  map_cmd->add_option("--dets", dets_path, "detections JSON-lines file")->required();
  map_cmd->add_option("--gt", gt_path, "ground truth manifest JSON")->required();
  map_cmd->add_option("--iou-thresh", iou_thresh, "matching IoU threshold");
  map_cmd->add_option("--out", report_out, "report JSON path");
  map_cmd->add_option("--pr-dir", pr_dir, "directory for per-class PR-curve CSVs");

  int steps = 500, seeds = 3;
  std::string ablate_out;
  auto* ablate = app.add_subcommand("ablate", "run every loss mode over the synthetic suite");
  ablate->add_option("--steps", steps, "optimizer steps per fit");
  ablate->add_option("--seeds", seeds, "seeds per target");
  ablate->add_option("--out", ablate_out, "summary JSON path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*iou) return cmd_iou(a_path, b_path, grid);
    if (*loss) return cmd_loss(gt_path, pd_path, mode, grid);
    if (*fit_cmd) return cmd_fit(config_path, gt_path, init_path, out_path);
    if (*ingest) return cmd_ingest(masks_dir, manifest_out);
    if (*map_cmd) return cmd_map(dets_path, gt_path, iou_thresh, report_out, pr_dir);
    if (*ablate) return cmd_ablate(steps, seeds, ablate_out);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  }
  return 0;
}
