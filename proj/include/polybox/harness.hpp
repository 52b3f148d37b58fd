#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "polybox/eval.hpp"
#include "polybox/geometry.hpp"
#include "polybox/io.hpp"
#include "polybox/loss.hpp"
#include "polybox/weighting.hpp"

// Desk-scale regression harness: fits predicted PolyBox parameters to a
// ground truth under each loss configuration by plain gradient descent.
// Analytic gradients for the rect/circle terms, central finite differences
// for the pixel-level Poly IoU term. One optimizer step counts as one DWA
// epoch.

namespace polybox {

enum class LossMode {
  poly_only,
  circles_giou,
  rects_eiou,
  circles_plus_poly,
  rects_plus_poly,
  rects_vertex_eiou,  // construction ablation: diagonals replace center sharing
};

inline const char* loss_mode_name(LossMode m) {
  switch (m) {
    case LossMode::poly_only: return "poly_only";
    case LossMode::circles_giou: return "circles_giou";
    case LossMode::rects_eiou: return "rects_eiou";
    case LossMode::circles_plus_poly: return "circles_plus_poly";
    case LossMode::rects_plus_poly: return "rects_plus_poly";
    case LossMode::rects_vertex_eiou: return "rects_vertex_eiou";
  }
  return "?";
}

inline LossMode loss_mode_from_name(const std::string& s) {
  for (LossMode m : {LossMode::poly_only, LossMode::circles_giou, LossMode::rects_eiou,
                     LossMode::circles_plus_poly, LossMode::rects_plus_poly,
                     LossMode::rects_vertex_eiou}) {
    if (s == loss_mode_name(m)) return m;
  }
  throw std::invalid_argument("unknown loss mode: " + s);
}

struct FitConfig {
  LossMode loss_mode = LossMode::rects_plus_poly;
  int steps = 500;
  double step_size = 0.3;
  double temperature = 20.0;
  RatioMode ratio_mode = RatioMode::mean;
  int grid_w = 160;
  int grid_h = 160;
  unsigned seed = 1;
  double poly_gradient_step = 0.5;  // px, central differences

  void validate() const {
    if (steps < 1) throw std::invalid_argument("FitConfig: steps must be >= 1");
    if (step_size <= 0.0) throw std::invalid_argument("FitConfig: step_size must be > 0");
    if (temperature <= 0.0) throw std::invalid_argument("FitConfig: temperature must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const FitConfig& c) {
  j = nlohmann::json{{"loss_mode", loss_mode_name(c.loss_mode)},
                     {"steps", c.steps},
                     {"step_size", c.step_size},
                     {"temperature", c.temperature},
                     {"ratio_mode", c.ratio_mode == RatioMode::mean ? "mean" : "previous"},
                     {"grid_w", c.grid_w},
                     {"grid_h", c.grid_h},
                     {"seed", c.seed},
                     {"poly_gradient_step", c.poly_gradient_step}};
}

inline void from_json(const nlohmann::json& j, FitConfig& c) {
  c.loss_mode = loss_mode_from_name(j.value("loss_mode", std::string(loss_mode_name(c.loss_mode))));
  c.steps = j.value("steps", c.steps);
  c.step_size = j.value("step_size", c.step_size);
  c.temperature = j.value("temperature", c.temperature);
  const std::string rm = j.value("ratio_mode", c.ratio_mode == RatioMode::mean ? "mean" : "previous");
  if (rm != "mean" && rm != "previous")
    throw std::invalid_argument("FitConfig: ratio_mode must be 'mean' or 'previous'");
  c.ratio_mode = rm == "mean" ? RatioMode::mean : RatioMode::previous;
  c.grid_w = j.value("grid_w", c.grid_w);
  c.grid_h = j.value("grid_h", c.grid_h);
  c.seed = j.value("seed", c.seed);
  c.poly_gradient_step = j.value("poly_gradient_step", c.poly_gradient_step);
}

struct FitStep {
  PolyBox box;                 // parameters after this step's update
  std::vector<double> losses;  // per-stream, before the update
  std::vector<double> weights;
  double total_loss = 0.0;  // weighted sum
  double poly_iou = 0.0;    // vs ground truth, after the update
};

struct FitTrace {
  std::vector<FitStep> steps;
  bool diverged = false;

  double final_poly_iou() const { return steps.empty() ? 0.0 : steps.back().poly_iou; }
};

namespace detail {

struct Params {
  double cx, cy;
  std::array<double, PolyBox::kNumPoints> radii;

  static Params from(const PolyBox& b) { return {b.cx, b.cy, b.radii}; }
  PolyBox box() const { return {cx, cy, radii}; }
  double& at(int i) { return i == 0 ? cx : i == 1 ? cy : radii[i - 2]; }
};

// Per-rect weighted gradient of sum_i w_i * (1 - EIoU_i) over the 26
// parameters, for either rectangle construction.
inline CrrsGrad weighted_rect_gradient(const PolyBox& gt, const PolyBox& pd,
                                       std::span<const double> w, bool vertex_shared) {
  const auto& dirs = ray_directions();
  const auto gr = vertex_shared ? vertex_shared_rects(gt) : concentric_rects(gt);
  const auto pr = vertex_shared ? vertex_shared_rects(pd) : concentric_rects(pd);
  CrrsGrad out;
  for (int i = 0; i < kNumRects; ++i) {
    RectGrad g = rect_eiou_grad(gr[i], pr[i]);
    g.d_cx *= w[i];
    g.d_cy *= w[i];
    g.d_half_w *= w[i];
    g.d_half_h *= w[i];
    out.d_cx -= g.d_cx;
    out.d_cy -= g.d_cy;
    if (!vertex_shared) {
      if (i == 0) {
        out.d_radii[0] -= g.d_half_w;
        out.d_radii[6] -= g.d_half_h;
      } else if (i == 1) {
        out.d_radii[12] -= g.d_half_w;
        out.d_radii[18] -= g.d_half_h;
      } else {
        const int k = rect_point_index(i);
        out.d_radii[k] -= g.d_half_w * std::abs(dirs[k].x) + g.d_half_h * std::abs(dirs[k].y);
      }
    } else {
      if (i == 0) {
        out.d_radii[0] -= 0.5 * (g.d_cx + g.d_half_w);
        out.d_radii[6] -= 0.5 * (g.d_cy + g.d_half_h);
      } else if (i == 1) {
        out.d_radii[12] -= 0.5 * (-g.d_cx + g.d_half_w);
        out.d_radii[18] -= 0.5 * (-g.d_cy + g.d_half_h);
      } else {
        const int k = rect_point_index(i);
        out.d_radii[k] -=
            0.5 * (g.d_cx * dirs[k].x + g.d_cy * dirs[k].y + g.d_half_w * std::abs(dirs[k].x) +
                   g.d_half_h * std::abs(dirs[k].y));
      }
    }
  }
  return out;
}

}  // namespace detail

inline bool mode_has_rects(LossMode m) {
  return m == LossMode::rects_eiou || m == LossMode::rects_plus_poly ||
         m == LossMode::rects_vertex_eiou;
}
inline bool mode_has_circles(LossMode m) {
  return m == LossMode::circles_giou || m == LossMode::circles_plus_poly;
}
inline bool mode_has_poly(LossMode m) {
  return m == LossMode::poly_only || m == LossMode::circles_plus_poly ||
         m == LossMode::rects_plus_poly;
}

inline std::size_t mode_stream_count(LossMode m) {
  std::size_t n = 0;
  if (mode_has_rects(m)) n += kNumRects;
  if (mode_has_circles(m)) n += PolyBox::kNumPoints;
  if (mode_has_poly(m)) n += 1;
  return n;
}

inline FitTrace fit(const PolyBox& gt, const PolyBox& init, const FitConfig& config) {
  config.validate();
  const PixelCoverage gt_cov = rasterize(gt, config.grid_w, config.grid_h);
  const long gt_area = gt_cov.area();
  if (gt_area == 0) throw std::invalid_argument("fit: ground truth rasterizes empty");

  const bool vertex_shared = config.loss_mode == LossMode::rects_vertex_eiou;
  const std::size_t n_streams = mode_stream_count(config.loss_mode);
  WeightState ws(n_streams, config.temperature, config.ratio_mode);

  auto pd = detail::Params::from(init);
  FitTrace trace;
  trace.steps.reserve(static_cast<std::size_t>(config.steps));

  auto poly_loss_of = [&](const PolyBox& b) {
    return 1.0 - poly_iou_cached(gt_cov, gt_area, b);
  };

  for (int step = 0; step < config.steps; ++step) {
    const PolyBox pred = pd.box();

    std::vector<double> losses;
    losses.reserve(n_streams);
    if (mode_has_rects(config.loss_mode)) {
      const auto gr = vertex_shared ? vertex_shared_rects(gt) : concentric_rects(gt);
      const auto prr = vertex_shared ? vertex_shared_rects(pred) : concentric_rects(pred);
      for (int i = 0; i < kNumRects; ++i) losses.push_back(1.0 - rect_eiou(gr[i], prr[i]).first);
    }
    if (mode_has_circles(config.loss_mode)) {
      const auto cl = circle_giou_loss(gt, pred);
      losses.insert(losses.end(), cl.begin(), cl.end());
    }
    if (mode_has_poly(config.loss_mode)) losses.push_back(poly_loss_of(pred));

    const std::vector<double> weights = ws.update(losses);

    bool at_optimum = true;
    for (double l : losses) at_optimum = at_optimum && l < 1e-12;

    // weighted gradient over the 26 parameters
    double g_cx = 0.0, g_cy = 0.0;
    std::array<double, PolyBox::kNumPoints> g_r{};
    std::size_t off = 0;
    if (mode_has_rects(config.loss_mode)) {
      const auto g = detail::weighted_rect_gradient(
          gt, pred, std::span<const double>(weights).subspan(off, kNumRects), vertex_shared);
      g_cx += g.d_cx;
      g_cy += g.d_cy;
      for (int k = 0; k < PolyBox::kNumPoints; ++k) g_r[k] += g.d_radii[k];
      off += kNumRects;
    }
    if (mode_has_circles(config.loss_mode)) {
      // circle stream k has its own weight; the center terms pick up each
      // stream's weight individually
      const double dx = pred.cx - gt.cx, dy = pred.cy - gt.cy;
      const double dcen = std::hypot(dx, dy);
      for (int k = 0; k < PolyBox::kNumPoints; ++k) {
        const auto cg = polybox::detail::circle_giou(dcen, gt.radii[k], pred.radii[k]);
        const double w = weights[off + k];
        g_r[k] += -w * cg.d_r2;
        if (dcen > 0.0) {
          g_cx += -w * cg.d_dist * dx / dcen;
          g_cy += -w * cg.d_dist * dy / dcen;
        }
      }
      off += PolyBox::kNumPoints;
    }
    if (mode_has_poly(config.loss_mode) && !at_optimum) {
      const double w = weights[off];
      const double h = config.poly_gradient_step;
      for (int i = 0; i < 26; ++i) {
        auto plus = pd, minus = pd;
        plus.at(i) += h;
        minus.at(i) -= h;
        const double fd = (poly_loss_of(plus.box()) - poly_loss_of(minus.box())) / (2.0 * h);
        if (i == 0) g_cx += w * fd;
        else if (i == 1) g_cy += w * fd;
        else g_r[i - 2] += w * fd;
      }
    }

    if (!at_optimum) {
      pd.cx -= config.step_size * g_cx;
      pd.cy -= config.step_size * g_cy;
      for (int k = 0; k < PolyBox::kNumPoints; ++k) {
        pd.radii[k] = std::max(0.0, pd.radii[k] - config.step_size * g_r[k]);
      }
    }

    bool finite = std::isfinite(pd.cx) && std::isfinite(pd.cy);
    for (double r : pd.radii) finite = finite && std::isfinite(r);
    if (!finite) {
      trace.diverged = true;
      break;
    }

    FitStep rec;
    rec.box = pd.box();
    rec.losses = losses;
    rec.weights = weights;
    rec.total_loss = 0.0;
    for (std::size_t j = 0; j < losses.size(); ++j) rec.total_loss += weights[j] * losses[j];
    rec.poly_iou = poly_iou_cached(gt_cov, gt_area, rec.box);
    trace.steps.push_back(std::move(rec));
  }
  return trace;
}

// --- synthetic target suite ---

struct SyntheticTarget {
  std::string name;
  PolyBox box;
  int grid_w = 160;
  int grid_h = 160;
};

inline PolyBox make_regular_polygon(double cx, double cy, double radius) {
  PolyBox b{cx, cy, {}};
  b.radii.fill(radius);
  return b;
}

inline PolyBox make_ellipse_box(double cx, double cy, double a, double b) {
  PolyBox box{cx, cy, {}};
  for (int k = 0; k < PolyBox::kNumPoints; ++k) {
    const double t = k * (M_PI / 12.0);
    const double den = std::hypot(b * std::cos(t), a * std::sin(t));
    box.radii[k] = a * b / den;
  }
  return box;
}

inline PolyBox make_star_box(double cx, double cy, double r_outer, double r_inner) {
  PolyBox box{cx, cy, {}};
  for (int k = 0; k < PolyBox::kNumPoints; ++k) box.radii[k] = (k % 2 == 0) ? r_outer : r_inner;
  return box;
}

// L-shaped mask with legs of thickness ~0.9*scale and length 2*scale,
// sampled through the mask pipeline like real ground truth. The thickness
// keeps the region centroid inside the mask so sampling is valid.
inline PolyBox make_l_shape_box(int grid_w, int grid_h, double scale) {
  InstanceMask mask(grid_w, grid_h);
  const int x0 = grid_w / 2 - static_cast<int>(scale);
  const int y0 = grid_h / 2 - static_cast<int>(scale);
  const int leg = static_cast<int>(2.0 * scale);
  const int thick = static_cast<int>(0.9 * scale);
  for (int y = 0; y < leg; ++y) {
    for (int x = 0; x < leg; ++x) {
      if (x < thick || y < thick) {
        const int px = x0 + x, py = y0 + y;
        if (mask.contains(px, py)) mask.at(px, py) = 255;
      }
    }
  }
  const auto [cx, cy] = centroid_from_mask(mask);
  return sample_boundary(mask, cx, cy).box;
}

inline std::vector<SyntheticTarget> synthetic_suite() {
  std::vector<SyntheticTarget> suite;
  for (double scale : {20.0, 30.0, 40.0}) {
    const int grid = static_cast<int>(4.0 * scale);
    const double c = grid / 2.0;
    const std::string tag = "_s" + std::to_string(static_cast<int>(scale));
    suite.push_back({"regular" + tag, make_regular_polygon(c, c, scale), grid, grid});
    suite.push_back({"ellipse" + tag, make_ellipse_box(c, c, 1.3 * scale, 0.75 * scale), grid, grid});
    suite.push_back({"star" + tag, make_star_box(c, c, scale, 0.5 * scale), grid, grid});
    suite.push_back({"lshape" + tag, make_l_shape_box(grid, grid, 0.8 * scale), grid, grid});
  }
  return suite;
}

// Seeded perturbation used as the fit starting point: centroid offset plus
// multiplicative radius noise, partial overlap with the target.
inline PolyBox perturb_box(const PolyBox& gt, unsigned seed) {
  std::mt19937 rng(seed);
  double mean_r = 0.0;
  for (double r : gt.radii) mean_r += r;
  mean_r /= PolyBox::kNumPoints;

  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> mag(0.4, 0.7);
  std::uniform_real_distribution<double> global_scale(0.7, 1.3);
  std::uniform_real_distribution<double> local_scale(0.85, 1.15);

  PolyBox out = gt;
  const double a = angle(rng);
  const double m = mag(rng) * mean_r;
  out.cx += m * std::cos(a);
  out.cy += m * std::sin(a);
  const double gs = global_scale(rng);
  for (auto& r : out.radii) r = std::max(1.0, r * gs * local_scale(rng));
  return out;
}

// --- mask ingestion ---

struct IngestResult {
  DatasetManifest manifest;
  int n_loaded = 0;
  int n_skipped = 0;
};

// Reads `<image_id>_<class_id>_<obj>.pgm` masks and emits a manifest with
// sampled PolyBoxes. Unreadable or empty masks are skipped with a warning.
inline IngestResult ingest_masks(const std::string& directory) {
  namespace fs = std::filesystem;
  IngestResult res;
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm")
      paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());

  std::map<std::string, ImageInfo> images;
  for (const auto& p : paths) {
    const std::string stem = p.stem().string();
    const auto last = stem.rfind('_');
    const auto second = last == std::string::npos ? std::string::npos : stem.rfind('_', last - 1);
    if (second == std::string::npos) {
      std::cerr << "warning: skipping " << p << " (name is not <image>_<class>_<obj>.pgm)\n";
      ++res.n_skipped;
      continue;
    }
    const std::string image_id = stem.substr(0, second);
    int class_id;
    try {
      class_id = std::stoi(stem.substr(second + 1, last - second - 1));
    } catch (const std::exception&) {
      std::cerr << "warning: skipping " << p << " (bad class id)\n";
      ++res.n_skipped;
      continue;
    }
    try {
      const InstanceMask mask = read_pgm(p.string());
      const auto [cx, cy] = centroid_from_mask(mask);
      const auto sampled = sample_boundary(mask, cx, cy);
      auto& im = images[image_id];
      im.id = image_id;
      im.width = std::max(im.width, mask.width);
      im.height = std::max(im.height, mask.height);
      res.manifest.annotations.push_back({image_id, class_id, sampled.box});
      ++res.n_loaded;
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << p << " (" << e.what() << ")\n";
      ++res.n_skipped;
    }
  }
  for (auto& [id, im] : images) res.manifest.images.push_back(im);
  return res;
}

// --- ablation ---

inline unsigned worker_count() {
  if (const char* env = std::getenv("POLYBOX_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

inline void run_parallel(std::vector<std::function<void()>> jobs) {
  const unsigned n_workers = std::min<unsigned>(worker_count(), jobs.size());
  if (n_workers <= 1) {
    for (auto& j : jobs) j();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < n_workers; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= jobs.size()) break;
        jobs[i]();
      }
    });
  }
  for (auto& t : pool) t.join();
}

struct AblationRow {
  LossMode mode;
  double mean_final_iou = 0.0;
};

// Mean final poly_iou per mode over the synthetic suite, n_seeds fits per
// target. The modes mirror the loss-combination and construction ablations.
inline std::vector<AblationRow> run_ablation(const std::vector<LossMode>& modes,
                                             const FitConfig& base, int n_seeds = 3) {
  const auto suite = synthetic_suite();
  std::vector<AblationRow> rows;
  for (LossMode mode : modes) rows.push_back({mode, 0.0});

  std::vector<std::function<void()>> jobs;
  std::vector<double> sums(modes.size(), 0.0);
  std::mutex mu;
  for (std::size_t mi = 0; mi < modes.size(); ++mi) {
    for (const auto& target : suite) {
      for (int s = 0; s < n_seeds; ++s) {
        jobs.push_back([&, mi, target, s] {
          FitConfig cfg = base;
          cfg.loss_mode = modes[mi];
          cfg.grid_w = target.grid_w;
          cfg.grid_h = target.grid_h;
          cfg.seed = base.seed + static_cast<unsigned>(s);
          const PolyBox init = perturb_box(target.box, cfg.seed * 7919u + std::hash<std::string>{}(target.name) % 1000003u);
          const FitTrace trace = fit(target.box, init, cfg);
          std::lock_guard<std::mutex> lock(mu);
          sums[mi] += trace.final_poly_iou();
        });
      }
    }
  }
  run_parallel(std::move(jobs));
  const double n_runs = static_cast<double>(suite.size() * n_seeds);
  for (std::size_t mi = 0; mi < modes.size(); ++mi) rows[mi].mean_final_iou = sums[mi] / n_runs;
  return rows;
}

inline void write_trace_csv(std::ostream& out, const FitTrace& trace) {
  if (trace.steps.empty()) return;
  out << "step,total_loss,poly_iou";
  for (std::size_t i = 0; i < trace.steps[0].losses.size(); ++i) out << ",loss_" << i;
  for (std::size_t i = 0; i < trace.steps[0].weights.size(); ++i) out << ",weight_" << i;
  out << "\n";
  for (std::size_t s = 0; s < trace.steps.size(); ++s) {
    const auto& st = trace.steps[s];
    out << s << "," << st.total_loss << "," << st.poly_iou;
    for (double l : st.losses) out << "," << l;
    for (double w : st.weights) out << "," << w;
    out << "\n";
  }
}

}  // namespace polybox
