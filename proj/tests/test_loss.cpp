#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "polybox/loss.hpp"

using namespace polybox;

namespace {

PolyBox random_smooth_pair_member(std::mt19937& rng) {
  std::uniform_real_distribution<double> uc(40.0, 60.0), ur(5.0, 30.0);
  PolyBox b{uc(rng), uc(rng), {}};
  for (auto& r : b.radii) r = ur(rng);
  return b;
}

// central finite difference of the summed concentric rect losses
double summed_rect_loss(const PolyBox& gt, const PolyBox& pd) {
  const auto gr = concentric_rects(gt);
  const auto pr = concentric_rects(pd);
  double s = 0.0;
  for (int i = 0; i < kNumRects; ++i) s += 1.0 - rect_eiou(gr[i], pr[i]).first;
  return s;
}

double summed_vertex_loss(const PolyBox& gt, const PolyBox& pd) {
  const auto gr = vertex_shared_rects(gt);
  const auto pr = vertex_shared_rects(pd);
  double s = 0.0;
  for (int i = 0; i < kNumRects; ++i) s += 1.0 - rect_eiou(gr[i], pr[i]).first;
  return s;
}

}  // namespace

TEST_CASE("concentric_rects: constant radii") {
  PolyBox b{0.0, 0.0, {}};
  b.radii.fill(10.0);
  const auto rects = concentric_rects(b);
  CHECK(rects[0].half_w == doctest::Approx(10.0));
  CHECK(rects[0].half_h == doctest::Approx(10.0));
  CHECK(rects[1].half_w == doctest::Approx(10.0));
  CHECK(rects[1].half_h == doctest::Approx(10.0));
  // rect index 2 corresponds to k=1
  CHECK(rects[2].half_w == doctest::Approx(10.0 * std::cos(M_PI / 12.0)));
  CHECK(rects[2].half_h == doctest::Approx(10.0 * std::sin(M_PI / 12.0)));
}

TEST_CASE("concentric_rects: zero radii degenerate") {
  PolyBox b{3.0, 4.0, {}};
  for (const auto& r : concentric_rects(b)) {
    CHECK(r.cx == 3.0);
    CHECK(r.cy == 4.0);
    CHECK(r.half_w == 0.0);
    CHECK(r.half_h == 0.0);
  }
}

TEST_CASE("concentric_rects: independent per-rect oracle on irregular radii") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> ur(1.0, 20.0);
  PolyBox b{12.0, 7.0, {}};
  for (auto& r : b.radii) r = ur(rng);
  const auto rects = concentric_rects(b);

  // oracle: walk k in ascending order, applying the stated formulas
  int idx = 2;
  for (int k = 0; k < 24; ++k) {
    if (k == 0 || k == 6 || k == 12 || k == 18) continue;
    const double theta = k * M_PI / 12.0;
    CHECK(rects[idx].half_w == doctest::Approx(b.radii[k] * std::abs(std::cos(theta))));
    CHECK(rects[idx].half_h == doctest::Approx(b.radii[k] * std::abs(std::sin(theta))));
    ++idx;
  }
  CHECK(rects[0].half_w == b.radii[0]);
  CHECK(rects[0].half_h == b.radii[6]);
  CHECK(rects[1].half_w == b.radii[12]);
  CHECK(rects[1].half_h == b.radii[18]);
}

TEST_CASE("concentric properties: center and half-diagonal") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto b = random_smooth_pair_member(rng);
    const auto rects = concentric_rects(b);
    for (const auto& r : rects) {
      CHECK(r.cx == b.cx);
      CHECK(r.cy == b.cy);
    }
    for (int i = 2; i < kNumRects; ++i) {
      const int k = rect_point_index(i);
      const double diag = std::hypot(rects[i].half_w, rects[i].half_h);
      CHECK(diag == doctest::Approx(b.radii[k]).epsilon(1e-9));
    }
  }
}

TEST_CASE("vertex_shared_rects: axis pair spans the diagonal P0-P6") {
  PolyBox b{0.0, 0.0, {}};
  b.radii[0] = 10.0;
  b.radii[6] = 8.0;
  const auto rects = vertex_shared_rects(b);
  CHECK(rects[0].cx - rects[0].half_w == doctest::Approx(0.0));
  CHECK(rects[0].cx + rects[0].half_w == doctest::Approx(10.0));
  CHECK(rects[0].cy - rects[0].half_h == doctest::Approx(0.0));
  CHECK(rects[0].cy + rects[0].half_h == doctest::Approx(8.0));
}

TEST_CASE("vertex_shared_rects: centroid is a corner of every rect") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto b = random_smooth_pair_member(rng);
    for (const auto& r : vertex_shared_rects(b)) {
      const double dx = std::min(std::abs(r.cx - r.half_w - b.cx), std::abs(r.cx + r.half_w - b.cx));
      const double dy = std::min(std::abs(r.cy - r.half_h - b.cy), std::abs(r.cy + r.half_h - b.cy));
      CHECK(dx == doctest::Approx(0.0).epsilon(1e-9));
      CHECK(dy == doctest::Approx(0.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("rect_eiou: identity") {
  const CenteredRect r{5.0, 5.0, 3.0, 2.0};
  const auto [eiou, geom] = rect_eiou(r, r);
  CHECK(eiou == doctest::Approx(1.0));
  CHECK(geom.iou == doctest::Approx(1.0));
}

TEST_CASE("rect_eiou: hand-evaluated translation case") {
  const CenteredRect gt{0.0, 0.0, 5.0, 5.0};
  const CenteredRect pd{10.0, 0.0, 5.0, 5.0};
  const auto [eiou, geom] = rect_eiou(gt, pd);
  CHECK(geom.iou == 0.0);
  CHECK(geom.rho_sq == doctest::Approx(100.0));
  CHECK(geom.c_w == doctest::Approx(20.0));
  CHECK(geom.c_h == doctest::Approx(10.0));
  CHECK(eiou == doctest::Approx(-0.2).epsilon(1e-9));
}

TEST_CASE("rect_eiou: hand-evaluated scale case") {
  const CenteredRect gt{0.0, 0.0, 5.0, 5.0};
  const CenteredRect pd{0.0, 0.0, 10.0, 10.0};
  const auto [eiou, geom] = rect_eiou(gt, pd);
  CHECK(geom.iou == doctest::Approx(0.25));
  CHECK(eiou == doctest::Approx(-0.25).epsilon(1e-9));
}

TEST_CASE("rect_eiou: coincident degenerate pair is a perfect match") {
  const CenteredRect p{2.0, 2.0, 0.0, 0.0};
  CHECK(rect_eiou(p, p).first == 1.0);
  // distinct degenerate rects stay finite
  const CenteredRect q{5.0, 2.0, 0.0, 0.0};
  CHECK(std::isfinite(rect_eiou(p, q).first));
}

TEST_CASE("crrs_loss: identity gives the zero vector") {
  std::mt19937 rng(9);
  const auto g = random_smooth_pair_member(rng);
  const auto lv = crrs_loss(g, g, 128, 128);
  for (double l : lv.rect_losses) CHECK(l == doctest::Approx(0.0));
  CHECK(lv.poly_loss == doctest::Approx(0.0));
}

TEST_CASE("crrs_loss: shifted all-5 radii reproduces the rect_eiou case") {
  PolyBox gt{50.0, 50.0, {}};
  gt.radii.fill(5.0);
  PolyBox pd = gt;
  pd.cx += 10.0;
  const auto lv = crrs_loss(gt, pd, 128, 128);
  // Rect_0 is a 5x5-half square for both boxes, offset by 10 in x
  CHECK(lv.rect_losses[0] == doctest::Approx(1.2).epsilon(1e-9));
}

TEST_CASE("crrs_loss: element-wise oracle equivalence on random pairs") {
  std::mt19937 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto gt = random_smooth_pair_member(rng);
    const auto pd = random_smooth_pair_member(rng);
    const auto lv = crrs_loss(gt, pd, 128, 128);
    const auto gr = concentric_rects(gt);
    const auto pr = concentric_rects(pd);
    for (int i = 0; i < kNumRects; ++i) {
      CHECK(lv.rect_losses[i] == doctest::Approx(1.0 - rect_eiou(gr[i], pr[i]).first));
      CHECK(lv.rect_losses[i] >= 0.0);
      CHECK(lv.rect_losses[i] < 3.0);
    }
  }
}

TEST_CASE("crrs loss invariance: translation and scale") {
  std::mt19937 rng(31);
  const auto gt = random_smooth_pair_member(rng);
  const auto pd = random_smooth_pair_member(rng);
  const auto base = concentric_rects(gt);
  const auto basep = concentric_rects(pd);

  auto shift = [](PolyBox b, double dx, double dy) {
    b.cx += dx;
    b.cy += dy;
    return b;
  };
  const auto g2 = concentric_rects(shift(gt, 13.5, -7.25));
  const auto p2 = concentric_rects(shift(pd, 13.5, -7.25));
  for (int i = 0; i < kNumRects; ++i) {
    CHECK(std::abs(rect_eiou(base[i], basep[i]).first - rect_eiou(g2[i], p2[i]).first) <= 1e-12);
  }

  auto scale = [](PolyBox b, double s) {
    b.cx *= s;
    b.cy *= s;
    for (auto& r : b.radii) r *= s;
    return b;
  };
  const auto g3 = concentric_rects(scale(gt, 3.7));
  const auto p3 = concentric_rects(scale(pd, 3.7));
  for (int i = 0; i < kNumRects; ++i) {
    CHECK(rect_eiou(base[i], basep[i]).first ==
          doctest::Approx(rect_eiou(g3[i], p3[i]).first).epsilon(1e-9));
  }
}

TEST_CASE("crrs_gradient vs central finite differences") {
  std::mt19937 rng(17);
  const double h = 1e-4;
  double max_rel = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto gt = random_smooth_pair_member(rng);
    const auto pd = random_smooth_pair_member(rng);
    const auto grad = crrs_gradient(gt, pd);
    for (int p = 0; p < 26; ++p) {
      auto plus = pd, minus = pd;
      double* pp = p == 0 ? &plus.cx : p == 1 ? &plus.cy : &plus.radii[p - 2];
      double* pm = p == 0 ? &minus.cx : p == 1 ? &minus.cy : &minus.radii[p - 2];
      *pp += h;
      *pm -= h;
      const double fd = (summed_rect_loss(gt, plus) - summed_rect_loss(gt, minus)) / (2 * h);
      const double an = p == 0 ? grad.d_cx : p == 1 ? grad.d_cy : grad.d_radii[p - 2];
      const double rel = std::abs(an - fd) / std::max(1.0, std::abs(fd));
      max_rel = std::max(max_rel, rel);
    }
  }
  CHECK(max_rel <= 1e-4);
}

TEST_CASE("crrs_gradient: pure x-offset with symmetric radii has zero cy gradient") {
  PolyBox gt{50.0, 50.0, {}};
  gt.radii.fill(8.0);
  PolyBox pd = gt;
  pd.cx += 6.0;
  CHECK(crrs_gradient(gt, pd).d_cy == doctest::Approx(0.0));
}

TEST_CASE("vertex_shared_gradient vs central finite differences") {
  std::mt19937 rng(19);
  const double h = 1e-4;
  for (int trial = 0; trial < 30; ++trial) {
    const auto gt = random_smooth_pair_member(rng);
    const auto pd = random_smooth_pair_member(rng);
    const auto grad = vertex_shared_gradient(gt, pd);
    for (int p = 0; p < 26; ++p) {
      auto plus = pd, minus = pd;
      double* pp = p == 0 ? &plus.cx : p == 1 ? &plus.cy : &plus.radii[p - 2];
      double* pm = p == 0 ? &minus.cx : p == 1 ? &minus.cy : &minus.radii[p - 2];
      *pp += h;
      *pm -= h;
      const double fd = (summed_vertex_loss(gt, plus) - summed_vertex_loss(gt, minus)) / (2 * h);
      const double an = p == 0 ? grad.d_cx : p == 1 ? grad.d_cy : grad.d_radii[p - 2];
      CHECK(std::abs(an - fd) / std::max(1.0, std::abs(fd)) <= 1e-4);
    }
  }
}

TEST_CASE("circle_giou_loss: identity, concentric, disjoint closed forms") {
  PolyBox gt{50.0, 50.0, {}};
  gt.radii.fill(5.0);
  auto losses = circle_giou_loss(gt, gt);
  for (double l : losses) CHECK(l == doctest::Approx(0.0));

  // concentric radii 5 and 10: IoU 1/4, enclosing = larger circle
  PolyBox pd = gt;
  pd.radii.fill(10.0);
  losses = circle_giou_loss(gt, pd);
  for (double l : losses) CHECK(l == doctest::Approx(0.75).epsilon(1e-9));

  // disjoint equal circles radius 5, centers 20 apart
  pd = gt;
  pd.cx += 20.0;
  losses = circle_giou_loss(gt, pd);
  for (double l : losses) CHECK(l == doctest::Approx(16.0 / 9.0).epsilon(1e-9));
}

TEST_CASE("circle_giou_loss: coincident zero circles cost nothing") {
  PolyBox z{10.0, 10.0, {}};
  for (double l : circle_giou_loss(z, z)) CHECK(l == 0.0);
}

TEST_CASE("circle_giou_gradient vs central finite differences") {
  std::mt19937 rng(23);
  const double h = 1e-5;
  auto total = [](const PolyBox& gt, const PolyBox& pd) {
    double s = 0.0;
    for (double l : circle_giou_loss(gt, pd)) s += l;
    return s;
  };
  for (int trial = 0; trial < 30; ++trial) {
    const auto gt = random_smooth_pair_member(rng);
    const auto pd = random_smooth_pair_member(rng);
    const auto grad = circle_giou_gradient(gt, pd);
    for (int p = 0; p < 26; ++p) {
      auto plus = pd, minus = pd;
      double* pp = p == 0 ? &plus.cx : p == 1 ? &plus.cy : &plus.radii[p - 2];
      double* pm = p == 0 ? &minus.cx : p == 1 ? &minus.cy : &minus.radii[p - 2];
      *pp += h;
      *pm -= h;
      const double fd = (total(gt, plus) - total(gt, minus)) / (2 * h);
      const double an = p == 0 ? grad.d_cx : p == 1 ? grad.d_cy : grad.d_radii[p - 2];
      CHECK(std::abs(an - fd) / std::max(1.0, std::abs(fd)) <= 1e-3);
    }
  }
}
