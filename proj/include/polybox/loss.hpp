#pragma once

#include <array>
#include <cmath>
#include <optional>

#include "polybox/geometry.hpp"

// Concentric-rectangle EIoU loss, the vertex-shared ablation construction,
// the 24-circle GIoU baseline and analytic gradients w.r.t. the 26
// prediction parameters (cx, cy, r_0..r_23).

namespace polybox {

inline constexpr int kNumRects = 22;
inline constexpr double kDenomEps = 1e-7;  // guards degenerate denominators

// Axis-aligned rectangle given by center and half extents.
struct CenteredRect {
  double cx = 0.0;
  double cy = 0.0;
  double half_w = 0.0;
  double half_h = 0.0;

  double width() const { return 2.0 * half_w; }
  double height() const { return 2.0 * half_h; }
};

// Geometry shared by an EIoU evaluation of one gt/pd rectangle pair.
struct RectPairGeometry {
  double iou = 0.0;
  double rho_sq = 0.0;  // squared center distance
  double c_w = 0.0;     // enclosing-rectangle width
  double c_h = 0.0;
  double c_diag = 0.0;
};

struct LossVector {
  std::array<double, kNumRects> rect_losses{};
  double poly_loss = 0.0;
  std::optional<std::array<double, PolyBox::kNumPoints>> circle_losses;
};

// The ascending-k order of the 20 off-axis radii, preceded by the two
// axis rectangles built from (r_0, r_6) and (r_12, r_18).
inline int rect_point_index(int rect) {
  // rect >= 2 maps to k in {1..5, 7..11, 13..17, 19..23}
  int k = rect - 2;
  k += 1 + k / 5;  // skip 0, 6, 12, 18
  return k;
}

// 22 rectangles all centered on the centroid. The two axis rectangles pair
// one horizontal with one vertical radius; the rest take r_k as the
// half-diagonal, split by the ray direction.
inline std::array<CenteredRect, kNumRects> concentric_rects(const PolyBox& box) {
  const auto& dirs = ray_directions();
  std::array<CenteredRect, kNumRects> rects{};
  rects[0] = {box.cx, box.cy, box.radii[0], box.radii[6]};
  rects[1] = {box.cx, box.cy, box.radii[12], box.radii[18]};
  for (int i = 2; i < kNumRects; ++i) {
    const int k = rect_point_index(i);
    rects[i] = {box.cx, box.cy, box.radii[k] * std::abs(dirs[k].x),
                box.radii[k] * std::abs(dirs[k].y)};
  }
  return rects;
}

// Ablation construction: every rectangle has the centroid as one corner.
// The two axis rectangles take P_0-P_6 and P_12-P_18 as diagonals, the
// rest take C-P_k.
inline std::array<CenteredRect, kNumRects> vertex_shared_rects(const PolyBox& box) {
  const auto& dirs = ray_directions();
  std::array<CenteredRect, kNumRects> rects{};
  const double r0 = box.radii[0], r6 = box.radii[6];
  const double r12 = box.radii[12], r18 = box.radii[18];
  rects[0] = {box.cx + r0 / 2.0, box.cy + r6 / 2.0, r0 / 2.0, r6 / 2.0};
  rects[1] = {box.cx - r12 / 2.0, box.cy - r18 / 2.0, r12 / 2.0, r18 / 2.0};
  for (int i = 2; i < kNumRects; ++i) {
    const int k = rect_point_index(i);
    const double r = box.radii[k];
    rects[i] = {box.cx + r * dirs[k].x / 2.0, box.cy + r * dirs[k].y / 2.0,
                r * std::abs(dirs[k].x) / 2.0, r * std::abs(dirs[k].y) / 2.0};
  }
  return rects;
}

// EIoU of one rectangle pair:
//   EIoU = IoU - rho^2/c_diag^2 - dW^2/c_w^2 - dH^2/c_h^2
// Coincident degenerate pair counts as a perfect match.
inline std::pair<double, RectPairGeometry> rect_eiou(const CenteredRect& gt,
                                                     const CenteredRect& pd) {
  RectPairGeometry g;
  const double dx = gt.cx - pd.cx;
  const double dy = gt.cy - pd.cy;
  g.rho_sq = dx * dx + dy * dy;
  g.c_w = std::max(gt.cx + gt.half_w, pd.cx + pd.half_w) -
          std::min(gt.cx - gt.half_w, pd.cx - pd.half_w);
  g.c_h = std::max(gt.cy + gt.half_h, pd.cy + pd.half_h) -
          std::min(gt.cy - gt.half_h, pd.cy - pd.half_h);
  g.c_diag = std::hypot(g.c_w, g.c_h);
  if (g.c_w == 0.0 && g.c_h == 0.0 && g.rho_sq == 0.0) {
    g.iou = 1.0;
    return {1.0, g};  // both degenerate and coincident
  }

  const double ow = std::min(gt.cx + gt.half_w, pd.cx + pd.half_w) -
                    std::max(gt.cx - gt.half_w, pd.cx - pd.half_w);
  const double oh = std::min(gt.cy + gt.half_h, pd.cy + pd.half_h) -
                    std::max(gt.cy - gt.half_h, pd.cy - pd.half_h);
  const double inter = (ow > 0.0 && oh > 0.0) ? ow * oh : 0.0;
  const double uni = gt.width() * gt.height() + pd.width() * pd.height() - inter;
  // min/max interval arithmetic can put inter an ulp above uni at identity
  g.iou = uni > 0.0 ? std::min(1.0, inter / uni) : 0.0;

  const double diag_sq = std::max(g.c_diag * g.c_diag, kDenomEps);
  const double cw_sq = std::max(g.c_w * g.c_w, kDenomEps);
  const double ch_sq = std::max(g.c_h * g.c_h, kDenomEps);
  const double dw = gt.width() - pd.width();
  const double dh = gt.height() - pd.height();
  const double eiou = g.iou - g.rho_sq / diag_sq - dw * dw / cw_sq - dh * dh / ch_sq;
  return {eiou, g};
}

/// Per-term losses: 22 rect EIoU losses (1 - EIoU) plus the pixel-level
// Poly IoU loss on the given grid.
inline LossVector crrs_loss(const PolyBox& gt, const PolyBox& pd, int grid_w, int grid_h) {
  LossVector lv;
  const auto gr = concentric_rects(gt);
  const auto pr = concentric_rects(pd);
  for (int i = 0; i < kNumRects; ++i) lv.rect_losses[i] = 1.0 - rect_eiou(gr[i], pr[i]).first;
  lv.poly_loss = 1.0 - poly_iou(gt, pd, grid_w, grid_h);
  return lv;
}

// d(EIoU)/d(pd.cx, pd.cy, pd.half_w, pd.half_h) with gt held constant.
// Edge-touching configurations take the one-sided derivative from the
// overlapping side.
struct RectGrad {
  double d_cx = 0.0;
  double d_cy = 0.0;
  double d_half_w = 0.0;
  double d_half_h = 0.0;
};

inline RectGrad rect_eiou_grad(const CenteredRect& gt, const CenteredRect& pd) {
  const double al = gt.cx - gt.half_w, ar = gt.cx + gt.half_w;
  const double at = gt.cy - gt.half_h, ab = gt.cy + gt.half_h;
  const double pl = pd.cx - pd.half_w, pr = pd.cx + pd.half_w;
  const double pt = pd.cy - pd.half_h, pb = pd.cy + pd.half_h;

  const double ow = std::min(ar, pr) - std::max(al, pl);
  const double oh = std::min(ab, pb) - std::max(at, pt);
  const bool overlap = ow > 0.0 && oh > 0.0;
  const double inter = overlap ? ow * oh : 0.0;
  const double area_g = (ar - al) * (ab - at);
  const double area_p = (pr - pl) * (pb - pt);
  const double uni = std::max(area_g + area_p - inter, kDenomEps);

  // overlap-edge indicators: which side of min/max the pd edge provides
  double dow_dpx = 0.0, dow_dpw = 0.0, doh_dpy = 0.0, doh_dph = 0.0;
  if (overlap) {
    // ties count as the overlapping side, so the gradient vanishes at an
    // exact match
    const double right = (pr <= ar) ? 1.0 : 0.0;
    const double left = (pl >= al) ? 1.0 : 0.0;
    dow_dpx = right - left;
    dow_dpw = right + left;
    const double bottom = (pb <= ab) ? 1.0 : 0.0;
    const double top = (pt >= at) ? 1.0 : 0.0;
    doh_dpy = bottom - top;
    doh_dph = bottom + top;
  }
  const double di_dpx = overlap ? oh * dow_dpx : 0.0;
  const double di_dpy = overlap ? ow * doh_dpy : 0.0;
  const double di_dpw = overlap ? oh * dow_dpw : 0.0;
  const double di_dph = overlap ? ow * doh_dph : 0.0;

  const double du_dpx = -di_dpx;
  const double du_dpy = -di_dpy;
  const double du_dpw = 2.0 * (pb - pt) - di_dpw;  // d(area_p)/d(half_w) = 2*height
  const double du_dph = 2.0 * (pr - pl) - di_dph;

  const double uni_sq = uni * uni;
  const double diou_dpx = (di_dpx * uni - inter * du_dpx) / uni_sq;
  const double diou_dpy = (di_dpy * uni - inter * du_dpy) / uni_sq;
  const double diou_dpw = (di_dpw * uni - inter * du_dpw) / uni_sq;
  const double diou_dph = (di_dph * uni - inter * du_dph) / uni_sq;

  // enclosing rectangle
  const double c_w = std::max(ar, pr) - std::min(al, pl);
  const double c_h = std::max(ab, pb) - std::min(at, pt);
  const double er = (pr > ar) ? 1.0 : 0.0;
  const double el = (pl < al) ? 1.0 : 0.0;
  const double eb = (pb > ab) ? 1.0 : 0.0;
  const double et = (pt < at) ? 1.0 : 0.0;
  const double dcw_dpx = er - el, dcw_dpw = er + el;
  const double dch_dpy = eb - et, dch_dph = eb + et;

  const double rho_sq = (pd.cx - gt.cx) * (pd.cx - gt.cx) + (pd.cy - gt.cy) * (pd.cy - gt.cy);
  const double diag_sq = std::max(c_w * c_w + c_h * c_h, kDenomEps);
  const double cw_sq = std::max(c_w * c_w, kDenomEps);
  const double ch_sq = std::max(c_h * c_h, kDenomEps);

  // rho^2 / diag^2
  const double ddiag_dpx = 2.0 * c_w * dcw_dpx;
  const double ddiag_dpy = 2.0 * c_h * dch_dpy;
  const double ddiag_dpw = 2.0 * c_w * dcw_dpw;
  const double ddiag_dph = 2.0 * c_h * dch_dph;
  const double diag_q = diag_sq * diag_sq;
  const double dt1_dpx = (2.0 * (pd.cx - gt.cx) * diag_sq - rho_sq * ddiag_dpx) / diag_q;
  const double dt1_dpy = (2.0 * (pd.cy - gt.cy) * diag_sq - rho_sq * ddiag_dpy) / diag_q;
  const double dt1_dpw = -rho_sq * ddiag_dpw / diag_q;
  const double dt1_dph = -rho_sq * ddiag_dph / diag_q;

  // dW^2 / c_w^2 and dH^2 / c_h^2
  const double dw = (ar - al) - (pr - pl);
  const double dh = (ab - at) - (pb - pt);
  const double cw_q = cw_sq * cw_sq;
  const double ch_q = ch_sq * ch_sq;
  const double dt2_dpw = (-4.0 * dw * cw_sq - dw * dw * 2.0 * c_w * dcw_dpw) / cw_q;
  const double dt2_dpx = -dw * dw * 2.0 * c_w * dcw_dpx / cw_q;
  const double dt3_dph = (-4.0 * dh * ch_sq - dh * dh * 2.0 * c_h * dch_dph) / ch_q;
  const double dt3_dpy = -dh * dh * 2.0 * c_h * dch_dpy / ch_q;

  RectGrad g;
  g.d_cx = diou_dpx - dt1_dpx - dt2_dpx;
  g.d_cy = diou_dpy - dt1_dpy - dt3_dpy;
  g.d_half_w = diou_dpw - dt1_dpw - dt2_dpw;
  g.d_half_h = diou_dph - dt1_dph - dt3_dph;
  return g;
}

// Gradient of the summed rect losses over the 26 prediction parameters.
// The Poly IoU term has no closed form and is handled numerically by the
// harness.
struct CrrsGrad {
  double d_cx = 0.0;
  double d_cy = 0.0;
  std::array<double, PolyBox::kNumPoints> d_radii{};
};

inline CrrsGrad crrs_gradient(const PolyBox& gt, const PolyBox& pd) {
  const auto& dirs = ray_directions();
  const auto gr = concentric_rects(gt);
  const auto pr = concentric_rects(pd);
  CrrsGrad out;
  for (int i = 0; i < kNumRects; ++i) {
    const RectGrad g = rect_eiou_grad(gr[i], pr[i]);
    // loss = 1 - EIoU, so negate
    out.d_cx -= g.d_cx;
    out.d_cy -= g.d_cy;
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
  }
  return out;
}

// Same but for the vertex-shared construction, whose rect centers move
// with the radii.
inline CrrsGrad vertex_shared_gradient(const PolyBox& gt, const PolyBox& pd) {
  const auto& dirs = ray_directions();
  const auto gr = vertex_shared_rects(gt);
  const auto pr = vertex_shared_rects(pd);
  CrrsGrad out;
  for (int i = 0; i < kNumRects; ++i) {
    const RectGrad g = rect_eiou_grad(gr[i], pr[i]);
    out.d_cx -= g.d_cx;
    out.d_cy -= g.d_cy;
    if (i == 0) {
      out.d_radii[0] -= 0.5 * (g.d_cx + g.d_half_w);
      out.d_radii[6] -= 0.5 * (g.d_cy + g.d_half_h);
    } else if (i == 1) {
      out.d_radii[12] -= 0.5 * (-g.d_cx + g.d_half_w);
      out.d_radii[18] -= 0.5 * (-g.d_cy + g.d_half_h);
    } else {
      const int k = rect_point_index(i);
      out.d_radii[k] -= 0.5 * (g.d_cx * dirs[k].x + g.d_cy * dirs[k].y +
                               g.d_half_w * std::abs(dirs[k].x) +
                               g.d_half_h * std::abs(dirs[k].y));
    }
  }
  return out;
}

namespace detail {

inline double circle_intersection_area(double d, double r1, double r2) {
  if (d >= r1 + r2) return 0.0;
  const double rmin = std::min(r1, r2);
  if (d <= std::abs(r1 - r2)) return M_PI * rmin * rmin;
  const double a1 = std::acos(std::clamp((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1), -1.0, 1.0));
  const double a2 = std::acos(std::clamp((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2), -1.0, 1.0));
  const double s = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2);
  return r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * std::sqrt(std::max(s, 0.0));
}

struct CircleGIoU {
  double giou = 1.0;
  double d_dist = 0.0;  // d(giou)/d(center distance)
  double d_r2 = 0.0;    // d(giou)/d(pd radius)
};

// GIoU of two circles with smallest-enclosing-circle penalty, plus its
// derivatives w.r.t. the center distance and the pd radius.
inline CircleGIoU circle_giou(double d, double r1, double r2) {
  CircleGIoU out;
  if (d == 0.0 && r1 == 0.0 && r2 == 0.0) return out;  // coincident points

  const double a1 = M_PI * r1 * r1;
  const double a2 = M_PI * r2 * r2;
  double inter, di_dd, di_dr2;
  if (d >= r1 + r2) {
    inter = di_dd = di_dr2 = 0.0;
  } else if (d <= std::abs(r1 - r2)) {
    const double rmin = std::min(r1, r2);
    inter = M_PI * rmin * rmin;
    di_dd = 0.0;
    di_dr2 = (r2 < r1) ? 2.0 * M_PI * r2 : 0.0;
  } else {
    inter = circle_intersection_area(d, r1, r2);
    const double x2 = (d * d + r2 * r2 - r1 * r1) / (2.0 * d);
    const double half_chord = std::sqrt(std::max(r2 * r2 - x2 * x2, 0.0));
    di_dd = -2.0 * half_chord;  // lens shrinks by the chord as centers separate
    const double theta2 =
        std::acos(std::clamp((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2), -1.0, 1.0));
    di_dr2 = 2.0 * r2 * theta2;  // arc of circle 2 inside circle 1
  }
  const double uni = std::max(a1 + a2 - inter, kDenomEps);
  const double du_dd = -di_dd;
  const double du_dr2 = 2.0 * M_PI * r2 - di_dr2;

  double enc_r, denc_dd, denc_dr2;
  if (d <= std::abs(r1 - r2)) {
    enc_r = std::max(r1, r2);
    denc_dd = 0.0;
    denc_dr2 = (r2 > r1) ? 1.0 : 0.0;
  } else {
    enc_r = 0.5 * (d + r1 + r2);
    denc_dd = 0.5;
    denc_dr2 = 0.5;
  }
  const double enc = std::max(M_PI * enc_r * enc_r, kDenomEps);
  const double denc_area_dd = 2.0 * M_PI * enc_r * denc_dd;
  const double denc_area_dr2 = 2.0 * M_PI * enc_r * denc_dr2;

  // giou = inter/uni - 1 + uni/enc
  out.giou = inter / uni - (enc - uni) / enc;
  out.d_dist = (di_dd * uni - inter * du_dd) / (uni * uni) +
               (du_dd * enc - uni * denc_area_dd) / (enc * enc);
  out.d_r2 = (di_dr2 * uni - inter * du_dr2) / (uni * uni) +
             (du_dr2 * enc - uni * denc_area_dr2) / (enc * enc);
  return out;
}

}  // namespace detail

// Baseline: 24 circles centered on the respective centroids, GIoU loss per
// radius pair.
inline std::array<double, PolyBox::kNumPoints> circle_giou_loss(const PolyBox& gt,
                                                                const PolyBox& pd) {
  const double d = std::hypot(pd.cx - gt.cx, pd.cy - gt.cy);
  std::array<double, PolyBox::kNumPoints> losses{};
  for (int k = 0; k < PolyBox::kNumPoints; ++k) {
    losses[k] = 1.0 - detail::circle_giou(d, gt.radii[k], pd.radii[k]).giou;
  }
  return losses;
}

// Gradient of the summed circle GIoU losses over the 26 pd parameters.
inline CrrsGrad circle_giou_gradient(const PolyBox& gt, const PolyBox& pd) {
  const double dx = pd.cx - gt.cx;
  const double dy = pd.cy - gt.cy;
  const double d = std::hypot(dx, dy);
  CrrsGrad out;
  for (int k = 0; k < PolyBox::kNumPoints; ++k) {
    const auto g = detail::circle_giou(d, gt.radii[k], pd.radii[k]);
    out.d_radii[k] = -g.d_r2;
    if (d > 0.0) {
      out.d_cx -= g.d_dist * dx / d;
      out.d_cy -= g.d_dist * dy / d;
    }
  }
  return out;
}

}  // namespace polybox
