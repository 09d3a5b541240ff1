#include "cdavsr/mvgda.hpp"

#include <Eigen/Core>

#include "cdavsr/detail/bilinear_tap.hpp"
#include "cdavsr/mac_counter.hpp"

namespace cdavsr::mvgda {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

struct DcnGeometry {
  int N, C, H, W, G, Cout;
  std::size_t hw() const { return static_cast<std::size_t>(H) * W; }
  int K() const { return C * kTaps; }
  int group_of(int c) const { return c * G / C; }
};

template <typename T>
T lerp2(const T* img, int W, const detail::Tap& t) {
  const T fx = static_cast<T>(t.fx), fy = static_cast<T>(t.fy);
  const T top = (T(1) - fx) * img[t.y0 * W + t.x0] + fx * img[t.y0 * W + t.x1];
  const T bot = (T(1) - fx) * img[t.y1 * W + t.x0] + fx * img[t.y1 * W + t.x1];
  return (T(1) - fy) * top + fy * bot;
}

template <typename T>
detail::Tap tap_at(const DcnGeometry& g, const T* base, const T* delta, int grp, int k,
                   std::size_t p) {
  const std::size_t hw = g.hw();
  const int y = static_cast<int>(p / g.W), x = static_cast<int>(p % g.W);
  const T px = static_cast<T>(x + (k % 3) - 1) + base[p] + delta[(2 * (grp * kTaps + k)) * hw + p];
  const T py = static_cast<T>(y + (k / 3) - 1) + base[hw + p] +
               delta[(2 * (grp * kTaps + k) + 1) * hw + p];
  return detail::make_tap(px, py, g.H, g.W);
}

// Modulated columns for one batch element: col[(c*9+k), p] = m * sample.
template <typename T>
void deform_columns(const DcnGeometry& g, const T* x, const T* base, const T* delta,
                    const T* mask, T* col) {
  const std::size_t hw = g.hw();
  for (int grp = 0; grp < g.G; ++grp) {
    const int c0 = grp * g.C / g.G, c1 = (grp + 1) * g.C / g.G;
    for (int k = 0; k < kTaps; ++k) {
      const T* mk = mask + static_cast<std::size_t>(grp * kTaps + k) * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        const detail::Tap t = tap_at(g, base, delta, grp, k, p);
        for (int c = c0; c < c1; ++c)
          col[static_cast<std::size_t>(c * kTaps + k) * hw + p] =
              mk[p] * lerp2(x + static_cast<std::size_t>(c) * hw, g.W, t);
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> warp(const Var<T>& features, const Var<T>& dense_mv) {
  const Shape fs = features.shape();
  require(dense_mv.shape() == Shape{fs.n, 2, fs.h, fs.w},
          "warp: motion field " + dense_mv.shape().str() + " does not match features " +
              fs.str());
  const Var<T> grid(ops::pixel_grid<T>(fs.n, fs.h, fs.w));
  return ops::bilinear_sample(features, ops::add(grid, dense_mv));
}

template <typename T>
Var<T> modulated_deform_conv(const Var<T>& features, const Var<T>& base_offset,
                             const Var<T>& delta, const Var<T>& mask, const Var<T>& weight,
                             const Var<T>& bias, int groups) {
  const Shape xs = features.shape();
  const Shape ws = weight.shape();
  require(groups >= 1 && xs.c % groups == 0,
          "modulated_deform_conv: channels " + std::to_string(xs.c) + " not divisible by " +
              std::to_string(groups) + " groups");
  require(ws.c == xs.c && ws.h == 3 && ws.w == 3,
          "modulated_deform_conv: weight " + ws.str() + " does not match features " + xs.str());
  require(base_offset.shape() == Shape{xs.n, 2, xs.h, xs.w},
          "modulated_deform_conv: base offset " + base_offset.shape().str() + " vs " + xs.str());
  require(delta.shape() == Shape{xs.n, 2 * kTaps * groups, xs.h, xs.w},
          "modulated_deform_conv: offsets " + delta.shape().str() + " vs " + xs.str());
  require(mask.shape() == Shape{xs.n, kTaps * groups, xs.h, xs.w},
          "modulated_deform_conv: mask " + mask.shape().str() + " vs " + xs.str());
  if (bias.defined())
    require(bias.shape() == Shape{1, ws.n, 1, 1}, "modulated_deform_conv: bad bias shape");

  const DcnGeometry geo{xs.n, xs.c, xs.h, xs.w, groups, ws.n};
  const std::size_t hw = geo.hw();
  const int K = geo.K();
  Tensor<T> out(Shape{xs.n, ws.n, xs.h, xs.w});
  std::vector<T> col(static_cast<std::size_t>(K) * hw);
  CMapR<T> wm(weight.value().ptr(), ws.n, K);
  for (int n = 0; n < xs.n; ++n) {
    deform_columns(geo, features.value().plane(n, 0), base_offset.value().plane(n, 0),
                   delta.value().plane(n, 0), mask.value().plane(n, 0), col.data());
    MapR<T> om(out.plane(n, 0), ws.n, static_cast<Eigen::Index>(hw));
    om.noalias() = wm * CMapR<T>(col.data(), K, static_cast<Eigen::Index>(hw));
    if (bias.defined())
      for (int c = 0; c < ws.n; ++c) om.row(c).array() += bias.value()[c];
  }
  MacCounter::add(static_cast<std::uint64_t>(xs.n) * K * hw * (ws.n + 8));

  auto xn = features.node(), on = base_offset.node(), dn = delta.node(), mn = mask.node();
  auto wn = weight.node(), bn = bias.node();
  return make_result<T>(
      std::move(out), {&features, &base_offset, &delta, &mask, &weight, &bias},
      [=](const Tensor<T>& g) {
        const bool need_x = xn->requires_grad, need_o = on->requires_grad;
        const bool need_d = dn->requires_grad, need_m = mn->requires_grad;
        const bool need_w = wn->requires_grad, need_b = bn && bn->requires_grad;
        const std::size_t hw = geo.hw();
        const int K = geo.K();
        Tensor<T> gx = need_x ? Tensor<T>(xn->value.shape()) : Tensor<T>();
        Tensor<T> go = need_o ? Tensor<T>(on->value.shape()) : Tensor<T>();
        Tensor<T> gd = need_d ? Tensor<T>(dn->value.shape()) : Tensor<T>();
        Tensor<T> gm = need_m ? Tensor<T>(mn->value.shape()) : Tensor<T>();
        Tensor<T> gw = need_w ? Tensor<T>(wn->value.shape()) : Tensor<T>();
        std::vector<T> col(static_cast<std::size_t>(K) * hw);
        CMapR<T> wm(wn->value.ptr(), geo.Cout, K);
        for (int n = 0; n < geo.N; ++n) {
          const T* x = xn->value.plane(n, 0);
          const T* base = on->value.plane(n, 0);
          const T* dl = dn->value.plane(n, 0);
          const T* mk = mn->value.plane(n, 0);
          CMapR<T> gout(g.plane(n, 0), geo.Cout, static_cast<Eigen::Index>(hw));
          if (need_w) {
            deform_columns(geo, x, base, dl, mk, col.data());
            MapR<T>(gw.ptr(), geo.Cout, K).noalias() +=
                gout * CMapR<T>(col.data(), K, static_cast<Eigen::Index>(hw)).transpose();
          }
          if (!(need_x || need_o || need_d || need_m)) continue;
          MapR<T>(col.data(), K, static_cast<Eigen::Index>(hw)).noalias() = wm.transpose() * gout;
          for (int grp = 0; grp < geo.G; ++grp) {
            const int c0 = grp * geo.C / geo.G, c1 = (grp + 1) * geo.C / geo.G;
            for (int k = 0; k < kTaps; ++k) {
              const std::size_t mch = static_cast<std::size_t>(grp * kTaps + k);
              for (std::size_t p = 0; p < hw; ++p) {
                const detail::Tap t = tap_at(geo, base, dl, grp, k, p);
                const T fx = static_cast<T>(t.fx), fy = static_cast<T>(t.fy);
                const T m = mk[mch * hw + p];
                T gmask = T(0), dpx = T(0), dpy = T(0);
                for (int c = c0; c < c1; ++c) {
                  const T gc = col[static_cast<std::size_t>(c * kTaps + k) * hw + p];
                  const T* img = x + static_cast<std::size_t>(c) * hw;
                  const T v00 = img[t.y0 * geo.W + t.x0], v01 = img[t.y0 * geo.W + t.x1];
                  const T v10 = img[t.y1 * geo.W + t.x0], v11 = img[t.y1 * geo.W + t.x1];
                  if (need_m) {
                    const T top = (T(1) - fx) * v00 + fx * v01;
                    const T bot = (T(1) - fx) * v10 + fx * v11;
                    gmask += gc * ((T(1) - fy) * top + fy * bot);
                  }
                  const T gv = gc * m;
                  if (need_x) {
                    T* gi = gx.plane(n, c);
                    gi[t.y0 * geo.W + t.x0] += gv * (T(1) - fx) * (T(1) - fy);
                    gi[t.y0 * geo.W + t.x1] += gv * fx * (T(1) - fy);
                    gi[t.y1 * geo.W + t.x0] += gv * (T(1) - fx) * fy;
                    gi[t.y1 * geo.W + t.x1] += gv * fx * fy;
                  }
                  dpx += gv * ((T(1) - fy) * (v01 - v00) + fy * (v11 - v10));
                  dpy += gv * ((T(1) - fx) * (v10 - v00) + fx * (v11 - v01));
                }
                if (!t.inside_x) dpx = T(0);
                if (!t.inside_y) dpy = T(0);
                if (need_m) gm.plane(n, 0)[mch * hw + p] += gmask;
                if (need_d) {
                  gd.plane(n, 0)[2 * mch * hw + p] += dpx;
                  gd.plane(n, 0)[(2 * mch + 1) * hw + p] += dpy;
                }
                if (need_o) {
                  go.plane(n, 0)[p] += dpx;
                  go.plane(n, 0)[hw + p] += dpy;
                }
              }
            }
          }
        }
        if (need_x) xn->accumulate(std::move(gx));
        if (need_o) on->accumulate(std::move(go));
        if (need_d) dn->accumulate(std::move(gd));
        if (need_m) mn->accumulate(std::move(gm));
        if (need_w) wn->accumulate(std::move(gw));
        if (need_b) {
          Tensor<T> gb(Shape{1, geo.Cout, 1, 1});
          for (int n = 0; n < geo.N; ++n)
            for (int c = 0; c < geo.Cout; ++c) {
              const T* gp = g.plane(n, c);
              T s = T(0);
              for (std::size_t i = 0; i < hw; ++i) s += gp[i];
              gb[c] += s;
            }
          bn->accumulate(std::move(gb));
        }
      });
}

template <typename T>
void add_params(ParamSet<T>& ps, const ModelConfig& cfg, Rng& rng) {
  if (!cfg.uses_dcn()) return;
  const int C = cfg.channels, G = cfg.groups;
  add_conv(ps, "mvgda.trunk.conv1", 3 * C, C, 3, Init::kaiming, rng);
  add_conv(ps, "mvgda.trunk.conv2", C, C, 3, Init::kaiming, rng);
  add_conv(ps, "mvgda.head_o", C, 2 * kTaps * G, 3, Init::zero, rng);
  add_conv(ps, "mvgda.head_m", C, kTaps * G, 3, Init::zero, rng);
  add_conv(ps, "mvgda.dcn_L", C, C, 3, Init::kaiming, rng);
  add_conv(ps, "mvgda.dcn_H", C, C, 3, Init::kaiming, rng);
}

template <typename T>
AlignmentFields<T> predict_offsets_mask(const Var<T>& h_cur, const Var<T>& warped_l,
                                        const Var<T>& warped_h, const BoundParams<T>& p,
                                        const ModelConfig& cfg) {
  const int C = cfg.channels;
  for (const Var<T>* v : {&h_cur, &warped_l, &warped_h})
    require(v->shape().c == C && v->shape() == h_cur.shape(),
            "predict_offsets_mask: expected three " + std::to_string(C) +
                "-channel features of equal shape, got " + v->shape().str());
  using ops::Activation;
  Var<T> t = ops::concat_channels<T>({h_cur, warped_l, warped_h});
  t = ops::activate(apply_conv(p, "mvgda.trunk.conv1", t), Activation::leaky_relu);
  t = ops::activate(apply_conv(p, "mvgda.trunk.conv2", t), Activation::leaky_relu);
  AlignmentFields<T> f;
  f.delta = ops::scale(ops::activate(apply_conv(p, "mvgda.head_o", t), Activation::tanh),
                       static_cast<T>(cfg.offset_limit));
  f.mask = ops::activate(apply_conv(p, "mvgda.head_m", t), Activation::sigmoid);
  return f;
}

template <typename T>
AlignedPair<T> align_dual(const Var<T>& prev_l, const Var<T>& prev_h, const Var<T>& h_cur,
                          const Var<T>& dense_mv, const BoundParams<T>& p,
                          const ModelConfig& cfg) {
  require(prev_l.defined() && prev_h.defined(), "align_dual: no previous feature state");
  const Shape s = h_cur.shape();
  require(prev_l.shape() == s && prev_h.shape() == s,
          "align_dual: state " + prev_l.shape().str() + " does not match features " + s.str());
  if (!cfg.uses_dcn()) return {warp(prev_l, dense_mv), warp(prev_h, dense_mv)};

  Var<T> base, wl, wh;
  if (cfg.variant == Variant::onlydcn) {
    base = Var<T>(Tensor<T>(Shape{s.n, 2, s.h, s.w}));
    wl = prev_l;
    wh = prev_h;
  } else {
    base = dense_mv;
    wl = warp(prev_l, dense_mv);
    wh = warp(prev_h, dense_mv);
  }
  const AlignmentFields<T> f = predict_offsets_mask(h_cur, wl, wh, p, cfg);
  return {modulated_deform_conv(prev_l, base, f.delta, f.mask, p.at("mvgda.dcn_L.weight"),
                                p.at("mvgda.dcn_L.bias"), cfg.groups),
          modulated_deform_conv(prev_h, base, f.delta, f.mask, p.at("mvgda.dcn_H.weight"),
                                p.at("mvgda.dcn_H.bias"), cfg.groups)};
}

#define CDAVSR_INSTANTIATE_MVGDA(T)                                                          \
  template Var<T> warp(const Var<T>&, const Var<T>&);                                        \
  template Var<T> modulated_deform_conv(const Var<T>&, const Var<T>&, const Var<T>&,         \
                                        const Var<T>&, const Var<T>&, const Var<T>&, int);   \
  template void add_params(ParamSet<T>&, const ModelConfig&, Rng&);                          \
  template AlignmentFields<T> predict_offsets_mask(const Var<T>&, const Var<T>&,             \
                                                   const Var<T>&, const BoundParams<T>&,     \
                                                   const ModelConfig&);                      \
  template AlignedPair<T> align_dual(const Var<T>&, const Var<T>&, const Var<T>&,            \
                                     const Var<T>&, const BoundParams<T>&, const ModelConfig&);

CDAVSR_INSTANTIATE_MVGDA(float)
CDAVSR_INSTANTIATE_MVGDA(double)

}  // namespace cdavsr::mvgda
