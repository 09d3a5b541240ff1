#include "cdavsr/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "cdavsr/detail/bilinear_tap.hpp"
#include "cdavsr/mac_counter.hpp"

namespace cdavsr::ops {

namespace {

using detail::Tap;
using detail::make_tap;

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

template <typename T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
            T* col) {
  const std::size_t hw = static_cast<std::size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    const T* src = x + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + (static_cast<std::size_t>(c * k + ky) * k + kx) * hw;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* row = dst + static_cast<std::size_t>(oy) * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(row, row + Wo, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            row[ox] = (ix >= 0 && ix < W) ? srow[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
            T* gx) {
  const std::size_t hw = static_cast<std::size_t>(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    T* dst = gx + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + (static_cast<std::size_t>(c * k + ky) * k + kx) * hw;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          const T* row = src + static_cast<std::size_t>(oy) * Wo;
          T* drow = dst + static_cast<std::size_t>(iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) drow[ix] += row[ox];
          }
        }
      }
    }
  }
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  require(a == b, std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride,
              int padding) {
  const Shape xs = input.shape();
  const Shape ws = weight.shape();
  require(ws.c == xs.c, "conv2d: weight " + ws.str() + " does not match input " + xs.str());
  require(ws.h == ws.w && ws.h % 2 == 1, "conv2d: kernel must be square and odd, got " + ws.str());
  require(stride >= 1 && padding >= 0, "conv2d: bad stride/padding");
  if (bias.defined())
    require(bias.shape() == Shape{1, ws.n, 1, 1},
            "conv2d: bias " + bias.shape().str() + " does not match weight " + ws.str());
  const int k = ws.h;
  const int Ho = (xs.h + 2 * padding - k) / stride + 1;
  const int Wo = (xs.w + 2 * padding - k) / stride + 1;
  require(Ho >= 1 && Wo >= 1, "conv2d: empty output for input " + xs.str());
  const int Cout = ws.n, Cin = xs.c;
  const int K = Cin * k * k;
  const std::size_t hw = static_cast<std::size_t>(Ho) * Wo;

  Tensor<T> out(Shape{xs.n, Cout, Ho, Wo});
  std::vector<T> col(static_cast<std::size_t>(K) * hw);
  CMapR<T> wm(weight.value().ptr(), Cout, K);
  for (int n = 0; n < xs.n; ++n) {
    im2col(input.value().plane(n, 0), Cin, xs.h, xs.w, k, stride, padding, Ho, Wo, col.data());
    MapR<T> om(out.plane(n, 0), Cout, static_cast<Eigen::Index>(hw));
    om.noalias() = wm * CMapR<T>(col.data(), K, static_cast<Eigen::Index>(hw));
    if (bias.defined()) {
      const T* b = bias.value().ptr();
      for (int c = 0; c < Cout; ++c) om.row(c).array() += b[c];
    }
  }
  MacCounter::add(static_cast<std::uint64_t>(xs.n) * Cout * K * hw);

  auto xn = input.node();
  auto wn = weight.node();
  auto bn = bias.node();
  return make_result<T>(
      std::move(out), {&input, &weight, &bias},
      [xn, wn, bn, xs, ws, stride, padding, k, Ho, Wo, K, hw](const Tensor<T>& g) {
        const int Cout = ws.n, Cin = xs.c;
        const bool need_x = xn->requires_grad;
        const bool need_w = wn->requires_grad;
        const bool need_b = bn && bn->requires_grad;
        std::vector<T> col(static_cast<std::size_t>(K) * hw);
        Tensor<T> gw = need_w ? Tensor<T>(ws) : Tensor<T>();
        Tensor<T> gx = need_x ? Tensor<T>(xs) : Tensor<T>();
        CMapR<T> wm(wn->value.ptr(), Cout, K);
        for (int n = 0; n < xs.n; ++n) {
          CMapR<T> gm(g.plane(n, 0), Cout, static_cast<Eigen::Index>(hw));
          if (need_w) {
            im2col(xn->value.plane(n, 0), Cin, xs.h, xs.w, k, stride, padding, Ho, Wo,
                   col.data());
            MapR<T>(gw.ptr(), Cout, K).noalias() +=
                gm * CMapR<T>(col.data(), K, static_cast<Eigen::Index>(hw)).transpose();
          }
          if (need_x) {
            MapR<T> cm(col.data(), K, static_cast<Eigen::Index>(hw));
            cm.noalias() = wm.transpose() * gm;
            col2im(col.data(), Cin, xs.h, xs.w, k, stride, padding, Ho, Wo, gx.plane(n, 0));
          }
        }
        if (need_w) wn->accumulate(std::move(gw));
        if (need_x) xn->accumulate(std::move(gx));
        if (need_b) {
          Tensor<T> gb(Shape{1, Cout, 1, 1});
          for (int n = 0; n < xs.n; ++n)
            for (int c = 0; c < Cout; ++c) {
              const T* p = g.plane(n, c);
              T s = T(0);
              for (std::size_t i = 0; i < hw; ++i) s += p[i];
              gb[c] += s;
            }
          bn->accumulate(std::move(gb));
        }
      });
}

template <typename T>
Var<T> bilinear_sample(const Var<T>& input, const Var<T>& coords) {
  const Shape xs = input.shape();
  const Shape cs = coords.shape();
  require(cs.c == 2 && cs.n == xs.n,
          "bilinear_sample: coords " + cs.str() + " incompatible with input " + xs.str());
  const int H = xs.h, W = xs.w, C = xs.c;
  const std::size_t ohw = cs.plane();
  Tensor<T> out(Shape{xs.n, C, cs.h, cs.w});
  for (int n = 0; n < xs.n; ++n) {
    const T* px = coords.value().plane(n, 0);
    const T* py = coords.value().plane(n, 1);
    for (std::size_t p = 0; p < ohw; ++p) {
      const Tap t = make_tap(px[p], py[p], H, W);
      const T fx = static_cast<T>(t.fx), fy = static_cast<T>(t.fy);
      for (int c = 0; c < C; ++c) {
        const T* img = input.value().plane(n, c);
        const T top = (T(1) - fx) * img[t.y0 * W + t.x0] + fx * img[t.y0 * W + t.x1];
        const T bot = (T(1) - fx) * img[t.y1 * W + t.x0] + fx * img[t.y1 * W + t.x1];
        out.plane(n, c)[p] = (T(1) - fy) * top + fy * bot;
      }
    }
  }
  MacCounter::add(static_cast<std::uint64_t>(xs.n) * C * ohw * 8);

  auto xn = input.node();
  auto cn = coords.node();
  return make_result<T>(std::move(out), {&input, &coords}, [xn, cn, xs, cs](const Tensor<T>& g) {
    const int H = xs.h, W = xs.w, C = xs.c;
    const std::size_t ohw = cs.plane();
    const bool need_x = xn->requires_grad;
    const bool need_c = cn->requires_grad;
    Tensor<T> gx = need_x ? Tensor<T>(xs) : Tensor<T>();
    Tensor<T> gc = need_c ? Tensor<T>(cs) : Tensor<T>();
    for (int n = 0; n < xs.n; ++n) {
      const T* px = cn->value.plane(n, 0);
      const T* py = cn->value.plane(n, 1);
      for (std::size_t p = 0; p < ohw; ++p) {
        const Tap t = make_tap(px[p], py[p], H, W);
        const T fx = static_cast<T>(t.fx), fy = static_cast<T>(t.fy);
        T dx = T(0), dy = T(0);
        for (int c = 0; c < C; ++c) {
          const T go = g.plane(n, c)[p];
          if (need_x) {
            T* gi = gx.plane(n, c);
            gi[t.y0 * W + t.x0] += go * (T(1) - fx) * (T(1) - fy);
            gi[t.y0 * W + t.x1] += go * fx * (T(1) - fy);
            gi[t.y1 * W + t.x0] += go * (T(1) - fx) * fy;
            gi[t.y1 * W + t.x1] += go * fx * fy;
          }
          if (need_c) {
            const T* img = xn->value.plane(n, c);
            const T v00 = img[t.y0 * W + t.x0], v01 = img[t.y0 * W + t.x1];
            const T v10 = img[t.y1 * W + t.x0], v11 = img[t.y1 * W + t.x1];
            dx += go * ((T(1) - fy) * (v01 - v00) + fy * (v11 - v10));
            dy += go * ((T(1) - fx) * (v10 - v00) + fx * (v11 - v01));
          }
        }
        if (need_c) {
          gc.plane(n, 0)[p] = t.inside_x ? dx : T(0);
          gc.plane(n, 1)[p] = t.inside_y ? dy : T(0);
        }
      }
    }
    if (need_x) xn->accumulate(std::move(gx));
    if (need_c) cn->accumulate(std::move(gc));
  });
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& input, int r) {
  const Shape xs = input.shape();
  require(r >= 1 && xs.c % (r * r) == 0,
          "pixel_shuffle: channels of " + xs.str() + " not divisible by r^2, r=" +
              std::to_string(r));
  const int C = xs.c / (r * r);
  const Shape os{xs.n, C, xs.h * r, xs.w * r};
  Tensor<T> out(os);
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
          const T* src = input.value().plane(n, c * r * r + i * r + j);
          T* dst = out.plane(n, c);
          for (int y = 0; y < xs.h; ++y)
            for (int x = 0; x < xs.w; ++x) dst[(y * r + i) * os.w + x * r + j] = src[y * xs.w + x];
        }
  auto xn = input.node();
  return make_result<T>(std::move(out), {&input}, [xn, xs, os, r, C](const Tensor<T>& g) {
    Tensor<T> gx(xs);
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < r; ++j) {
            T* dst = gx.plane(n, c * r * r + i * r + j);
            const T* src = g.plane(n, c);
            for (int y = 0; y < xs.h; ++y)
              for (int x = 0; x < xs.w; ++x)
                dst[y * xs.w + x] = src[(y * r + i) * os.w + x * r + j];
          }
    xn->accumulate(std::move(gx));
  });
}

template <typename T>
Var<T> activate(const Var<T>& input, Activation f) {
  const Tensor<T>& x = input.value();
  Tensor<T> out(x.shape());
  const T slope = static_cast<T>(kLeakySlope);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    switch (f) {
      case Activation::sigmoid: out[i] = T(1) / (T(1) + std::exp(-v)); break;
      case Activation::tanh: out[i] = std::tanh(v); break;
      case Activation::relu: out[i] = v > T(0) ? v : T(0); break;
      case Activation::leaky_relu: out[i] = v > T(0) ? v : slope * v; break;
    }
  }
  auto xn = input.node();
  // sigmoid/tanh derivatives are cheapest from the output.
  Tensor<T> saved = (f == Activation::sigmoid || f == Activation::tanh) ? out : Tensor<T>();
  return make_result<T>(std::move(out), {&input},
                        [xn, f, slope, saved = std::move(saved)](const Tensor<T>& g) {
                          const Tensor<T>& x = xn->value;
                          Tensor<T> gx(x.shape());
                          for (std::size_t i = 0; i < x.size(); ++i) {
                            T d = T(1);
                            switch (f) {
                              case Activation::sigmoid: d = saved[i] * (T(1) - saved[i]); break;
                              case Activation::tanh: d = T(1) - saved[i] * saved[i]; break;
                              case Activation::relu: d = x[i] > T(0) ? T(1) : T(0); break;
                              case Activation::leaky_relu: d = x[i] > T(0) ? T(1) : slope; break;
                            }
                            gx[i] = g[i] * d;
                          }
                          xn->accumulate(std::move(gx));
                        });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_result<T>(std::move(out), {&a, &b}, [an, bn](const Tensor<T>& g) {
    if (an->requires_grad) an->accumulate(g);
    if (bn->requires_grad) bn->accumulate(g);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_result<T>(std::move(out), {&a, &b}, [an, bn](const Tensor<T>& g) {
    if (an->requires_grad) an->accumulate(g);
    if (bn->requires_grad) {
      Tensor<T> gb = g;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] = -gb[i];
      bn->accumulate(std::move(gb));
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_result<T>(std::move(out), {&a, &b}, [an, bn](const Tensor<T>& g) {
    if (an->requires_grad) {
      Tensor<T> ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= bn->value[i];
      an->accumulate(std::move(ga));
    }
    if (bn->requires_grad) {
      Tensor<T> gb = g;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= an->value[i];
      bn->accumulate(std::move(gb));
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  auto an = a.node();
  return make_result<T>(std::move(out), {&a}, [an, s](const Tensor<T>& g) {
    Tensor<T> ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= s;
    an->accumulate(std::move(ga));
  });
}

template <typename T>
Var<T> mul_spatial(const Var<T>& x, const Var<T>& gate) {
  const Shape xs = x.shape();
  const Shape gs = gate.shape();
  require(gs == Shape{xs.n, 1, xs.h, xs.w},
          "mul_spatial: gate " + gs.str() + " does not broadcast over " + xs.str());
  const std::size_t hw = xs.plane();
  Tensor<T> out(xs);
  for (int n = 0; n < xs.n; ++n) {
    const T* gp = gate.value().plane(n, 0);
    for (int c = 0; c < xs.c; ++c) {
      const T* src = x.value().plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] * gp[i];
    }
  }
  auto xn = x.node(), gn = gate.node();
  return make_result<T>(std::move(out), {&x, &gate}, [xn, gn, xs, hw](const Tensor<T>& g) {
    if (xn->requires_grad) {
      Tensor<T> gx(xs);
      for (int n = 0; n < xs.n; ++n) {
        const T* gp = gn->value.plane(n, 0);
        for (int c = 0; c < xs.c; ++c) {
          const T* go = g.plane(n, c);
          T* dst = gx.plane(n, c);
          for (std::size_t i = 0; i < hw; ++i) dst[i] = go[i] * gp[i];
        }
      }
      xn->accumulate(std::move(gx));
    }
    if (gn->requires_grad) {
      Tensor<T> gg(gn->value.shape());
      for (int n = 0; n < xs.n; ++n) {
        T* dst = gg.plane(n, 0);
        for (int c = 0; c < xs.c; ++c) {
          const T* go = g.plane(n, c);
          const T* xv = xn->value.plane(n, c);
          for (std::size_t i = 0; i < hw; ++i) dst[i] += go[i] * xv[i];
        }
      }
      gn->accumulate(std::move(gg));
    }
  });
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Shape first = parts[0].shape();
  int C = 0;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    require(s.n == first.n && s.h == first.h && s.w == first.w,
            "concat_channels: " + s.str() + " incompatible with " + first.str());
    C += s.c;
  }
  const Shape os{first.n, C, first.h, first.w};
  const std::size_t hw = os.plane();
  Tensor<T> out(os);
  for (int n = 0; n < os.n; ++n) {
    int c0 = 0;
    for (const auto& p : parts) {
      std::copy_n(p.value().plane(n, 0), p.shape().c * hw, out.plane(n, c0));
      c0 += p.shape().c;
    }
  }
  std::vector<std::shared_ptr<Node<T>>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  std::function<void(const Tensor<T>&)> back = [nodes, os, hw](const Tensor<T>& g) {
    int c0 = 0;
    for (const auto& nd : nodes) {
      const Shape s = nd->value.shape();
      if (nd->requires_grad) {
        Tensor<T> gp(s);
        for (int n = 0; n < os.n; ++n) std::copy_n(g.plane(n, c0), s.c * hw, gp.plane(n, 0));
        nd->accumulate(std::move(gp));
      }
      c0 += s.c;
    }
  };
  // make_result takes a fixed initializer list; pick any grad-carrying input
  // to supply the tape.
  const Var<T>* carrier = nullptr;
  for (const auto& p : parts) {
    if (p.requires_grad()) {
      require(carrier == nullptr || carrier->tape() == p.tape(),
              "concat_channels: inputs recorded on different tapes");
      carrier = &p;
    }
  }
  return make_result<T>(std::move(out), {carrier}, std::move(back));
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const Tensor<T>& v = x.value();
  T s = T(0);
  for (std::size_t i = 0; i < v.size(); ++i) s += v[i];
  Tensor<T> out(Shape{1, 1, 1, 1}, s / static_cast<T>(v.size()));
  auto xn = x.node();
  return make_result<T>(std::move(out), {&x}, [xn](const Tensor<T>& g) {
    xn->accumulate(Tensor<T>(xn->value.shape(), g[0] / static_cast<T>(xn->value.size())));
  });
}

template <typename T>
Var<T> charbonnier(const Var<T>& a, const Var<T>& b, T eps) {
  require_same(a.shape(), b.shape(), "charbonnier");
  const std::size_t n = a.value().size();
  const T e2 = eps * eps;
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T d = a.value()[i] - b.value()[i];
    s += std::sqrt(d * d + e2);
  }
  Tensor<T> out(Shape{1, 1, 1, 1}, s / static_cast<T>(n));
  auto an = a.node(), bn = b.node();
  return make_result<T>(std::move(out), {&a, &b}, [an, bn, e2, n](const Tensor<T>& g) {
    Tensor<T> ga(an->value.shape());
    const T k = g[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T d = an->value[i] - bn->value[i];
      ga[i] = k * d / std::sqrt(d * d + e2);
    }
    if (bn->requires_grad) {
      Tensor<T> gb = ga;
      for (std::size_t i = 0; i < n; ++i) gb[i] = -gb[i];
      bn->accumulate(std::move(gb));
    }
    if (an->requires_grad) an->accumulate(std::move(ga));
  });
}

template <typename T>
Tensor<T> pixel_grid(int n, int h, int w) {
  Tensor<T> g(Shape{n, 2, h, w});
  for (int b = 0; b < n; ++b)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        g.at(b, 0, y, x) = static_cast<T>(x);
        g.at(b, 1, y, x) = static_cast<T>(y);
      }
  return g;
}

template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, int factor) {
  require(factor >= 1, "upsample_bilinear: factor must be >= 1");
  const Shape xs = x.shape();
  const int Ho = xs.h * factor, Wo = xs.w * factor;
  Tensor<T> coords(Shape{xs.n, 2, Ho, Wo});
  const double inv = 1.0 / factor;
  for (int n = 0; n < xs.n; ++n)
    for (int y = 0; y < Ho; ++y)
      for (int xx = 0; xx < Wo; ++xx) {
        coords.at(n, 0, y, xx) = static_cast<T>((xx + 0.5) * inv - 0.5);
        coords.at(n, 1, y, xx) = static_cast<T>((y + 0.5) * inv - 0.5);
      }
  return bilinear_sample(x, Var<T>(std::move(coords)));
}

#define CDAVSR_INSTANTIATE_OPS(T)                                                          \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);           \
  template Var<T> bilinear_sample(const Var<T>&, const Var<T>&);                           \
  template Var<T> pixel_shuffle(const Var<T>&, int);                                       \
  template Var<T> activate(const Var<T>&, Activation);                                     \
  template Var<T> add(const Var<T>&, const Var<T>&);                                       \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                       \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                       \
  template Var<T> scale(const Var<T>&, T);                                                 \
  template Var<T> mul_spatial(const Var<T>&, const Var<T>&);                               \
  template Var<T> concat_channels(std::span<const Var<T>>);                                \
  template Var<T> mean(const Var<T>&);                                                     \
  template Var<T> charbonnier(const Var<T>&, const Var<T>&, T);                            \
  template Tensor<T> pixel_grid(int, int, int);                                            \
  template Var<T> upsample_bilinear(const Var<T>&, int);

CDAVSR_INSTANTIATE_OPS(float)
CDAVSR_INSTANTIATE_OPS(double)

}  // namespace cdavsr::ops
