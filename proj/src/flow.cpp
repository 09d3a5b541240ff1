#include "cdavsr/flow.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdavsr/mac_counter.hpp"
#include "cdavsr/toy_codec.hpp"

namespace cdavsr {

namespace {

constexpr std::uint64_t kSamplesPerPixel = 5;

int pyramid_levels(int w, int h, int levels) {
  int n = 1;
  while (n < levels && w >= 8 && h >= 8) {
    w = std::max(1, w / 2);
    h = std::max(1, h / 2);
    ++n;
  }
  return n;
}

struct Image {
  int w = 0, h = 0;
  std::vector<double> v;
  double at(int y, int x) const {
    return v[static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w + std::clamp(x, 0, w - 1)];
  }
  double sample(double y, double x) const {
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    const double top = (1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1);
    const double bot = (1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1);
    return (1 - fy) * top + fy * bot;
  }
};

Image halve(const Image& a) {
  Image b{std::max(1, a.w / 2), std::max(1, a.h / 2), {}};
  b.v.resize(static_cast<std::size_t>(b.w) * b.h);
  for (int y = 0; y < b.h; ++y)
    for (int x = 0; x < b.w; ++x)
      b.v[static_cast<std::size_t>(y) * b.w + x] =
          0.25 * (a.at(2 * y, 2 * x) + a.at(2 * y, 2 * x + 1) + a.at(2 * y + 1, 2 * x) +
                  a.at(2 * y + 1, 2 * x + 1));
  return b;
}

// Box sum; the window is truncated at the borders.
std::vector<double> box(const std::vector<double>& in, int w, int h, int r) {
  std::vector<double> tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -r; d <= r; ++d) {
        const int xx = x + d;
        if (xx >= 0 && xx < w) s += in[static_cast<std::size_t>(y) * w + xx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -r; d <= r; ++d) {
        const int yy = y + d;
        if (yy >= 0 && yy < h) s += tmp[static_cast<std::size_t>(yy) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = s;
    }
  return out;
}

void refine(const Image& cur, const Image& ref, std::vector<double>& u, std::vector<double>& v,
            const FlowOptions& o) {
  const int w = cur.w, h = cur.h;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<double> ixx(n), iyy(n), ixy(n), ixt(n), iyt(n);
  for (int it = 0; it < o.iterations; ++it) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const double sx = x + u[i], sy = y + v[i];
        const double gx = 0.5 * (ref.sample(sy, sx + 1) - ref.sample(sy, sx - 1));
        const double gy = 0.5 * (ref.sample(sy + 1, sx) - ref.sample(sy - 1, sx));
        const double gt = ref.sample(sy, sx) - cur.v[i];
        ixx[i] = gx * gx;
        iyy[i] = gy * gy;
        ixy[i] = gx * gy;
        ixt[i] = gx * gt;
        iyt[i] = gy * gt;
      }
    MacCounter::add(kSamplesPerPixel * 8 * n);
    const auto sxx = box(ixx, w, h, o.window), syy = box(iyy, w, h, o.window);
    const auto sxy = box(ixy, w, h, o.window), sxt = box(ixt, w, h, o.window);
    const auto syt = box(iyt, w, h, o.window);
    std::vector<double> du(n, 0.0), dv(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = sxx[i] + o.regularizer, d = syy[i] + o.regularizer, b = sxy[i];
      const double det = a * d - b * b;
      if (det <= 1e-12) continue;
      // Solve [a b; b d] [du dv] = -[sxt syt].
      du[i] = std::clamp(-(d * sxt[i] - b * syt[i]) / det, -1.0, 1.0);
      dv[i] = std::clamp(-(a * syt[i] - b * sxt[i]) / det, -1.0, 1.0);
    }
    // Per-pixel solves drift apart where the local structure tensor is poorly
    // conditioned; averaging the increments over the same window keeps the
    // iteration stable.
    const std::vector<double> ones(n, 1.0);
    const auto cnt = box(ones, w, h, o.window);
    du = box(du, w, h, o.window);
    dv = box(dv, w, h, o.window);
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = std::clamp(u[i] + du[i] / cnt[i], -o.max_step, o.max_step);
      v[i] = std::clamp(v[i] + dv[i] / cnt[i], -o.max_step, o.max_step);
    }
  }
}

}  // namespace

Tensor<float> lucas_kanade_flow(const Frame& cur, const Frame& ref, const FlowOptions& opts) {
  require(cur.same_dims(ref), "lucas_kanade_flow: frame dimensions differ");
  require(opts.levels >= 1 && opts.iterations >= 0 && opts.window >= 0,
          "lucas_kanade_flow: bad options");
  std::vector<Image> pc{{cur.width, cur.height, codec::luma(cur)}};
  std::vector<Image> pr{{ref.width, ref.height, codec::luma(ref)}};
  const int levels = pyramid_levels(cur.width, cur.height, opts.levels);
  for (int l = 1; l < levels; ++l) {
    pc.push_back(halve(pc.back()));
    pr.push_back(halve(pr.back()));
  }
  std::vector<double> u, v;
  for (int l = static_cast<int>(pc.size()) - 1; l >= 0; --l) {
    const Image& c = pc[l];
    const std::size_t n = static_cast<std::size_t>(c.w) * c.h;
    if (u.empty()) {
      u.assign(n, 0.0);
      v.assign(n, 0.0);
    } else {
      const Image& coarse = pc[l + 1];
      std::vector<double> nu(n), nv(n);
      for (int y = 0; y < c.h; ++y)
        for (int x = 0; x < c.w; ++x) {
          const int cy = std::min(y / 2, coarse.h - 1), cx = std::min(x / 2, coarse.w - 1);
          const std::size_t ci = static_cast<std::size_t>(cy) * coarse.w + cx;
          nu[static_cast<std::size_t>(y) * c.w + x] = 2.0 * u[ci];
          nv[static_cast<std::size_t>(y) * c.w + x] = 2.0 * v[ci];
        }
      u = std::move(nu);
      v = std::move(nv);
    }
    refine(c, pr[l], u, v, opts);
  }
  Tensor<float> flow(Shape{1, 2, cur.height, cur.width});
  const std::size_t n = static_cast<std::size_t>(cur.width) * cur.height;
  for (std::size_t i = 0; i < n; ++i) {
    flow[i] = static_cast<float>(u[i]);
    flow[n + i] = static_cast<float>(v[i]);
  }
  return flow;
}

std::uint64_t lucas_kanade_macs(int width, int height, const FlowOptions& opts) {
  const int levels = pyramid_levels(width, height, opts.levels);
  std::uint64_t total = 0;
  for (int l = 0; l < levels; ++l) {
    total += static_cast<std::uint64_t>(opts.iterations) * kSamplesPerPixel * 8 * width * height;
    width = std::max(1, width / 2);
    height = std::max(1, height / 2);
  }
  return total;
}

}  // namespace cdavsr
