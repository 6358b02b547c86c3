/**
 * Copyright 2026 The ihd Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "error.hpp"

namespace ihd {

std::string ShapeToString(const Shape &shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t NumElements(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor Tensor::Zeros(Shape shape, bool requires_grad) {
  return Full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::Full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = NumElements(shape);
  return FromData(std::move(shape), std::vector<double>(n, value),
                  requires_grad);
}

Tensor Tensor::FromData(Shape shape, std::vector<double> data,
                        bool requires_grad) {
  for (std::size_t d : shape)
    IHD_CHECK(d > 0, ShapeError, "tensor dims must be positive, got ",
              ShapeToString(shape));
  IHD_CHECK(NumElements(shape) == data.size(), ShapeError, "shape ",
            ShapeToString(shape), " holds ", NumElements(shape),
            " values but ", data.size(), " were given");
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::Scalar(double value, bool requires_grad) {
  return FromData({1}, {value}, requires_grad);
}

double Tensor::item() const {
  IHD_CHECK(size() == 1, ShapeError, "item() on non-scalar tensor of shape ",
            ShapeToString(shape()));
  return node_->data[0];
}

Tensor Tensor::Detach(bool requires_grad) const {
  return FromData(node_->shape, node_->data, requires_grad);
}

void Tape::Record(std::vector<Tensor> inputs, const Tensor &output,
                  std::function<void()> backward) {
  IHD_CHECK(!consumed_, RuntimeError, "cannot record onto a consumed tape");
  entries_.push_back({std::move(inputs), output, std::move(backward)});
}

std::vector<double> &AccumulateGrad(const Tensor &t) {
  auto *node = t.node();
  if (node->grad.size() != node->data.size())
    node->grad.assign(node->data.size(), 0.0);
  return node->grad;
}

Gradients Backward(Tape &tape, const Tensor &loss,
                   std::span<const Tensor> params) {
  IHD_CHECK(!tape.consumed_, RuntimeError,
            "backward called twice on the same tape; re-record the forward "
            "pass first");
  IHD_CHECK(loss.defined() && loss.size() == 1, RuntimeError,
            "backward needs a scalar loss, got shape ",
            loss.defined() ? ShapeToString(loss.shape()) : "<undefined>");
  IHD_CHECK(loss.requires_grad(), RuntimeError,
            "loss was not produced through the tape");

  for (auto &e : tape.entries_) {
    e.output.node()->grad.clear();
    for (auto &in : e.inputs) in.node()->grad.clear();
  }
  for (const auto &p : params) p.node()->grad.clear();

  AccumulateGrad(loss)[0] = 1.0;
  for (auto it = tape.entries_.rbegin(); it != tape.entries_.rend(); ++it) {
    if (it->output.node()->grad.empty()) continue;
    it->backward();
  }
  tape.consumed_ = true;

  Gradients out;
  out.reserve(params.size());
  for (const auto &p : params) {
    if (p.node()->grad.empty())
      out.emplace_back(p.size(), 0.0);
    else
      out.push_back(p.node()->grad);
  }
  return out;
}

namespace {
thread_local bool g_no_grad = false;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }

Tensor MakeResult(Shape shape, std::vector<double> data,
                  std::initializer_list<const Tensor *> inputs) {
  if (g_no_grad) return Tensor::FromData(std::move(shape), std::move(data));
  bool rg = false;
  for (const Tensor *t : inputs) rg = rg || (t->defined() && t->requires_grad());
  return Tensor::FromData(std::move(shape), std::move(data), rg);
}

namespace {

void RequireSameShape(const char *op, const Tensor &a, const Tensor &b) {
  IHD_CHECK(a.shape() == b.shape(), ShapeError, op, ": shape mismatch ",
            ShapeToString(a.shape()), " vs ", ShapeToString(b.shape()));
}

// Elementwise unary op whose derivative is a function of (input, output).
template <typename Fwd, typename Deriv>
Tensor Unary(Tape &tape, const Tensor &x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.size());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xd[i]);
  Tensor y = MakeResult(x.shape(), std::move(out), {&x});
  if (y.requires_grad()) {
    auto *xn = x.node();
    auto *yn = y.node();
    tape.Record({x}, y, [x, xn, yn, deriv]() {
      auto &gx = AccumulateGrad(x);
      for (std::size_t i = 0; i < gx.size(); ++i)
        gx[i] += yn->grad[i] * deriv(xn->data[i], yn->data[i]);
    });
  }
  return y;
}

}  // namespace

Tensor Add(Tape &tape, const Tensor &a, const Tensor &b) {
  RequireSameShape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  Tensor y = MakeResult(a.shape(), std::move(out), {&a, &b});
  if (y.requires_grad()) {
    auto *yn = y.node();
    tape.Record({a, b}, y, [a, b, yn]() {
      for (const Tensor *t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto &g = AccumulateGrad(*t);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i];
      }
    });
  }
  return y;
}

Tensor Mul(Tape &tape, const Tensor &a, const Tensor &b) {
  RequireSameShape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  Tensor y = MakeResult(a.shape(), std::move(out), {&a, &b});
  if (y.requires_grad()) {
    auto *yn = y.node();
    tape.Record({a, b}, y, [a, b, yn]() {
      if (a.requires_grad()) {
        auto &g = AccumulateGrad(a);
        auto bd = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i] * bd[i];
      }
      if (b.requires_grad()) {
        auto &g = AccumulateGrad(b);
        auto ad = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i] * ad[i];
      }
    });
  }
  return y;
}

Tensor Scale(Tape &tape, const Tensor &a, double factor) {
  return Unary(
      tape, a, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor MatMul(Tape &tape, const Tensor &a, const Tensor &b) {
  IHD_CHECK(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
            ShapeError, "matmul: shape mismatch ", ShapeToString(a.shape()),
            " vs ", ShapeToString(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      const double *brow = &bd[p * n];
      double *orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  Tensor y = MakeResult({m, n}, std::move(out), {&a, &b});
  if (y.requires_grad()) {
    auto *yn = y.node();
    tape.Record({a, b}, y, [a, b, yn, m, k, n]() {
      const auto &gy = yn->grad;
      if (a.requires_grad()) {
        auto &ga = AccumulateGrad(a);
        auto bd = b.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += gy[i * n + j] * bd[p * n + j];
            ga[i * k + p] += s;
          }
      }
      if (b.requires_grad()) {
        auto &gb = AccumulateGrad(b);
        auto ad = a.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * gy[i * n + j];
          }
      }
    });
  }
  return y;
}

Tensor Linear(Tape &tape, const Tensor &x, const Tensor &weight,
              const Tensor &bias) {
  IHD_CHECK(x.rank() == 2 && weight.rank() == 2 && x.dim(1) == weight.dim(1),
            ShapeError, "linear: shape mismatch ", ShapeToString(x.shape()),
            " vs ", ShapeToString(weight.shape()));
  const std::size_t n = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (bias.defined())
    IHD_CHECK(bias.size() == out_dim, ShapeError, "linear: bias shape ",
              ShapeToString(bias.shape()), " vs weight ",
              ShapeToString(weight.shape()));
  std::vector<double> out(n * out_dim);
  auto xd = x.data();
  auto wd = weight.data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t o = 0; o < out_dim; ++o) {
      double s = bias.defined() ? bias.at(o) : 0.0;
      const double *xr = &xd[r * in];
      const double *wr = &wd[o * in];
      for (std::size_t i = 0; i < in; ++i) s += xr[i] * wr[i];
      out[r * out_dim + o] = s;
    }
  Tensor y = MakeResult({n, out_dim}, std::move(out), {&x, &weight, &bias});
  if (y.requires_grad()) {
    auto *yn = y.node();
    std::vector<Tensor> inputs = {x, weight};
    if (bias.defined()) inputs.push_back(bias);
    tape.Record(std::move(inputs), y, [x, weight, bias, yn, n, in, out_dim]() {
      const auto &gy = yn->grad;
      if (x.requires_grad()) {
        auto &gx = AccumulateGrad(x);
        auto wd = weight.data();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t o = 0; o < out_dim; ++o) {
            const double g = gy[r * out_dim + o];
            if (g == 0.0) continue;
            for (std::size_t i = 0; i < in; ++i) gx[r * in + i] += g * wd[o * in + i];
          }
      }
      if (weight.requires_grad()) {
        auto &gw = AccumulateGrad(weight);
        auto xd = x.data();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t o = 0; o < out_dim; ++o) {
            const double g = gy[r * out_dim + o];
            if (g == 0.0) continue;
            for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += g * xd[r * in + i];
          }
      }
      if (bias.defined() && bias.requires_grad()) {
        auto &gb = AccumulateGrad(bias);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t o = 0; o < out_dim; ++o) gb[o] += gy[r * out_dim + o];
      }
    });
  }
  return y;
}

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w;     // input
  std::size_t o, cg, kh, kw;  // weight; cg = c / groups
  std::size_t oh, ow;
  std::size_t stride, pad, groups;
  std::size_t og;  // output channels per group
};

// Range of output columns whose sampled input column
// ox * stride + kx - pad falls inside [0, w).
inline void ValidRange(std::size_t k, std::size_t pad, std::size_t stride,
                       std::size_t in_size, std::size_t out_size,
                       std::size_t &lo, std::size_t &hi) {
  // lo: smallest o with o*stride + k >= pad
  lo = (k >= pad) ? 0 : (pad - k + stride - 1) / stride;
  // hi: one past largest o with o*stride + k - pad <= in_size - 1
  if (in_size + pad < k + 1) {
    hi = 0;
  } else {
    hi = std::min(out_size, (in_size - 1 + pad - k) / stride + 1);
  }
  if (lo > hi) lo = hi;
}

void ConvForward(const ConvGeometry &g, const double *x, const double *wt,
                 const double *bias, double *out) {
  const std::size_t in_plane = g.h * g.w, out_plane = g.oh * g.ow;
  for (std::size_t b = 0; b < g.n; ++b)
    for (std::size_t oc = 0; oc < g.o; ++oc) {
      double *op = out + (b * g.o + oc) * out_plane;
      const double bv = bias ? bias[oc] : 0.0;
      std::fill(op, op + out_plane, bv);
      const std::size_t grp = oc / g.og;
      for (std::size_t icg = 0; icg < g.cg; ++icg) {
        const std::size_t ic = grp * g.cg + icg;
        const double *ip = x + (b * g.c + ic) * in_plane;
        const double *wp = wt + (oc * g.cg + icg) * g.kh * g.kw;
        if (g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0) {
          const double wv = wp[0];
          for (std::size_t i = 0; i < out_plane; ++i) op[i] += wv * ip[i];
          continue;
        }
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          std::size_t ylo, yhi;
          ValidRange(ky, g.pad, g.stride, g.h, g.oh, ylo, yhi);
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const double wv = wp[ky * g.kw + kx];
            std::size_t xlo, xhi;
            ValidRange(kx, g.pad, g.stride, g.w, g.ow, xlo, xhi);
            for (std::size_t oy = ylo; oy < yhi; ++oy) {
              const double *irow = ip + (oy * g.stride + ky - g.pad) * g.w;
              double *orow = op + oy * g.ow;
              if (g.stride == 1) {
                const double *src = irow + kx - g.pad;
                for (std::size_t ox = xlo; ox < xhi; ++ox) orow[ox] += wv * src[ox];
              } else {
                for (std::size_t ox = xlo; ox < xhi; ++ox)
                  orow[ox] += wv * irow[ox * g.stride + kx - g.pad];
              }
            }
          }
        }
      }
    }
}

void ConvBackward(const ConvGeometry &g, const double *x, const double *wt,
                  const double *gy, double *gx, double *gw, double *gb) {
  const std::size_t in_plane = g.h * g.w, out_plane = g.oh * g.ow;
  for (std::size_t b = 0; b < g.n; ++b)
    for (std::size_t oc = 0; oc < g.o; ++oc) {
      const double *gp = gy + (b * g.o + oc) * out_plane;
      if (gb) {
        double s = 0.0;
        for (std::size_t i = 0; i < out_plane; ++i) s += gp[i];
        gb[oc] += s;
      }
      const std::size_t grp = oc / g.og;
      for (std::size_t icg = 0; icg < g.cg; ++icg) {
        const std::size_t ic = grp * g.cg + icg;
        const double *ip = x + (b * g.c + ic) * in_plane;
        double *gip = gx ? gx + (b * g.c + ic) * in_plane : nullptr;
        const std::size_t widx = (oc * g.cg + icg) * g.kh * g.kw;
        const double *wp = wt + widx;
        double *gwp = gw ? gw + widx : nullptr;
        if (g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0) {
          const double wv = wp[0];
          double s = 0.0;
          if (gip)
            for (std::size_t i = 0; i < out_plane; ++i) gip[i] += wv * gp[i];
          if (gwp) {
            for (std::size_t i = 0; i < out_plane; ++i) s += gp[i] * ip[i];
            gwp[0] += s;
          }
          continue;
        }
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          std::size_t ylo, yhi;
          ValidRange(ky, g.pad, g.stride, g.h, g.oh, ylo, yhi);
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const double wv = wp[ky * g.kw + kx];
            std::size_t xlo, xhi;
            ValidRange(kx, g.pad, g.stride, g.w, g.ow, xlo, xhi);
            double s = 0.0;
            for (std::size_t oy = ylo; oy < yhi; ++oy) {
              const std::size_t row = (oy * g.stride + ky - g.pad) * g.w;
              const double *irow = ip + row;
              const double *grow = gp + oy * g.ow;
              if (g.stride == 1) {
                const double *src = irow + kx - g.pad;
                for (std::size_t ox = xlo; ox < xhi; ++ox) s += grow[ox] * src[ox];
                if (gip) {
                  double *dst = gip + row + kx - g.pad;
                  for (std::size_t ox = xlo; ox < xhi; ++ox) dst[ox] += wv * grow[ox];
                }
              } else {
                for (std::size_t ox = xlo; ox < xhi; ++ox)
                  s += grow[ox] * irow[ox * g.stride + kx - g.pad];
                if (gip) {
                  double *dst = gip + row;
                  for (std::size_t ox = xlo; ox < xhi; ++ox)
                    dst[ox * g.stride + kx - g.pad] += wv * grow[ox];
                }
              }
            }
            if (gwp) gwp[ky * g.kw + kx] += s;
          }
        }
      }
    }
}

}  // namespace

Tensor Conv2d(Tape &tape, const Tensor &x, const Tensor &weight,
              const Tensor &bias, const Conv2dOptions &opt) {
  IHD_CHECK(x.rank() == 4 && weight.rank() == 4, ShapeError,
            "conv2d: expected rank-4 input and weight, got ",
            ShapeToString(x.shape()), " and ", ShapeToString(weight.shape()));
  IHD_CHECK(opt.groups >= 1 && opt.stride >= 1, ShapeError,
            "conv2d: groups and stride must be >= 1");
  ConvGeometry g{};
  g.n = x.dim(0), g.c = x.dim(1), g.h = x.dim(2), g.w = x.dim(3);
  g.o = weight.dim(0), g.cg = weight.dim(1), g.kh = weight.dim(2),
  g.kw = weight.dim(3);
  g.stride = opt.stride, g.pad = opt.padding, g.groups = opt.groups;
  IHD_CHECK(g.c % g.groups == 0 && g.o % g.groups == 0, ShapeError,
            "conv2d: groups=", g.groups, " does not divide channels (in ", g.c,
            ", out ", g.o, ")");
  IHD_CHECK(g.cg == g.c / g.groups, ShapeError, "conv2d: shape mismatch ",
            ShapeToString(x.shape()), " vs ", ShapeToString(weight.shape()),
            " with groups=", g.groups);
  IHD_CHECK(g.h + 2 * g.pad >= g.kh && g.w + 2 * g.pad >= g.kw, ShapeError,
            "conv2d: kernel ", ShapeToString(weight.shape()),
            " larger than padded input ", ShapeToString(x.shape()));
  if (bias.defined())
    IHD_CHECK(bias.size() == g.o, ShapeError, "conv2d: bias shape ",
              ShapeToString(bias.shape()), " vs ", g.o, " output channels");
  g.og = g.o / g.groups;
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;

  std::vector<double> out(g.n * g.o * g.oh * g.ow);
  ConvForward(g, x.data().data(), weight.data().data(),
              bias.defined() ? bias.data().data() : nullptr, out.data());
  Tensor y = MakeResult({g.n, g.o, g.oh, g.ow}, std::move(out),
                        {&x, &weight, &bias});
  if (y.requires_grad()) {
    auto *yn = y.node();
    std::vector<Tensor> inputs = {x, weight};
    if (bias.defined()) inputs.push_back(bias);
    tape.Record(std::move(inputs), y, [x, weight, bias, yn, g]() {
      double *gx = x.requires_grad() ? AccumulateGrad(x).data() : nullptr;
      double *gw =
          weight.requires_grad() ? AccumulateGrad(weight).data() : nullptr;
      double *gb = (bias.defined() && bias.requires_grad())
                       ? AccumulateGrad(bias).data()
                       : nullptr;
      ConvBackward(g, x.data().data(), weight.data().data(), yn->grad.data(),
                   gx, gw, gb);
    });
  }
  return y;
}

Tensor MaxPool2x2(Tape &tape, const Tensor &x) {
  IHD_CHECK(x.rank() == 4 && x.dim(2) >= 2 && x.dim(3) >= 2, ShapeError,
            "maxpool2x2: expected [n, c, h>=2, w>=2], got ",
            ShapeToString(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<double> out(planes * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  auto xd = x.data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = p * h * w + 2 * i * w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = p * h * w + (2 * i + di) * w + 2 * j + dj;
            if (xd[idx] > xd[best]) best = idx;
          }
        const std::size_t o = (p * oh + i) * ow + j;
        out[o] = xd[best];
        argmax[o] = best;
      }
  Tensor y = MakeResult({x.dim(0), x.dim(1), oh, ow}, std::move(out), {&x});
  if (y.requires_grad()) {
    auto *yn = y.node();
    tape.Record({x}, y, [x, yn, argmax = std::move(argmax)]() {
      auto &gx = AccumulateGrad(x);
      for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += yn->grad[o];
    });
  }
  return y;
}

Tensor GlobalAvgPool(Tape &tape, const Tensor &x) {
  IHD_CHECK(x.rank() == 4, ShapeError,
            "global_avg_pool: expected rank-4 input, got ",
            ShapeToString(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  std::vector<double> out(n * c);
  auto xd = x.data();
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < plane; ++k) s += xd[i * plane + k];
    out[i] = s / static_cast<double>(plane);
  }
  Tensor y = MakeResult({n, c}, std::move(out), {&x});
  if (y.requires_grad()) {
    auto *yn = y.node();
    tape.Record({x}, y, [x, yn, plane]() {
      auto &gx = AccumulateGrad(x);
      const double inv = 1.0 / static_cast<double>(plane);
      for (std::size_t i = 0; i < yn->grad.size(); ++i) {
        const double g = yn->grad[i] * inv;
        for (std::size_t k = 0; k < plane; ++k) gx[i * plane + k] += g;
      }
    });
  }
  return y;
}

Tensor Relu(Tape &tape, const Tensor &x) {
  return Unary(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor Sigmoid(Tape &tape, const Tensor &x) {
  return Unary(
      tape, x,
      [](double v) {
        // Split by sign so exp never overflows.
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double s) { return s * (1.0 - s); });
}

Tensor Tanh(Tape &tape, const Tensor &x) {
  return Unary(
      tape, x, [](double v) { return std::tanh(v); },
      [](double, double t) { return 1.0 - t * t; });
}

Tensor Concat(Tape &tape, const Tensor &a, const Tensor &b, std::size_t axis) {
  IHD_CHECK(a.rank() == b.rank() && axis < a.rank(), ShapeError,
            "concat: shape mismatch ", ShapeToString(a.shape()), " vs ",
            ShapeToString(b.shape()), " on axis ", axis);
  for (std::size_t d = 0; d < a.rank(); ++d)
    IHD_CHECK(d == axis || a.dim(d) == b.dim(d), ShapeError,
              "concat: shape mismatch ", ShapeToString(a.shape()), " vs ",
              ShapeToString(b.shape()), " on axis ", axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.dim(d);
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
  const std::size_t ca = a.dim(axis) * inner, cb = b.dim(axis) * inner;
  Shape shape = a.shape();
  shape[axis] += b.dim(axis);
  std::vector<double> out(outer * (ca + cb));
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(&ad[o * ca], ca, &out[o * (ca + cb)]);
    std::copy_n(&bd[o * cb], cb, &out[o * (ca + cb) + ca]);
  }
  Tensor y = MakeResult(std::move(shape), std::move(out), {&a, &b});
  if (y.requires_grad()) {
    auto *yn = y.node();
    tape.Record({a, b}, y, [a, b, yn, outer, ca, cb]() {
      if (a.requires_grad()) {
        auto &ga = AccumulateGrad(a);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < ca; ++i) ga[o * ca + i] += yn->grad[o * (ca + cb) + i];
      }
      if (b.requires_grad()) {
        auto &gb = AccumulateGrad(b);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < cb; ++i)
            gb[o * cb + i] += yn->grad[o * (ca + cb) + ca + i];
      }
    });
  }
  return y;
}

Tensor Slice(Tape &tape, const Tensor &x, std::size_t axis, std::size_t begin,
             std::size_t end) {
  IHD_CHECK(axis < x.rank() && begin < end && end <= x.dim(axis), ShapeError,
            "slice: range [", begin, ", ", end, ") on axis ", axis,
            " invalid for shape ", ShapeToString(x.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t full = x.dim(axis) * inner, part = (end - begin) * inner,
                    offset = begin * inner;
  Shape shape = x.shape();
  shape[axis] = end - begin;
  std::vector<double> out(outer * part);
  auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(&xd[o * full + offset], part, &out[o * part]);
  Tensor y = MakeResult(std::move(shape), std::move(out), {&x});
  if (y.requires_grad()) {
    auto *yn = y.node();
    tape.Record({x}, y, [x, yn, outer, full, part, offset]() {
      auto &gx = AccumulateGrad(x);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < part; ++i)
          gx[o * full + offset + i] += yn->grad[o * part + i];
    });
  }
  return y;
}

Tensor Dropout(Tape &tape, const Tensor &x, double p, bool train, Rng &rng) {
  IHD_CHECK(p >= 0.0 && p < 1.0, RuntimeError, "dropout: p=", p,
            " outside [0, 1)");
  if (!train || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (auto &m : mask) m = rng.Bernoulli(p) ? 0.0 : keep_scale;
  std::vector<double> out(x.size());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * mask[i];
  Tensor y = MakeResult(x.shape(), std::move(out), {&x});
  if (y.requires_grad()) {
    auto *yn = y.node();
    tape.Record({x}, y, [x, yn, mask = std::move(mask)]() {
      auto &gx = AccumulateGrad(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += yn->grad[i] * mask[i];
    });
  }
  return y;
}

Tensor Sum(Tape &tape, const Tensor &x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor y = MakeResult({1}, {s}, {&x});
  if (y.requires_grad()) {
    auto *yn = y.node();
    tape.Record({x}, y, [x, yn]() {
      auto &gx = AccumulateGrad(x);
      for (auto &g : gx) g += yn->grad[0];
    });
  }
  return y;
}

Tensor Mean(Tape &tape, const Tensor &x) {
  return Scale(tape, Sum(tape, x), 1.0 / static_cast<double>(x.size()));
}

Tensor FiniteDifferenceGrad(const std::function<double(const Tensor &)> &f,
                            const Tensor &x, double h) {
  IHD_CHECK(h > 0.0, RuntimeError, "finite difference step must be > 0");
  Tensor probe = x.Detach();
  std::vector<double> grad(x.size());
  auto pd = probe.mutable_data();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double orig = pd[i];
    pd[i] = orig + h;
    const double fp = f(probe);
    pd[i] = orig - h;
    const double fm = f(probe);
    pd[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return Tensor::FromData(x.shape(), std::move(grad));
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto &p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::Step(const Gradients &grads, double lr) {
  IHD_CHECK(grads.size() == params_.size(), ShapeError, "adam: got ",
            grads.size(), " gradients for ", params_.size(), " parameters");
  IHD_CHECK(lr > 0.0, RuntimeError, "adam: learning rate must be > 0");
  for (std::size_t k = 0; k < params_.size(); ++k)
    IHD_CHECK(grads[k].size() == params_[k].size(), ShapeError,
              "adam: gradient ", k, " has ", grads[k].size(),
              " values for parameter of shape ",
              ShapeToString(params_[k].shape()));
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto w = params_[k].mutable_data();
    auto &m = m_[k];
    auto &v = v_[k];
    const auto &g = grads[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + options_.epsilon);
    }
  }
}

}  // namespace ihd
