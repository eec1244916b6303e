#include "sredge/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "sredge/errors.hpp"

namespace sredge::ops {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

void require_rank4(const Shape& s, const char* op, const char* what) {
  if (s.size() != 4) {
    throw DimensionError(std::string(op) + ": " + what + " must be NCHW, got " + shape_str(s));
  }
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) + " differ");
}

struct ConvGeom {
  std::size_t n, c, h, w, o, k, ho, wo;
  int stride, pad;
  std::size_t rows() const { return c * k * k; }
  std::size_t cols() const { return ho * wo; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const T* img, const ConvGeom& g, T* col) {
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((c * g.k + ky) * g.k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
          T* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.wo, T{0});
            continue;
          }
          const T* src = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T{0} : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* img) {
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((c * g.k + ky) * g.k + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* dst = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const T* src = row + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, std::optional<Var<T>> bias, int stride, int padding) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  require_rank4(xs, "conv2d", "input");
  require_rank4(ws, "conv2d", "weight");
  if (ws[1] != xs[1]) {
    throw DimensionError("conv2d: input channel axis (C=" + std::to_string(xs[1]) + ") does not match weight input axis (I=" +
                         std::to_string(ws[1]) + ")");
  }
  if (ws[2] != ws[3]) throw DimensionError("conv2d: kernel must be square, got " + shape_str(ws));
  if (stride < 1 || padding < 0) throw DimensionError("conv2d: stride must be >= 1 and padding >= 0");
  if (bias && (bias->shape().size() != 1 || bias->shape()[0] != ws[0])) {
    throw DimensionError("conv2d: bias shape " + shape_str(bias->shape()) + " does not match output axis O=" +
                         std::to_string(ws[0]));
  }
  const long span_h = static_cast<long>(xs[2]) + 2 * padding - static_cast<long>(ws[2]);
  const long span_w = static_cast<long>(xs[3]) + 2 * padding - static_cast<long>(ws[3]);
  if (span_h < 0 || span_w < 0) {
    throw DimensionError("conv2d: kernel " + std::to_string(ws[2]) + " larger than padded spatial axes (H,W) of " +
                         shape_str(xs));
  }
  ConvGeom g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2],
             static_cast<std::size_t>(span_h / stride + 1), static_cast<std::size_t>(span_w / stride + 1), stride, padding};

  const Tensor<T>& x = input.value();
  const Tensor<T>& w = weight.value();
  Tensor<T> out(Shape{g.n, g.o, g.ho, g.wo});
  AlignedVector<T> col(g.pointwise() ? 0 : g.rows() * g.cols());
  CMapR<T> wm(w.data(), g.o, g.rows());
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* xn = x.data() + n * g.c * g.h * g.w;
    const T* cp = xn;
    if (!g.pointwise()) {
      im2col(xn, g, col.data());
      cp = col.data();
    }
    MapR<T> om(out.data() + n * g.o * g.cols(), g.o, g.cols());
    om.noalias() = wm * CMapR<T>(cp, g.rows(), g.cols());
    if (bias) {
      const Tensor<T>& b = bias->value();
      for (std::size_t o = 0; o < g.o; ++o) om.row(o).array() += b[o];
    }
  }

  std::vector<NodeId> parents{input.id(), weight.id()};
  if (bias) parents.push_back(bias->id());
  Tape<T>* tape = &input.tape();
  const NodeId xid = input.id(), wid = weight.id();
  const std::optional<NodeId> bid = bias ? std::optional<NodeId>(bias->id()) : std::nullopt;
  return tape->record("conv2d", std::move(parents), std::move(out), [tape, xid, wid, bid, g](const Tensor<T>& gout, GradSink<T>& sink) {
    const Tensor<T>& x = tape->node(xid).value;
    const Tensor<T>& w = tape->node(wid).value;
    const bool want_x = sink.wants(xid), want_w = sink.wants(wid);
    const bool want_b = bid && sink.wants(*bid);
    AlignedVector<T> col(g.pointwise() ? 0 : g.rows() * g.cols());
    AlignedVector<T> dcol(want_x && !g.pointwise() ? g.rows() * g.cols() : 0);
    CMapR<T> wm(w.data(), g.o, g.rows());
    for (std::size_t n = 0; n < g.n; ++n) {
      CMapR<T> gm(gout.data() + n * g.o * g.cols(), g.o, g.cols());
      const T* xn = x.data() + n * g.c * g.h * g.w;
      if (want_w) {
        const T* cp = xn;
        if (!g.pointwise()) {
          im2col(xn, g, col.data());
          cp = col.data();
        }
        MapR<T> dw(sink.grad(wid).data(), g.o, g.rows());
        dw.noalias() += gm * CMapR<T>(cp, g.rows(), g.cols()).transpose();
      }
      if (want_b) {
        Tensor<T>& db = sink.grad(*bid);
        for (std::size_t o = 0; o < g.o; ++o) db[o] += gm.row(o).sum();
      }
      if (want_x) {
        T* dxn = sink.grad(xid).data() + n * g.c * g.h * g.w;
        if (g.pointwise()) {
          MapR<T>(dxn, g.rows(), g.cols()).noalias() += wm.transpose() * gm;
        } else {
          MapR<T>(dcol.data(), g.rows(), g.cols()).noalias() = wm.transpose() * gm;
          col2im_add(dcol.data(), g, dxn);
        }
      }
    }
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (T& v : out.values()) v = v > T{0} ? v : T{0};
  Tape<T>* tape = &x.tape();
  const NodeId xid = x.id();
  return tape->record("relu", {xid}, std::move(out), [tape, xid](const Tensor<T>& gout, GradSink<T>& sink) {
    const Tensor<T>& xv = tape->node(xid).value;
    Tensor<T>& dx = sink.grad(xid);
    for (std::size_t i = 0; i < xv.numel(); ++i) {
      if (xv[i] > T{0}) dx[i] += gout[i];
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  const NodeId aid = a.id(), bid = b.id();
  return a.tape().record("add", {aid, bid}, std::move(out), [aid, bid](const Tensor<T>& gout, GradSink<T>& sink) {
    for (NodeId id : {aid, bid}) {
      if (!sink.wants(id)) continue;
      Tensor<T>& d = sink.grad(id);
      for (std::size_t i = 0; i < d.numel(); ++i) d[i] += gout[i];
    }
  });
}

template <typename T>
Var<T> scalar_mul(Var<T> x, double alpha) {
  Tensor<T> out = x.value();
  const T a = static_cast<T>(alpha);
  for (T& v : out.values()) v *= a;
  const NodeId xid = x.id();
  return x.tape().record("scalar_mul", {xid}, std::move(out), [xid, a](const Tensor<T>& gout, GradSink<T>& sink) {
    Tensor<T>& d = sink.grad(xid);
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] += a * gout[i];
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  Tape<T>* tape = &a.tape();
  const NodeId aid = a.id(), bid = b.id();
  return tape->record("mul", {aid, bid}, std::move(out), [tape, aid, bid](const Tensor<T>& gout, GradSink<T>& sink) {
    const Tensor<T>& av = tape->node(aid).value;
    const Tensor<T>& bv = tape->node(bid).value;
    if (sink.wants(aid)) {
      Tensor<T>& d = sink.grad(aid);
      for (std::size_t i = 0; i < d.numel(); ++i) d[i] += gout[i] * bv[i];
    }
    if (sink.wants(bid)) {
      Tensor<T>& d = sink.grad(bid);
      for (std::size_t i = 0; i < d.numel(); ++i) d[i] += gout[i] * av[i];
    }
  });
}

template <typename T>
Var<T> channel_concat(std::span<const Var<T>> parts) {
  if (parts.empty()) throw DimensionError("channel_concat: no operands");
  const Shape& s0 = parts[0].shape();
  require_rank4(s0, "channel_concat", "operand 0");
  std::size_t total_c = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Shape& s = parts[i].shape();
    require_rank4(s, "channel_concat", "operand");
    if (s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
      throw DimensionError("channel_concat: operand " + std::to_string(i) + " has (N,H,W) of " + shape_str(s) +
                           ", expected those of " + shape_str(s0));
    }
    total_c += s[1];
  }
  const std::size_t n = s0[0], plane = s0[2] * s0[3];
  Tensor<T> out(Shape{n, total_c, s0[2], s0[3]});
  std::vector<NodeId> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var<T>& p : parts) {
    const std::size_t c = p.shape()[1];
    for (std::size_t b = 0; b < n; ++b) {
      const T* src = p.value().data() + b * c * plane;
      std::copy(src, src + c * plane, out.data() + (b * total_c + off) * plane);
    }
    ids.push_back(p.id());
    offsets.push_back(off);
    off += c;
  }
  Tape<T>* tape = &parts[0].tape();
  std::vector<NodeId> parents = ids;
  return tape->record("channel_concat", std::move(parents), std::move(out),
                      [tape, ids, offsets, n, total_c, plane](const Tensor<T>& gout, GradSink<T>& sink) {
                        for (std::size_t i = 0; i < ids.size(); ++i) {
                          if (!sink.wants(ids[i])) continue;
                          Tensor<T>& d = sink.grad(ids[i]);
                          const std::size_t c = d.shape()[1];
                          for (std::size_t b = 0; b < n; ++b) {
                            const T* src = gout.data() + (b * total_c + offsets[i]) * plane;
                            T* dst = d.data() + b * c * plane;
                            for (std::size_t k = 0; k < c * plane; ++k) dst[k] += src[k];
                          }
                        }
                      });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T acc{0};
  for (T v : x.value().values()) acc += v;
  const NodeId xid = x.id();
  return x.tape().record("sum", {xid}, Tensor<T>::scalar(acc), [xid](const Tensor<T>& gout, GradSink<T>& sink) {
    Tensor<T>& d = sink.grad(xid);
    for (T& v : d.values()) v += gout[0];
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  const std::size_t count = x.value().numel();
  return scalar_mul(sum(x), 1.0 / static_cast<double>(count));
}

namespace {
template <typename T>
T stable_sigmoid(T v) {
  return v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
}
}  // namespace

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Tensor<T> out = x.value();
  for (T& v : out.values()) v = stable_sigmoid(v);
  Tape<T>* tape = &x.tape();
  const NodeId xid = x.id();
  return tape->record("sigmoid", {xid}, std::move(out), [tape, xid](const Tensor<T>& gout, GradSink<T>& sink) {
    const Tensor<T>& xv = tape->node(xid).value;
    Tensor<T>& d = sink.grad(xid);
    for (std::size_t i = 0; i < d.numel(); ++i) {
      const T y = stable_sigmoid(xv[i]);
      d[i] += gout[i] * y * (T{1} - y);
    }
  });
}


template <typename T>
Var<T> adaptive_avg_pool2d(Var<T> x, std::size_t bins_h, std::size_t bins_w) {
  const Shape& s = x.shape();
  require_rank4(s, "adaptive_avg_pool2d", "input");
  if (bins_h == 0 || bins_w == 0 || bins_h > s[2] || bins_w > s[3]) {
    throw DimensionError("adaptive_avg_pool2d: bins (" + std::to_string(bins_h) + "," + std::to_string(bins_w) +
                         ") exceed spatial axes (H,W) of " + shape_str(s));
  }
  const std::size_t nc = s[0] * s[1], h = s[2], w = s[3];
  auto lo = [](std::size_t i, std::size_t ext, std::size_t bins) { return i * ext / bins; };
  Tensor<T> out(Shape{s[0], s[1], bins_h, bins_w});
  const Tensor<T>& xv = x.value();
  for (std::size_t p = 0; p < nc; ++p) {
    const T* src = xv.data() + p * h * w;
    for (std::size_t i = 0; i < bins_h; ++i) {
      const std::size_t y0 = lo(i, h, bins_h), y1 = lo(i + 1, h, bins_h);
      for (std::size_t j = 0; j < bins_w; ++j) {
        const std::size_t x0 = lo(j, w, bins_w), x1 = lo(j + 1, w, bins_w);
        T acc{0};
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t xx = x0; xx < x1; ++xx) acc += src[y * w + xx];
        out[(p * bins_h + i) * bins_w + j] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
  const NodeId xid = x.id();
  return x.tape().record("adaptive_avg_pool2d", {xid}, std::move(out),
                         [xid, nc, h, w, bins_h, bins_w, lo](const Tensor<T>& gout, GradSink<T>& sink) {
                           Tensor<T>& d = sink.grad(xid);
                           for (std::size_t p = 0; p < nc; ++p) {
                             T* dst = d.data() + p * h * w;
                             for (std::size_t i = 0; i < bins_h; ++i) {
                               const std::size_t y0 = lo(i, h, bins_h), y1 = lo(i + 1, h, bins_h);
                               for (std::size_t j = 0; j < bins_w; ++j) {
                                 const std::size_t x0 = lo(j, w, bins_w), x1 = lo(j + 1, w, bins_w);
                                 const T g = gout[(p * bins_h + i) * bins_w + j] / static_cast<T>((y1 - y0) * (x1 - x0));
                                 for (std::size_t y = y0; y < y1; ++y)
                                   for (std::size_t xx = x0; xx < x1; ++xx) dst[y * w + xx] += g;
                               }
                             }
                           }
                         });
}

namespace {

// Index map shared by pixel_shuffle and its inverse: for each element of the
// shuffled (N, C, rH, rW) layout, the flat index in the unshuffled
// (N, C*r*r, H, W) layout.
std::vector<std::size_t> shuffle_index(std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::size_t r) {
  std::vector<std::size_t> idx(n * c * h * r * w * r);
  const std::size_t oh = h * r, ow = w * r, cin = c * r * r;
  std::size_t k = 0;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          const std::size_t ic = ch * r * r + (y % r) * r + (x % r);
          idx[k++] = ((b * cin + ic) * h + y / r) * w + x / r;
        }
  return idx;
}

}  // namespace

template <typename T>
Var<T> pixel_shuffle(Var<T> x, int r) {
  const Shape& s = x.shape();
  require_rank4(s, "pixel_shuffle", "input");
  if (r < 1 || s[1] % static_cast<std::size_t>(r * r) != 0) {
    throw DimensionError("pixel_shuffle: channel axis C=" + std::to_string(s[1]) + " not divisible by r^2=" +
                         std::to_string(r * r));
  }
  const std::size_t ur = static_cast<std::size_t>(r);
  const std::size_t c = s[1] / (ur * ur);
  auto idx = std::make_shared<std::vector<std::size_t>>(shuffle_index(s[0], c, s[2], s[3], ur));
  Tensor<T> out(Shape{s[0], c, s[2] * ur, s[3] * ur});
  const Tensor<T>& xv = x.value();
  for (std::size_t k = 0; k < idx->size(); ++k) out[k] = xv[(*idx)[k]];
  const NodeId xid = x.id();
  return x.tape().record("pixel_shuffle", {xid}, std::move(out), [xid, idx](const Tensor<T>& gout, GradSink<T>& sink) {
    Tensor<T>& d = sink.grad(xid);
    for (std::size_t k = 0; k < idx->size(); ++k) d[(*idx)[k]] += gout[k];
  });
}

template <typename T>
Var<T> pixel_unshuffle(Var<T> x, int r) {
  const Shape& s = x.shape();
  require_rank4(s, "pixel_unshuffle", "input");
  const std::size_t ur = static_cast<std::size_t>(r);
  if (r < 1 || s[2] % ur != 0 || s[3] % ur != 0) {
    throw DimensionError("pixel_unshuffle: spatial axes (H,W) of " + shape_str(s) + " not divisible by r=" + std::to_string(r));
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(shuffle_index(s[0], s[1], s[2] / ur, s[3] / ur, ur));
  Tensor<T> out(Shape{s[0], s[1] * ur * ur, s[2] / ur, s[3] / ur});
  const Tensor<T>& xv = x.value();
  for (std::size_t k = 0; k < idx->size(); ++k) out[(*idx)[k]] = xv[k];
  const NodeId xid = x.id();
  return x.tape().record("pixel_unshuffle", {xid}, std::move(out), [xid, idx](const Tensor<T>& gout, GradSink<T>& sink) {
    Tensor<T>& d = sink.grad(xid);
    for (std::size_t k = 0; k < idx->size(); ++k) d[k] += gout[(*idx)[k]];
  });
}

namespace {

struct LerpTap {
  std::size_t i0, i1;
  double frac;
};

std::vector<LerpTap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<LerpTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t d = 0; d < out; ++d) {
    const double src = std::max(0.0, (static_cast<double>(d) + 0.5) * scale - 0.5);
    const std::size_t i0 = std::min(static_cast<std::size_t>(src), in - 1);
    taps[d] = {i0, std::min(i0 + 1, in - 1), src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
Var<T> bilinear_upsample(Var<T> x, std::size_t out_h, std::size_t out_w) {
  const Shape& s = x.shape();
  require_rank4(s, "bilinear_upsample", "input");
  if (out_h == 0 || out_w == 0) throw DimensionError("bilinear_upsample: target extent must be >= 1");
  const std::size_t nc = s[0] * s[1], h = s[2], w = s[3];
  auto ty = bilinear_taps(h, out_h);
  auto tx = bilinear_taps(w, out_w);
  Tensor<T> out(Shape{s[0], s[1], out_h, out_w});
  const Tensor<T>& xv = x.value();
  for (std::size_t p = 0; p < nc; ++p) {
    const T* src = xv.data() + p * h * w;
    T* dst = out.data() + p * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const T fy = static_cast<T>(ty[y].frac);
      const T* r0 = src + ty[y].i0 * w;
      const T* r1 = src + ty[y].i1 * w;
      for (std::size_t xx = 0; xx < out_w; ++xx) {
        const T fx = static_cast<T>(tx[xx].frac);
        const T top = r0[tx[xx].i0] * (T{1} - fx) + r0[tx[xx].i1] * fx;
        const T bot = r1[tx[xx].i0] * (T{1} - fx) + r1[tx[xx].i1] * fx;
        dst[y * out_w + xx] = top * (T{1} - fy) + bot * fy;
      }
    }
  }
  const NodeId xid = x.id();
  return x.tape().record("bilinear_upsample", {xid}, std::move(out),
                         [xid, nc, h, w, out_h, out_w, ty, tx](const Tensor<T>& gout, GradSink<T>& sink) {
                           Tensor<T>& d = sink.grad(xid);
                           for (std::size_t p = 0; p < nc; ++p) {
                             T* dst = d.data() + p * h * w;
                             const T* g = gout.data() + p * out_h * out_w;
                             for (std::size_t y = 0; y < out_h; ++y) {
                               const T fy = static_cast<T>(ty[y].frac);
                               T* r0 = dst + ty[y].i0 * w;
                               T* r1 = dst + ty[y].i1 * w;
                               for (std::size_t xx = 0; xx < out_w; ++xx) {
                                 const T fx = static_cast<T>(tx[xx].frac);
                                 const T gv = g[y * out_w + xx];
                                 r0[tx[xx].i0] += gv * (T{1} - fy) * (T{1} - fx);
                                 r0[tx[xx].i1] += gv * (T{1} - fy) * fx;
                                 r1[tx[xx].i0] += gv * fy * (T{1} - fx);
                                 r1[tx[xx].i1] += gv * fy * fx;
                               }
                             }
                           }
                         });
}

template <typename T>
Var<T> loss_l1(Var<T> pred, Var<T> target) {
  require_same(pred.shape(), target.shape(), "loss_l1");
  const Tensor<T>& a = pred.value();
  const Tensor<T>& b = target.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  const std::size_t count = a.numel();
  Tape<T>* tape = &pred.tape();
  const NodeId pid = pred.id(), tid = target.id();
  return tape->record("loss_l1", {pid, tid}, Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(count))),
                      [tape, pid, tid, count](const Tensor<T>& gout, GradSink<T>& sink) {
                        const Tensor<T>& a = tape->node(pid).value;
                        const Tensor<T>& b = tape->node(tid).value;
                        const T g = gout[0] / static_cast<T>(count);
                        for (NodeId id : {pid, tid}) {
                          if (!sink.wants(id)) continue;
                          Tensor<T>& d = sink.grad(id);
                          const T sgn = id == pid ? T{1} : T{-1};
                          for (std::size_t i = 0; i < count; ++i) {
                            if (a[i] > b[i]) d[i] += sgn * g;
                            else if (a[i] < b[i]) d[i] -= sgn * g;
                          }
                        }
                      });
}

template <typename T>
Var<T> loss_bce_logits(Var<T> logits, Var<T> target) {
  require_same(logits.shape(), target.shape(), "loss_bce_logits");
  const Tensor<T>& x = logits.value();
  const Tensor<T>& t = target.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (!(t[i] >= T{0} && t[i] <= T{1})) {
      throw DomainError("loss_bce_logits: target " + std::to_string(static_cast<double>(t[i])) + " at index " +
                        std::to_string(i) + " outside [0,1]");
    }
    const double xi = x[i], ti = t[i];
    acc += std::max(xi, 0.0) - ti * xi + std::log1p(std::exp(-std::abs(xi)));
  }
  const std::size_t count = x.numel();
  Tape<T>* tape = &logits.tape();
  const NodeId lid = logits.id(), tid = target.id();
  return tape->record("loss_bce_logits", {lid, tid}, Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(count))),
                      [tape, lid, tid, count](const Tensor<T>& gout, GradSink<T>& sink) {
                        const Tensor<T>& x = tape->node(lid).value;
                        const Tensor<T>& t = tape->node(tid).value;
                        const T g = gout[0] / static_cast<T>(count);
                        if (sink.wants(lid)) {
                          Tensor<T>& d = sink.grad(lid);
                          for (std::size_t i = 0; i < count; ++i) d[i] += g * (stable_sigmoid(x[i]) - t[i]);
                        }
                        if (sink.wants(tid)) {
                          Tensor<T>& d = sink.grad(tid);
                          for (std::size_t i = 0; i < count; ++i) d[i] -= g * x[i];
                        }
                      });
}

#define SREDGE_INSTANTIATE_OPS(T)                                                                   \
  template Var<T> conv2d<T>(Var<T>, Var<T>, std::optional<Var<T>>, int, int);                      \
  template Var<T> relu<T>(Var<T>);                                                                 \
  template Var<T> add<T>(Var<T>, Var<T>);                                                          \
  template Var<T> scalar_mul<T>(Var<T>, double);                                                   \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                          \
  template Var<T> channel_concat<T>(std::span<const Var<T>>);                                      \
  template Var<T> sum<T>(Var<T>);                                                                  \
  template Var<T> mean<T>(Var<T>);                                                                 \
  template Var<T> sigmoid<T>(Var<T>);                                                              \
  template Var<T> adaptive_avg_pool2d<T>(Var<T>, std::size_t, std::size_t);                       \
  template Var<T> pixel_shuffle<T>(Var<T>, int);                                                   \
  template Var<T> pixel_unshuffle<T>(Var<T>, int);                                                 \
  template Var<T> bilinear_upsample<T>(Var<T>, std::size_t, std::size_t);                          \
  template Var<T> loss_l1<T>(Var<T>, Var<T>);                                                      \
  template Var<T> loss_bce_logits<T>(Var<T>, Var<T>);

SREDGE_INSTANTIATE_OPS(float)
SREDGE_INSTANTIATE_OPS(double)

}  // namespace sredge::ops
