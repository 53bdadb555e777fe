#include "climdiff/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

namespace climdiff::nn {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <class T>
Tensor<T>* grad_of(Node<T>& self, std::size_t parent) {
  auto& p = self.parents[parent];
  return p->requires_grad ? &p->ensure_grad() : nullptr;
}

void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::Shape, what);
}

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, k, stride, pad, ho, wo;
  std::size_t rows() const { return cin * k * k; }
  std::size_t cols() const { return ho * wo; }
};

// Both work on a zero-padded copy of each sample, so the inner loops need no
// bounds checks. Row r of the patch matrix lives at cols + r * ld.
template <class T>
void im2col(const T* x, const ConvGeometry& g, T* cols, std::size_t ld) {
  const std::size_t hp = g.h + 2 * g.pad, wp = g.w + 2 * g.pad;
  std::vector<T> padded(g.cin * hp * wp, T(0));
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t y = 0; y < g.h; ++y) {
      const T* src = x + (ci * g.h + y) * g.w;
      std::copy(src, src + g.w, padded.data() + (ci * hp + y + g.pad) * wp + g.pad);
    }
  }
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = cols + ((ci * g.k + ky) * g.k + kx) * ld;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const T* src = padded.data() + (ci * hp + oy * g.stride + ky) * wp + kx;
          T* out = row + oy * g.wo;
          if (g.stride == 1) {
            std::copy(src, src + g.wo, out);
          } else {
            for (std::size_t ox = 0; ox < g.wo; ++ox) out[ox] = src[ox * g.stride];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx, std::size_t ld) {
  const std::size_t hp = g.h + 2 * g.pad, wp = g.w + 2 * g.pad;
  std::vector<T> padded(g.cin * hp * wp, T(0));
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = cols + ((ci * g.k + ky) * g.k + kx) * ld;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          T* dst = padded.data() + (ci * hp + oy * g.stride + ky) * wp + kx;
          const T* in = row + oy * g.wo;
          if (g.stride == 1) {
            for (std::size_t ox = 0; ox < g.wo; ++ox) dst[ox] += in[ox];
          } else {
            for (std::size_t ox = 0; ox < g.wo; ++ox) dst[ox * g.stride] += in[ox];
          }
        }
      }
    }
  }
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t y = 0; y < g.h; ++y) {
      const T* src = padded.data() + (ci * hp + y + g.pad) * wp + g.pad;
      T* dst = dx + (ci * g.h + y) * g.w;
      for (std::size_t x = 0; x < g.w; ++x) dst[x] += src[x];
    }
  }
}

}  // namespace

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride, std::size_t pad) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  require(xs.size() == 4 && ws.size() == 4, "conv2d expects NCHW input and [Cout,Cin,k,k] weight");
  require(ws[1] == xs[1], "conv2d: input has " + std::to_string(xs[1]) + " channels, weight expects " +
                              std::to_string(ws[1]));
  require(ws[2] == ws[3], "conv2d: kernel must be square");
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(xs[2] + 2 * pad >= ws[2] && xs[3] + 2 * pad >= ws[3], "conv2d: kernel larger than padded input");
  if (bias.defined()) require(bias.value().numel() == ws[0], "conv2d: bias length mismatch");

  ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], stride, pad, 0, 0};
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;
  const std::size_t K = g.rows(), P = g.cols();

  // All samples share one GEMM: cols is [K, N*P] with sample n in columns [n*P, (n+1)*P).
  const std::size_t NP = g.n * P;
  auto cols = std::make_shared<RowMat<T>>(K, NP);
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(x.value().ptr() + n * g.cin * g.h * g.w, g, cols->data() + n * P, NP);
  }
  RowMat<T> om(g.cout, NP);
  om.noalias() = ConstMapMat<T>(weight.value().ptr(), g.cout, K) * (*cols);
  Tensor<T> out({g.n, g.cout, g.ho, g.wo});
  for (std::size_t n = 0; n < g.n; ++n) {
    MapMat<T> dst(out.ptr() + n * g.cout * P, g.cout, P);
    dst = om.middleCols(n * P, P);
    if (bias.defined()) {
      for (std::size_t co = 0; co < g.cout; ++co) dst.row(co).array() += bias.value()[co];
    }
  }

  std::vector<Var<T>> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  if (!(GradMode::enabled() && weight.requires_grad())) cols.reset();
  return make_result<T>(std::move(out), std::move(parents), [g, cols](Node<T>& self) {
    const std::size_t K = g.rows(), P = g.cols(), NP = g.n * P;
    Tensor<T>* dx = grad_of(self, 0);
    Tensor<T>* dw = grad_of(self, 1);
    Tensor<T>* db = self.parents.size() > 2 ? grad_of(self, 2) : nullptr;
    RowMat<T> gm(g.cout, NP);
    for (std::size_t n = 0; n < g.n; ++n) {
      gm.middleCols(n * P, P) = ConstMapMat<T>(self.grad.ptr() + n * g.cout * P, g.cout, P);
    }
    if (dw) MapMat<T>(dw->ptr(), g.cout, K).noalias() += gm * cols->transpose();
    if (db) {
      for (std::size_t co = 0; co < g.cout; ++co) (*db)[co] += gm.row(co).sum();
    }
    if (dx) {
      RowMat<T> dcols(K, NP);
      dcols.noalias() = ConstMapMat<T>(self.parents[1]->value.ptr(), g.cout, K).transpose() * gm;
      for (std::size_t n = 0; n < g.n; ++n) {
        col2im_add(dcols.data() + n * P, g, dx->ptr() + n * g.cin * g.h * g.w, NP);
      }
    }
  });
}

template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  require(xs.size() == 2 && ws.size() == 2 && xs[1] == ws[1], "linear: expected x [N,In] and weight [Out,In]");
  require(!bias.defined() || bias.value().numel() == ws[0], "linear: bias length mismatch");
  const std::size_t N = xs[0], In = xs[1], Out = ws[0];
  Tensor<T> out({N, Out});
  MapMat<T> om(out.ptr(), N, Out);
  om.noalias() = ConstMapMat<T>(x.value().ptr(), N, In) * ConstMapMat<T>(weight.value().ptr(), Out, In).transpose();
  if (bias.defined()) {
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t o = 0; o < Out; ++o) om(n, o) += bias.value()[o];
    }
  }
  std::vector<Var<T>> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result<T>(std::move(out), std::move(parents), [N, In, Out](Node<T>& self) {
    ConstMapMat<T> gm(self.grad.ptr(), N, Out);
    if (auto* dx = grad_of(self, 0)) {
      MapMat<T>(dx->ptr(), N, In).noalias() += gm * ConstMapMat<T>(self.parents[1]->value.ptr(), Out, In);
    }
    if (auto* dw = grad_of(self, 1)) {
      MapMat<T>(dw->ptr(), Out, In).noalias() += gm.transpose() * ConstMapMat<T>(self.parents[0]->value.ptr(), N, In);
    }
    if (self.parents.size() > 2) {
      if (auto* db = grad_of(self, 2)) {
        for (std::size_t o = 0; o < Out; ++o) (*db)[o] += gm.col(o).sum();
      }
    }
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* d = grad_of(self, p)) {
        for (std::size_t i = 0; i < d->numel(); ++i) (*d)[i] += self.grad[i];
      }
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto* da = grad_of(self, 0)) {
      for (std::size_t i = 0; i < da->numel(); ++i) (*da)[i] += self.grad[i] * bv[i];
    }
    if (auto* db = grad_of(self, 1)) {
      for (std::size_t i = 0; i < db->numel(); ++i) (*db)[i] += self.grad[i] * av[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= s;
  return make_result<T>(std::move(out), {a}, [s](Node<T>& self) {
    if (auto* d = grad_of(self, 0)) {
      for (std::size_t i = 0; i < d->numel(); ++i) (*d)[i] += self.grad[i] * s;
    }
  });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  double acc = 0.0;
  for (T v : a.value().data()) acc += v;
  return make_result<T>(Tensor<T>({1}, {static_cast<T>(acc)}), {a}, [](Node<T>& self) {
    if (auto* d = grad_of(self, 0)) {
      for (auto& v : d->data()) v += self.grad[0];
    }
  });
}

template <class T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& v) {
  const auto& xs = x.shape();
  require(xs.size() == 4 && v.shape() == Shape{xs[0], xs[1]}, "add_channel_bias: expected x [N,C,H,W] and v [N,C]");
  const std::size_t NC = xs[0] * xs[1], HW = xs[2] * xs[3];
  Tensor<T> out = x.value();
  for (std::size_t i = 0; i < NC; ++i) {
    const T b = v.value()[i];
    T* p = out.ptr() + i * HW;
    for (std::size_t j = 0; j < HW; ++j) p[j] += b;
  }
  return make_result<T>(std::move(out), {x, v}, [NC, HW](Node<T>& self) {
    if (auto* dx = grad_of(self, 0)) {
      for (std::size_t i = 0; i < dx->numel(); ++i) (*dx)[i] += self.grad[i];
    }
    if (auto* dv = grad_of(self, 1)) {
      for (std::size_t i = 0; i < NC; ++i) {
        const T* g = self.grad.ptr() + i * HW;
        T acc = 0;
        for (std::size_t j = 0; j < HW; ++j) acc += g[j];
        (*dv)[i] += acc;
      }
    }
  });
}

template <class T>
Var<T> group_norm(const Var<T>& x, std::size_t groups, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const auto& xs = x.shape();
  require(xs.size() == 4, "group_norm expects NCHW input");
  const std::size_t N = xs[0], C = xs[1], HW = xs[2] * xs[3];
  require(groups >= 1 && C % groups == 0,
          "group_norm: " + std::to_string(C) + " channels not divisible by " + std::to_string(groups) + " groups");
  require(gamma.value().numel() == C && beta.value().numel() == C, "group_norm: affine parameter length mismatch");
  const std::size_t cpg = C / groups, M = cpg * HW;

  auto xhat = std::make_shared<Tensor<T>>(xs);
  auto rstd = std::make_shared<std::vector<T>>(N * groups);
  Tensor<T> out(xs);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t off = (n * C + g * cpg) * HW;
      const T* src = x.value().ptr() + off;
      double s = 0.0;
      for (std::size_t i = 0; i < M; ++i) s += src[i];
      const double mean = s / static_cast<double>(M);
      double ss = 0.0;
      for (std::size_t i = 0; i < M; ++i) ss += (src[i] - mean) * (src[i] - mean);
      const T r = static_cast<T>(1.0 / std::sqrt(ss / static_cast<double>(M) + static_cast<double>(eps)));
      (*rstd)[n * groups + g] = r;
      T* xh = xhat->ptr() + off;
      T* dst = out.ptr() + off;
      for (std::size_t c = 0; c < cpg; ++c) {
        const T gm = gamma.value()[g * cpg + c];
        const T bt = beta.value()[g * cpg + c];
        for (std::size_t j = 0; j < HW; ++j) {
          const std::size_t i = c * HW + j;
          xh[i] = static_cast<T>((src[i] - mean) * r);
          dst[i] = xh[i] * gm + bt;
        }
      }
    }
  }
  return make_result<T>(std::move(out), {x, gamma, beta}, [=](Node<T>& self) {
    Tensor<T>* dx = grad_of(self, 0);
    Tensor<T>* dgamma = grad_of(self, 1);
    Tensor<T>* dbeta = grad_of(self, 2);
    const auto& gam = self.parents[1]->value;
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t off = (n * C + g * cpg) * HW;
        const T* gy = self.grad.ptr() + off;
        const T* xh = xhat->ptr() + off;
        double sum_d = 0.0, sum_dx = 0.0;
        for (std::size_t c = 0; c < cpg; ++c) {
          const std::size_t ch = g * cpg + c;
          double sg = 0.0, sgx = 0.0;
          for (std::size_t j = 0; j < HW; ++j) {
            sg += gy[c * HW + j];
            sgx += gy[c * HW + j] * xh[c * HW + j];
          }
          if (dgamma) (*dgamma)[ch] += static_cast<T>(sgx);
          if (dbeta) (*dbeta)[ch] += static_cast<T>(sg);
          sum_d += sg * gam[ch];
          sum_dx += sgx * gam[ch];
        }
        if (!dx) continue;
        const double r = (*rstd)[n * groups + g];
        const double md = sum_d / static_cast<double>(M), mdx = sum_dx / static_cast<double>(M);
        T* d = dx->ptr() + off;
        for (std::size_t c = 0; c < cpg; ++c) {
          const double gm = gam[g * cpg + c];
          for (std::size_t j = 0; j < HW; ++j) {
            const std::size_t i = c * HW + j;
            d[i] += static_cast<T>(r * (gy[i] * gm - md - xh[i] * mdx));
          }
        }
      }
    }
  });
}

template <class T>
Var<T> silu(const Var<T>& x) {
  auto sig = std::make_shared<std::vector<T>>(x.value().numel());
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const T v = x.value()[i];
    const T s = T(1) / (T(1) + std::exp(-v));
    (*sig)[i] = s;
    out[i] = v * s;
  }
  return make_result<T>(std::move(out), {x}, [sig](Node<T>& self) {
    if (auto* d = grad_of(self, 0)) {
      const auto& xv = self.parents[0]->value;
      for (std::size_t i = 0; i < d->numel(); ++i) {
        const T s = (*sig)[i];
        (*d)[i] += self.grad[i] * s * (T(1) + xv[i] * (T(1) - s));
      }
    }
  });
}

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  require(as.size() == 4 && bs.size() == 4 && as[0] == bs[0] && as[2] == bs[2] && as[3] == bs[3],
          "concat_channels: incompatible shapes " + shape_string(as) + " and " + shape_string(bs));
  const std::size_t N = as[0], ca = as[1] * as[2] * as[3], cb = bs[1] * bs[2] * bs[3];
  Tensor<T> out({N, as[1] + bs[1], as[2], as[3]});
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(a.value().ptr() + n * ca, ca, out.ptr() + n * (ca + cb));
    std::copy_n(b.value().ptr() + n * cb, cb, out.ptr() + n * (ca + cb) + ca);
  }
  return make_result<T>(std::move(out), {a, b}, [N, ca, cb](Node<T>& self) {
    Tensor<T>* da = grad_of(self, 0);
    Tensor<T>* db = grad_of(self, 1);
    for (std::size_t n = 0; n < N; ++n) {
      const T* g = self.grad.ptr() + n * (ca + cb);
      if (da) {
        for (std::size_t i = 0; i < ca; ++i) (*da)[n * ca + i] += g[i];
      }
      if (db) {
        for (std::size_t i = 0; i < cb; ++i) (*db)[n * cb + i] += g[ca + i];
      }
    }
  });
}

template <class T>
Var<T> upsample_nearest2x(const Var<T>& x) {
  const auto& xs = x.shape();
  require(xs.size() == 4, "upsample_nearest2x expects NCHW input");
  const std::size_t planes = xs[0] * xs[1], H = xs[2], W = xs[3];
  Tensor<T> out({xs[0], xs[1], 2 * H, 2 * W});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.value().ptr() + p * H * W;
    T* dst = out.ptr() + p * 4 * H * W;
    for (std::size_t y = 0; y < 2 * H; ++y) {
      for (std::size_t xx = 0; xx < 2 * W; ++xx) dst[y * 2 * W + xx] = src[(y / 2) * W + xx / 2];
    }
  }
  return make_result<T>(std::move(out), {x}, [planes, H, W](Node<T>& self) {
    if (auto* d = grad_of(self, 0)) {
      for (std::size_t p = 0; p < planes; ++p) {
        const T* g = self.grad.ptr() + p * 4 * H * W;
        T* dst = d->ptr() + p * H * W;
        for (std::size_t y = 0; y < 2 * H; ++y) {
          for (std::size_t xx = 0; xx < 2 * W; ++xx) dst[(y / 2) * W + xx / 2] += g[y * 2 * W + xx];
        }
      }
    }
  });
}

template <class T>
Var<T> l1_loss(const Var<T>& pred, const Var<T>& target) {
  require(pred.shape() == target.shape(), "l1_loss: shape mismatch " + shape_string(pred.shape()) + " vs " +
                                              shape_string(target.shape()));
  const std::size_t N = pred.value().numel();
  require(N > 0, "l1_loss: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) acc += std::abs(static_cast<double>(pred.value()[i]) - target.value()[i]);
  const T value = static_cast<T>(acc / static_cast<double>(N));
  return make_result<T>(Tensor<T>({1}, {value}), {pred, target}, [N](Node<T>& self) {
    const auto& p = self.parents[0]->value;
    const auto& t = self.parents[1]->value;
    const T g = self.grad[0] / static_cast<T>(N);
    Tensor<T>* dp = grad_of(self, 0);
    Tensor<T>* dt = grad_of(self, 1);
    for (std::size_t i = 0; i < N; ++i) {
      const T s = p[i] > t[i] ? g : (p[i] < t[i] ? -g : T(0));
      if (dp) (*dp)[i] += s;
      if (dt) (*dt)[i] -= s;
    }
  });
}

template <class T>
Tensor<T> sinusoidal_embedding(std::span<const int> timesteps, std::size_t dim) {
  Tensor<T> out({timesteps.size(), dim});
  const std::size_t half = dim / 2;
  for (std::size_t n = 0; n < timesteps.size(); ++n) {
    for (std::size_t k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
      const double arg = static_cast<double>(timesteps[n]) * freq;
      out[n * dim + k] = static_cast<T>(std::sin(arg));
      out[n * dim + half + k] = static_cast<T>(std::cos(arg));
    }
  }
  return out;
}

#define CLIMDIFF_NN_OPS_INSTANTIATE(T)                                                        \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t); \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                     \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> scale<T>(const Var<T>&, T);                                                 \
  template Var<T> sum<T>(const Var<T>&);                                                      \
  template Var<T> add_channel_bias<T>(const Var<T>&, const Var<T>&);                          \
  template Var<T> group_norm<T>(const Var<T>&, std::size_t, const Var<T>&, const Var<T>&, T); \
  template Var<T> silu<T>(const Var<T>&);                                                     \
  template Var<T> concat_channels<T>(const Var<T>&, const Var<T>&);                           \
  template Var<T> upsample_nearest2x<T>(const Var<T>&);                                       \
  template Var<T> l1_loss<T>(const Var<T>&, const Var<T>&);                                   \
  template Tensor<T> sinusoidal_embedding<T>(std::span<const int>, std::size_t);

CLIMDIFF_NN_OPS_INSTANTIATE(float)
CLIMDIFF_NN_OPS_INSTANTIATE(double)

}  // namespace climdiff::nn
