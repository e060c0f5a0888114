#include "aerialtx/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "aerialtx/errors.hpp"

namespace aerialtx::nn {

namespace {

using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapF = Eigen::Map<MatF>;
using CMapF = Eigen::Map<const MatF>;

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

void require_rank(const Tensor& t, std::size_t rank, const char* name) {
  require(t.rank() == rank, std::string(name) + ": expected rank " + std::to_string(rank) + ", got " +
                                shape_str(t.shape()));
}

std::size_t out_extent(std::size_t n, std::size_t stride) { return (n + stride - 1) / stride; }

// Row (oy*Wo+ox), column ((ky*3+kx)*C + c).
MatF im2col3x3(const Tensor& x, std::size_t stride) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t ho = out_extent(h, stride), wo = out_extent(w, stride);
  MatF cols = MatF::Zero(static_cast<Eigen::Index>(ho * wo), static_cast<Eigen::Index>(9 * c));
  const float* src = x.data();
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      float* row = cols.data() + (oy * wo + ox) * 9 * c;
      for (int ky = 0; ky < 3; ++ky) {
        const long iy = static_cast<long>(oy * stride) + ky - 1;
        if (iy < 0 || iy >= static_cast<long>(h)) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const long ix = static_cast<long>(ox * stride) + kx - 1;
          if (ix < 0 || ix >= static_cast<long>(w)) continue;
          std::copy_n(src + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c, c,
                      row + (ky * 3 + kx) * c);
        }
      }
    }
  }
  return cols;
}

void col2im3x3(const MatF& cols, std::size_t stride, Tensor& dx) {
  const std::size_t h = dx.dim(0), w = dx.dim(1), c = dx.dim(2);
  const std::size_t ho = out_extent(h, stride), wo = out_extent(w, stride);
  float* dst = dx.data();
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      const float* row = cols.data() + (oy * wo + ox) * 9 * c;
      for (int ky = 0; ky < 3; ++ky) {
        const long iy = static_cast<long>(oy * stride) + ky - 1;
        if (iy < 0 || iy >= static_cast<long>(h)) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const long ix = static_cast<long>(ox * stride) + kx - 1;
          if (ix < 0 || ix >= static_cast<long>(w)) continue;
          float* d = dst + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c;
          const float* s = row + (ky * 3 + kx) * c;
          for (std::size_t ci = 0; ci < c; ++ci) d[ci] += s[ci];
        }
      }
    }
  }
}

struct TileGeometry {
  std::size_t k, rows, cols, channels;
};

TileGeometry tile_geometry(const Tensor& x, std::size_t k) {
  require_rank(x, 3, "block_linear");
  if (k == 0 || x.dim(0) % k != 0 || x.dim(1) % k != 0) {
    throw PartitionError("block size k=" + std::to_string(k) + " does not divide image " +
                         shape_str(x.shape()));
  }
  return {k, x.dim(0) / k, x.dim(1) / k, x.dim(2)};
}

// Tiles as rows of a (P x kkC) double matrix, row-major over the tile grid.
MatD gather_tiles(const Tensor& x, const TileGeometry& g) {
  const std::size_t n = g.k * g.k * g.channels;
  MatD t(static_cast<Eigen::Index>(g.rows * g.cols), static_cast<Eigen::Index>(n));
  const std::size_t w = x.dim(1);
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t c = 0; c < g.cols; ++c) {
      double* row = t.data() + (r * g.cols + c) * n;
      for (std::size_t i = 0; i < g.k; ++i) {
        const float* src = x.data() + ((r * g.k + i) * w + c * g.k) * g.channels;
        for (std::size_t j = 0; j < g.k * g.channels; ++j) row[i * g.k * g.channels + j] = src[j];
      }
    }
  }
  return t;
}

void scatter_tiles(const MatD& t, const TileGeometry& g, Tensor& x) {
  const std::size_t n = g.k * g.k * g.channels;
  const std::size_t w = x.dim(1);
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t c = 0; c < g.cols; ++c) {
      const double* row = t.data() + (r * g.cols + c) * n;
      for (std::size_t i = 0; i < g.k; ++i) {
        float* dst = x.data() + ((r * g.k + i) * w + c * g.k) * g.channels;
        for (std::size_t j = 0; j < g.k * g.channels; ++j)
          dst[j] = static_cast<float>(row[i * g.k * g.channels + j]);
      }
    }
  }
}

MatD to_double(const Tensor& t, std::size_t rows, std::size_t cols) {
  MatD m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows * cols; ++i) m.data()[i] = t[i];
  return m;
}

void accumulate(Tensor& dst, const MatD& m) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += static_cast<float>(m.data()[i]);
}

}  // namespace

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor* bias) {
  require_rank(w, 2, "dense weight");
  require(x.rank() == 1 || x.rank() == 2, "dense: input must be rank 1 or 2");
  const std::size_t out = w.dim(0), in = w.dim(1);
  const std::size_t batch = x.rank() == 1 ? 1 : x.dim(0);
  const std::size_t xin = x.rank() == 1 ? x.dim(0) : x.dim(1);
  require(xin == in, "dense: input extent " + std::to_string(xin) + " != weight inner extent " +
                         std::to_string(in));
  if (bias) require(bias->size() == out, "dense: bias length mismatch");
  Tensor y(x.rank() == 1 ? Shape{out} : Shape{batch, out});
  for (std::size_t b = 0; b < batch; ++b) {
    const float* xr = x.data() + b * in;
    for (std::size_t o = 0; o < out; ++o) {
      const float* wr = w.data() + o * in;
      double acc = bias ? (*bias)[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(wr[i]) * xr[i];
      y[b * out + o] = static_cast<float>(acc);
    }
  }
  return y;
}

Tensor dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor* dbias) {
  const std::size_t out = w.dim(0), in = w.dim(1);
  const std::size_t batch = x.rank() == 1 ? 1 : x.dim(0);
  require(dy.size() == batch * out, "dense backward: output gradient size mismatch");
  require(dw.shape() == w.shape(), "dense backward: weight gradient shape mismatch");
  Tensor dx(x.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const float* xr = x.data() + b * in;
    const float* g = dy.data() + b * out;
    for (std::size_t o = 0; o < out; ++o) {
      const float go = g[o];
      if (dbias) (*dbias)[o] += go;
      if (go == 0.0f) continue;
      float* dwr = dw.data() + o * in;
      const float* wr = w.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        dwr[i] += go * xr[i];
        dx[b * in + i] += go * wr[i];
      }
    }
  }
  return dx;
}

Tensor conv3x3_forward(const Tensor& x, const Tensor& w, std::size_t stride, const Tensor* bias) {
  require_rank(x, 3, "conv input");
  require_rank(w, 4, "conv weight");
  require(w.dim(0) == 3 && w.dim(1) == 3, "conv: kernel must be 3x3");
  require(w.dim(2) == x.dim(2), "conv: input channels " + std::to_string(x.dim(2)) +
                                    " != kernel channels " + std::to_string(w.dim(2)));
  require(stride >= 1, "conv: stride must be positive");
  const std::size_t cout = w.dim(3);
  const std::size_t ho = out_extent(x.dim(0), stride), wo = out_extent(x.dim(1), stride);
  const MatF cols = im2col3x3(x, stride);
  CMapF wm(w.data(), static_cast<Eigen::Index>(9 * x.dim(2)), static_cast<Eigen::Index>(cout));
  Tensor y({ho, wo, cout});
  MapF ym(y.data(), static_cast<Eigen::Index>(ho * wo), static_cast<Eigen::Index>(cout));
  ym.noalias() = cols * wm;
  if (bias) {
    require(bias->size() == cout, "conv: bias length mismatch");
    for (std::size_t p = 0; p < ho * wo; ++p)
      for (std::size_t c = 0; c < cout; ++c) y[p * cout + c] += (*bias)[c];
  }
  return y;
}

Tensor conv3x3_backward(const Tensor& x, const Tensor& w, std::size_t stride, const Tensor& dy,
                        Tensor& dw, Tensor* dbias) {
  const std::size_t cin = x.dim(2), cout = w.dim(3);
  const std::size_t ho = out_extent(x.dim(0), stride), wo = out_extent(x.dim(1), stride);
  require(dy.shape() == Shape({ho, wo, cout}), "conv backward: output gradient shape mismatch");
  require(dw.shape() == w.shape(), "conv backward: weight gradient shape mismatch");
  const MatF cols = im2col3x3(x, stride);
  CMapF dym(dy.data(), static_cast<Eigen::Index>(ho * wo), static_cast<Eigen::Index>(cout));
  MapF dwm(dw.data(), static_cast<Eigen::Index>(9 * cin), static_cast<Eigen::Index>(cout));
  dwm.noalias() += cols.transpose() * dym;
  if (dbias) {
    for (std::size_t p = 0; p < ho * wo; ++p)
      for (std::size_t c = 0; c < cout; ++c) (*dbias)[c] += dy[p * cout + c];
  }
  CMapF wm(w.data(), static_cast<Eigen::Index>(9 * cin), static_cast<Eigen::Index>(cout));
  MatF dcols = dym * wm.transpose();
  Tensor dx(x.shape());
  col2im3x3(dcols, stride, dx);
  return dx;
}

Tensor block_linear_forward(const Tensor& x, const Tensor& kernel) {
  require_rank(kernel, 4, "block_linear kernel");
  const std::size_t k = kernel.dim(0);
  require(kernel.dim(1) == k, "block_linear: kernel must be square");
  const TileGeometry g = tile_geometry(x, k);
  require(kernel.dim(2) == g.channels, "block_linear: kernel channels " + std::to_string(kernel.dim(2)) +
                                           " != image channels " + std::to_string(g.channels));
  const std::size_t m = kernel.dim(3);
  const std::size_t n = k * k * g.channels;
  const MatD tiles = gather_tiles(x, g);
  const MatD kmat = to_double(kernel, n, m);  // = Phi^T
  const MatD out = tiles * kmat;
  Tensor y({g.rows, g.cols, m});
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<float>(out.data()[i]);
  return y;
}

Tensor block_linear_forward_backward(const Tensor& x, const Tensor& kernel, const Tensor& dy,
                                     Tensor* dkernel) {
  const std::size_t k = kernel.dim(0);
  const TileGeometry g = tile_geometry(x, k);
  const std::size_t m = kernel.dim(3);
  const std::size_t n = k * k * g.channels;
  require(dy.shape() == Shape({g.rows, g.cols, m}), "block_linear backward: gradient shape mismatch");
  const MatD dym = to_double(dy, g.rows * g.cols, m);
  const MatD kmat = to_double(kernel, n, m);
  if (dkernel) {
    require(dkernel->shape() == kernel.shape(), "block_linear backward: kernel gradient shape");
    const MatD tiles = gather_tiles(x, g);
    accumulate(*dkernel, MatD(tiles.transpose() * dym));
  }
  const MatD dtiles = dym * kmat.transpose();
  Tensor dx(x.shape());
  scatter_tiles(dtiles, g, dx);
  return dx;
}

Tensor block_linear_transpose(const Tensor& y, const Tensor& kernel) {
  require_rank(y, 3, "block_linear_transpose input");
  require_rank(kernel, 4, "block_linear_transpose kernel");
  const std::size_t k = kernel.dim(0), m = kernel.dim(2), c = kernel.dim(3);
  require(kernel.dim(1) == k, "block_linear_transpose: kernel must be square");
  require(y.dim(2) == m, "block_linear_transpose: measurement extent " + std::to_string(y.dim(2)) +
                             " != kernel extent " + std::to_string(m));
  const TileGeometry g{k, y.dim(0), y.dim(1), c};
  const std::size_t n = k * k * c;
  const MatD psi = MatD::Map(transpose_kernel_to_matrix(kernel).data(), static_cast<Eigen::Index>(n),
                             static_cast<Eigen::Index>(m));
  const MatD ym = to_double(y, g.rows * g.cols, m);
  const MatD tiles = ym * psi.transpose();
  Tensor x({g.rows * k, g.cols * k, c});
  scatter_tiles(tiles, g, x);
  return x;
}

Tensor block_linear_transpose_backward(const Tensor& y, const Tensor& kernel, const Tensor& dx,
                                       Tensor* dkernel) {
  const std::size_t k = kernel.dim(0), m = kernel.dim(2), c = kernel.dim(3);
  const TileGeometry g{k, y.dim(0), y.dim(1), c};
  require(dx.shape() == Shape({g.rows * k, g.cols * k, c}),
          "block_linear_transpose backward: gradient shape mismatch");
  const std::size_t n = k * k * c;
  const MatD dtiles = gather_tiles(dx, g);  // P x n
  const MatD psi = MatD::Map(transpose_kernel_to_matrix(kernel).data(), static_cast<Eigen::Index>(n),
                             static_cast<Eigen::Index>(m));
  if (dkernel) {
    require(dkernel->shape() == kernel.shape(), "block_linear_transpose backward: kernel gradient shape");
    const MatD ym = to_double(y, g.rows * g.cols, m);
    const MatD dpsi = dtiles.transpose() * ym;  // n x m
    std::vector<double> flat(dpsi.data(), dpsi.data() + dpsi.size());
    *dkernel += matrix_to_transpose_kernel(flat, k, m, c);
  }
  const MatD dy = dtiles * psi;
  Tensor out(y.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(dy.data()[i]);
  return out;
}

std::vector<double> forward_kernel_to_matrix(const Tensor& kernel) {
  require_rank(kernel, 4, "forward kernel");
  const std::size_t n = kernel.dim(0) * kernel.dim(1) * kernel.dim(2), m = kernel.dim(3);
  std::vector<double> phi(m * n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t q = 0; q < m; ++q) phi[q * n + r] = kernel[r * m + q];
  return phi;
}

Tensor matrix_to_forward_kernel(const std::vector<double>& phi, std::size_t k, std::size_t channels,
                                std::size_t m) {
  const std::size_t n = k * k * channels;
  require(phi.size() == m * n, "forward kernel matrix size mismatch");
  Tensor kernel({k, k, channels, m});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t q = 0; q < m; ++q) kernel[r * m + q] = static_cast<float>(phi[q * n + r]);
  return kernel;
}

std::vector<double> transpose_kernel_to_matrix(const Tensor& kernel) {
  require_rank(kernel, 4, "transpose kernel");
  const std::size_t k = kernel.dim(0), m = kernel.dim(2), c = kernel.dim(3);
  const std::size_t n = k * k * c;
  std::vector<double> psi(n * m);
  for (std::size_t ij = 0; ij < k * k; ++ij)
    for (std::size_t q = 0; q < m; ++q)
      for (std::size_t ch = 0; ch < c; ++ch) psi[(ij * c + ch) * m + q] = kernel[(ij * m + q) * c + ch];
  return psi;
}

Tensor matrix_to_transpose_kernel(const std::vector<double>& psi, std::size_t k, std::size_t m,
                                  std::size_t channels) {
  const std::size_t n = k * k * channels;
  require(psi.size() == n * m, "transpose kernel matrix size mismatch");
  Tensor kernel({k, k, m, channels});
  for (std::size_t ij = 0; ij < k * k; ++ij)
    for (std::size_t q = 0; q < m; ++q)
      for (std::size_t ch = 0; ch < channels; ++ch)
        kernel[(ij * m + q) * channels + ch] = static_cast<float>(psi[(ij * channels + ch) * m + q]);
  return kernel;
}

namespace {
thread_local KinkProbe* active_probe = nullptr;
}

KinkProbe::KinkProbe() : outer_(active_probe) { active_probe = this; }
KinkProbe::~KinkProbe() { active_probe = outer_; }

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0.0f ? v : 0.0f;
  if (active_probe) {
    std::uint64_t h = active_probe->hash;
    for (float v : x.values()) h = (h ^ (v > 0.0f ? 0x9Eu : 0x35u)) * 1099511628211ull;
    active_probe->hash = h;
  }
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  require(x.shape() == dy.shape(), "relu backward: shape mismatch");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
  return dx;
}

Tensor maxpool2_forward(const Tensor& x) {
  require_rank(x, 3, "maxpool input");
  require(x.dim(0) % 2 == 0 && x.dim(1) % 2 == 0, "maxpool: spatial extents must be even");
  const std::size_t ho = x.dim(0) / 2, wo = x.dim(1) / 2, c = x.dim(2);
  Tensor y({ho, wo, c});
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox)
      for (std::size_t ch = 0; ch < c; ++ch) {
        float m = x.at(2 * oy, 2 * ox, ch);
        m = std::max(m, x.at(2 * oy, 2 * ox + 1, ch));
        m = std::max(m, x.at(2 * oy + 1, 2 * ox, ch));
        m = std::max(m, x.at(2 * oy + 1, 2 * ox + 1, ch));
        y.at(oy, ox, ch) = m;
      }
  return y;
}

Tensor maxpool2_backward(const Tensor& x, const Tensor& dy) {
  const std::size_t ho = x.dim(0) / 2, wo = x.dim(1) / 2, c = x.dim(2);
  require(dy.shape() == Shape({ho, wo, c}), "maxpool backward: shape mismatch");
  Tensor dx(x.shape());
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox)
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t by = 2 * oy, bx = 2 * ox;
        float best = x.at(by, bx, ch);
        for (std::size_t dy2 = 0; dy2 < 2; ++dy2)
          for (std::size_t dx2 = 0; dx2 < 2; ++dx2) {
            const float v = x.at(2 * oy + dy2, 2 * ox + dx2, ch);
            if (v > best) {
              best = v;
              by = 2 * oy + dy2;
              bx = 2 * ox + dx2;
            }
          }
        dx.at(by, bx, ch) += dy.at(oy, ox, ch);
      }
  return dx;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 3, "global_avg_pool input");
  const std::size_t hw = x.dim(0) * x.dim(1), c = x.dim(2);
  std::vector<double> acc(c, 0.0);
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += x[p * c + ch];
  Tensor y({c});
  for (std::size_t ch = 0; ch < c; ++ch) y[ch] = static_cast<float>(acc[ch] / static_cast<double>(hw));
  return y;
}

Tensor global_avg_pool_backward(const Shape& x_shape, const Tensor& dy) {
  Tensor dx(x_shape);
  const std::size_t hw = x_shape[0] * x_shape[1], c = x_shape[2];
  require(dy.size() == c, "global_avg_pool backward: shape mismatch");
  const float inv = 1.0f / static_cast<float>(hw);
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) dx[p * c + ch] = dy[ch] * inv;
  return dx;
}

Tensor global_max_pool(const Tensor& x) {
  require_rank(x, 3, "global_max_pool input");
  const std::size_t hw = x.dim(0) * x.dim(1), c = x.dim(2);
  Tensor y({c}, -std::numeric_limits<float>::infinity());
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) y[ch] = std::max(y[ch], x[p * c + ch]);
  return y;
}

Tensor global_max_pool_backward(const Tensor& x, const Tensor& dy) {
  const std::size_t hw = x.dim(0) * x.dim(1), c = x.dim(2);
  require(dy.size() == c, "global_max_pool backward: shape mismatch");
  Tensor dx(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::size_t best = 0;
    for (std::size_t p = 1; p < hw; ++p)
      if (x[p * c + ch] > x[best * c + ch]) best = p;
    dx[best * c + ch] = dy[ch];
  }
  return dx;
}

float sigmoid(float z) {
  if (z >= 0.0f) return 1.0f / (1.0f + std::exp(-z));
  const float e = std::exp(z);
  return e / (1.0f + e);
}

Tensor softmax(const Tensor& logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (float v : logits.values()) mx = std::max(mx, static_cast<double>(v));
  double sum = 0.0;
  std::vector<double> e(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::exp(static_cast<double>(logits[i]) - mx);
    sum += e[i];
  }
  Tensor p(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = static_cast<float>(e[i] / sum);
  return p;
}

double softmax_cross_entropy(const Tensor& logits, std::size_t label, Tensor* dlogits) {
  require(label < logits.size(), "cross entropy: label out of range");
  double mx = -std::numeric_limits<double>::infinity();
  for (float v : logits.values()) mx = std::max(mx, static_cast<double>(v));
  double sum = 0.0;
  for (float v : logits.values()) sum += std::exp(static_cast<double>(v) - mx);
  const double log_z = mx + std::log(sum);
  if (dlogits) {
    *dlogits = Tensor(logits.shape());
    for (std::size_t i = 0; i < logits.size(); ++i) {
      (*dlogits)[i] = static_cast<float>(std::exp(static_cast<double>(logits[i]) - log_z) -
                                         (i == label ? 1.0 : 0.0));
    }
  }
  return log_z - logits[label];
}

double mse(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mse: shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return a.size() ? s / static_cast<double>(a.size()) : 0.0;
}

double half_mse_loss(const Tensor& a, const Tensor& b, Tensor* da) {
  const double loss = 0.5 * mse(a, b);
  if (da) {
    *da = Tensor(a.shape());
    const double inv = 1.0 / static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      (*da)[i] = static_cast<float>((static_cast<double>(a[i]) - b[i]) * inv);
  }
  return loss;
}

}  // namespace aerialtx::nn
