#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

#include "aerialtx/nn/tensor.hpp"

// Fixed set of differentiable layers. Every forward has a matching backward
// that returns the input gradient and accumulates parameter gradients into
// caller-owned tensors. Backward passes recompute what they need from the
// forward inputs instead of caching intermediates.
namespace aerialtx::nn {

// x: [in] or [batch, in]; w: [out, in]; bias: [out] or null.
Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor* bias = nullptr);
Tensor dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw,
                      Tensor* dbias = nullptr);

// 3x3 convolution with zero padding 1. x: [H, W, Cin]; w: [3, 3, Cin, Cout].
// Output is [ceil(H/stride), ceil(W/stride), Cout].
Tensor conv3x3_forward(const Tensor& x, const Tensor& w, std::size_t stride = 1,
                       const Tensor* bias = nullptr);
Tensor conv3x3_backward(const Tensor& x, const Tensor& w, std::size_t stride, const Tensor& dy,
                        Tensor& dw, Tensor* dbias = nullptr);

// Non-overlapping k x k linear map (convolution with stride k, no bias).
// x: [H, W, C]; kernel: [k, k, C, m]; output: [H/k, W/k, m].
Tensor block_linear_forward(const Tensor& x, const Tensor& kernel);
// Gradient w.r.t. x; accumulates into dkernel when non-null.
Tensor block_linear_forward_backward(const Tensor& x, const Tensor& kernel, const Tensor& dy,
                                     Tensor* dkernel);

// Transposed stride-k map. y: [H/k, W/k, m]; kernel: [k, k, m, C]; output [H, W, C].
Tensor block_linear_transpose(const Tensor& y, const Tensor& kernel);
Tensor block_linear_transpose_backward(const Tensor& y, const Tensor& kernel, const Tensor& dx,
                                       Tensor* dkernel);

// Kernel <-> flat matrix views. Forward kernel [k,k,C,m] -> Phi (m x kkC);
// transpose kernel [k,k,m,C] -> Psi (kkC x m). Row-major float vectors.
std::vector<double> forward_kernel_to_matrix(const Tensor& kernel);
Tensor matrix_to_forward_kernel(const std::vector<double>& phi, std::size_t k, std::size_t channels,
                                std::size_t m);
std::vector<double> transpose_kernel_to_matrix(const Tensor& kernel);
Tensor matrix_to_transpose_kernel(const std::vector<double>& psi, std::size_t k, std::size_t m,
                                  std::size_t channels);

Tensor relu(const Tensor& x);

// While a KinkProbe is alive on this thread, relu folds the sign pattern of
// its inputs into `hash`. Finite differences whose two evaluations produce
// different patterns straddle a kink and are not comparable to the gradient.
struct KinkProbe {
  std::uint64_t hash = 1469598103934665603ull;
  KinkProbe();
  ~KinkProbe();
  KinkProbe(const KinkProbe&) = delete;
  KinkProbe& operator=(const KinkProbe&) = delete;
 private:
  KinkProbe* outer_;
};
Tensor relu_backward(const Tensor& x, const Tensor& dy);

// 2x2 max pooling, stride 2; H and W must be even.
Tensor maxpool2_forward(const Tensor& x);
Tensor maxpool2_backward(const Tensor& x, const Tensor& dy);

// [H, W, C] -> [C]
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Shape& x_shape, const Tensor& dy);
Tensor global_max_pool(const Tensor& x);
Tensor global_max_pool_backward(const Tensor& x, const Tensor& dy);

float sigmoid(float z);
Tensor softmax(const Tensor& logits);
// Returns -log softmax(logits)[label]; writes dL/dlogits when requested.
double softmax_cross_entropy(const Tensor& logits, std::size_t label, Tensor* dlogits = nullptr);

// Mean of squared differences over all elements.
double mse(const Tensor& a, const Tensor& b);
// Loss 0.5 * mean((a-b)^2); returns loss and writes d/da.
double half_mse_loss(const Tensor& a, const Tensor& b, Tensor* da);

}  // namespace aerialtx::nn
