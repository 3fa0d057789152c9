#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cpr/tensor.hpp"

// Forward and hand-derived backward passes for the layers the encoders use.
// Backward functions return the input gradient and *accumulate* parameter
// gradients into the caller's buffers, so a parameter used on several paths
// (the shared main block) sums its contributions naturally.
namespace cpr::nn {

// y = x W + b.  x: [N,in], W: [in,out], b: [out].
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw,
                       Tensor& db);

inline constexpr double kEluAlpha = 1.0;
Tensor elu_forward(const Tensor& x);
Tensor elu_backward(const Tensor& x, const Tensor& dy);

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
  Tensor normalized;            // (x - mean) / sqrt(var + eps), per row
  std::vector<double> inv_std;  // one per row
};

// Per-row layer normalisation with population variance (1/D).
Tensor layernorm_forward(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         LayerNormCache* cache = nullptr);
Tensor layernorm_backward(const LayerNormCache& cache, const Tensor& gain, const Tensor& dy,
                          Tensor& dgain, Tensor& dbias);

// Mean of the first `valid` rows of x ([R,E] -> [E]). valid == 0 throws kEmptySet.
Tensor masked_mean_forward(const Tensor& x, std::size_t valid);
// Each of the first `valid` rows receives dy / valid; the rest receive zero.
Tensor masked_mean_backward(const Tensor& dy, std::size_t rows, std::size_t valid);

// Width-3, stride-1, zero-padded convolution along the row axis.
// x: [L,Cin], w: [3,Cin,Cout], b: [Cout] -> [L,Cout].
Tensor conv1d_forward(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor conv1d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw,
                       Tensor& db);

// dot(u,v) / (|u| |v|). Zero vectors throw kZeroVector.
double cosine_sim(std::span<const double> u, std::span<const double> v);
// Accumulates d(cos)/du * dsim into du and likewise for dv.
void cosine_sim_backward(std::span<const double> u, std::span<const double> v, double dsim,
                         std::span<double> du, std::span<double> dv);

// Divides each row by its L2 norm; `norms` receives the pre-normalisation norms.
Tensor l2_normalize_rows(const Tensor& x, std::vector<double>* norms = nullptr);
Tensor l2_normalize_rows_backward(const Tensor& y, const std::vector<double>& norms,
                                  const Tensor& dy);

// S[i][j] = cosine_sim(a_i, b_j).  a: [N,E], b: [M,E] -> [N,M].
Tensor cosine_matrix(const Tensor& a, const Tensor& b);
// Accumulates into da, db. Entries with dS == 0 contribute nothing and are skipped.
void cosine_matrix_backward(const Tensor& a, const Tensor& b, const Tensor& s, const Tensor& ds,
                            Tensor& da, Tensor& db);

}  // namespace cpr::nn
