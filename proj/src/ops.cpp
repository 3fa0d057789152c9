#include "cpr/ops.hpp"

#include <cmath>
#include <string>

#include "cpr/error.hpp"

namespace cpr::nn {
namespace {

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw Error(Errc::kShapeMismatch, std::string(op) + ": " + detail);
}

std::vector<double> row_norms(const Tensor& x) {
  std::vector<double> norms(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v * v;
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) throw Error(Errc::kZeroVector, "row " + std::to_string(i));
  }
  return norms;
}

}  // namespace

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 2 && w.rank() == 2 && b.rank() == 1, "linear", "expects x[N,in] W[in,out] b[out]");
  const std::size_t n = x.rows(), in = x.cols(), out = w.cols();
  require(w.rows() == in && b.size() == out, "linear", "dimension mismatch");
  Tensor y = Tensor::matrix(n, out);
  for (std::size_t i = 0; i < n; ++i) {
    double* yr = y.data() + i * out;
    for (std::size_t o = 0; o < out; ++o) yr[o] = b[o];
    const double* xr = x.data() + i * in;
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xr[k];
      if (xv == 0.0) continue;
      const double* wr = w.data() + k * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wr[o];
    }
  }
  require_finite(y, "linear");
  return y;
}

Tensor linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw,
                       Tensor& db) {
  const std::size_t n = x.rows(), in = x.cols(), out = w.cols();
  require(dy.rows() == n && dy.cols() == out, "linear_backward", "dy shape");
  require_same_shape(dw, w, "linear_backward dw");
  Tensor dx = Tensor::matrix(n, in);
  for (std::size_t i = 0; i < n; ++i) {
    const double* dyr = dy.data() + i * out;
    const double* xr = x.data() + i * in;
    double* dxr = dx.data() + i * in;
    for (std::size_t o = 0; o < out; ++o) db[o] += dyr[o];
    for (std::size_t k = 0; k < in; ++k) {
      const double* wr = w.data() + k * out;
      double* dwr = dw.data() + k * out;
      const double xv = xr[k];
      double acc = 0.0;
      for (std::size_t o = 0; o < out; ++o) {
        acc += dyr[o] * wr[o];
        dwr[o] += xv * dyr[o];
      }
      dxr[k] = acc;
    }
  }
  return dx;
}

Tensor elu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) {
    if (v < 0.0) v = kEluAlpha * std::expm1(v);
  }
  return y;
}

Tensor elu_backward(const Tensor& x, const Tensor& dy) {
  require_same_shape(x, dy, "elu_backward");
  Tensor dx = dy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0.0) dx[i] *= kEluAlpha * std::exp(x[i]);
  }
  return dx;
}

Tensor layernorm_forward(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         LayerNormCache* cache) {
  require(x.rank() == 2, "layernorm", "expects a matrix");
  const std::size_t n = x.rows(), d = x.cols();
  require(d >= 1 && gain.size() == d && bias.size() == d, "layernorm", "gain/bias length");
  Tensor xhat = Tensor::matrix(n, d);
  std::vector<double> inv_std(n);
  Tensor y = Tensor::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xr = x.row(i);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[i] = inv;
    auto hr = xhat.row(i);
    auto yr = y.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      hr[j] = (xr[j] - mean) * inv;
      yr[j] = hr[j] * gain[j] + bias[j];
    }
  }
  require_finite(y, "layernorm");
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Tensor layernorm_backward(const LayerNormCache& cache, const Tensor& gain, const Tensor& dy,
                          Tensor& dgain, Tensor& dbias) {
  const Tensor& xhat = cache.normalized;
  require_same_shape(xhat, dy, "layernorm_backward");
  const std::size_t n = xhat.rows(), d = xhat.cols();
  const double inv_d = 1.0 / static_cast<double>(d);
  Tensor dx = Tensor::matrix(n, d);
  std::vector<double> dxhat(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto hr = xhat.row(i);
    const auto dyr = dy.row(i);
    double sum = 0.0, sum_h = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dgain[j] += dyr[j] * hr[j];
      dbias[j] += dyr[j];
      dxhat[j] = dyr[j] * gain[j];
      sum += dxhat[j];
      sum_h += dxhat[j] * hr[j];
    }
    auto dxr = dx.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      dxr[j] = cache.inv_std[i] * (dxhat[j] - inv_d * sum - hr[j] * inv_d * sum_h);
    }
  }
  return dx;
}

Tensor masked_mean_forward(const Tensor& x, std::size_t valid) {
  if (valid == 0) throw Error(Errc::kEmptySet, "masked mean over zero rows");
  require(x.rank() == 2 && valid <= x.rows(), "masked_mean", "valid count exceeds rows");
  const std::size_t e = x.cols();
  Tensor y = Tensor::vector(e);
  for (std::size_t r = 0; r < valid; ++r) {
    const auto xr = x.row(r);
    for (std::size_t j = 0; j < e; ++j) y[j] += xr[j];
  }
  const double inv = 1.0 / static_cast<double>(valid);
  for (double& v : y.values()) v *= inv;
  return y;
}

Tensor masked_mean_backward(const Tensor& dy, std::size_t rows, std::size_t valid) {
  if (valid == 0) throw Error(Errc::kEmptySet, "masked mean over zero rows");
  require(valid <= rows, "masked_mean_backward", "valid count exceeds rows");
  const std::size_t e = dy.size();
  Tensor dx = Tensor::matrix(rows, e);
  const double inv = 1.0 / static_cast<double>(valid);
  for (std::size_t r = 0; r < valid; ++r) {
    auto dxr = dx.row(r);
    for (std::size_t j = 0; j < e; ++j) dxr[j] = dy[j] * inv;
  }
  return dx;
}

Tensor conv1d_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 2 && w.rank() == 3 && w.shape()[0] == 3, "conv1d",
          "expects x[L,Cin] w[3,Cin,Cout]");
  const std::size_t len = x.rows(), cin = x.cols(), cout = w.shape()[2];
  require(w.shape()[1] == cin && b.size() == cout, "conv1d", "channel mismatch");
  Tensor y = Tensor::matrix(len, cout);
  for (std::size_t t = 0; t < len; ++t) {
    double* yr = y.data() + t * cout;
    for (std::size_t o = 0; o < cout; ++o) yr[o] = b[o];
    for (std::size_t tap = 0; tap < 3; ++tap) {
      // Tap 0 reads row t-1, tap 1 row t, tap 2 row t+1.
      if ((tap == 0 && t == 0) || (tap == 2 && t + 1 >= len)) continue;
      const double* xr = x.data() + (t + tap - 1) * cin;
      const double* wt = w.data() + tap * cin * cout;
      for (std::size_t c = 0; c < cin; ++c) {
        const double xv = xr[c];
        if (xv == 0.0) continue;
        const double* wr = wt + c * cout;
        for (std::size_t o = 0; o < cout; ++o) yr[o] += xv * wr[o];
      }
    }
  }
  require_finite(y, "conv1d");
  return y;
}

Tensor conv1d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw,
                       Tensor& db) {
  const std::size_t len = x.rows(), cin = x.cols(), cout = w.shape()[2];
  require(dy.rows() == len && dy.cols() == cout, "conv1d_backward", "dy shape");
  require_same_shape(dw, w, "conv1d_backward dw");
  Tensor dx = Tensor::matrix(len, cin);
  for (std::size_t t = 0; t < len; ++t) {
    const double* dyr = dy.data() + t * cout;
    for (std::size_t o = 0; o < cout; ++o) db[o] += dyr[o];
    for (std::size_t tap = 0; tap < 3; ++tap) {
      if ((tap == 0 && t == 0) || (tap == 2 && t + 1 >= len)) continue;
      const std::size_t src = t + tap - 1;
      const double* xr = x.data() + src * cin;
      double* dxr = dx.data() + src * cin;
      const double* wt = w.data() + tap * cin * cout;
      double* dwt = dw.data() + tap * cin * cout;
      for (std::size_t c = 0; c < cin; ++c) {
        const double* wr = wt + c * cout;
        double* dwr = dwt + c * cout;
        const double xv = xr[c];
        double acc = 0.0;
        for (std::size_t o = 0; o < cout; ++o) {
          acc += dyr[o] * wr[o];
          dwr[o] += xv * dyr[o];
        }
        dxr[c] += acc;
      }
    }
  }
  return dx;
}

double cosine_sim(std::span<const double> u, std::span<const double> v) {
  require(u.size() == v.size(), "cosine_sim", "length mismatch");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw Error(Errc::kZeroVector, "cosine of a zero vector");
  return dot / (std::sqrt(uu) * std::sqrt(vv));
}

void cosine_sim_backward(std::span<const double> u, std::span<const double> v, double dsim,
                         std::span<double> du, std::span<double> dv) {
  double uu = 0.0, vv = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw Error(Errc::kZeroVector, "cosine of a zero vector");
  const double nu = std::sqrt(uu), nv = std::sqrt(vv);
  const double cos = dot / (nu * nv);
  for (std::size_t i = 0; i < u.size(); ++i) {
    du[i] += dsim * (v[i] / (nu * nv) - cos * u[i] / uu);
    dv[i] += dsim * (u[i] / (nu * nv) - cos * v[i] / vv);
  }
}

Tensor l2_normalize_rows(const Tensor& x, std::vector<double>* norms) {
  std::vector<double> n = row_norms(x);
  Tensor y = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double inv = 1.0 / n[i];
    for (double& v : y.row(i)) v *= inv;
  }
  if (norms) *norms = std::move(n);
  return y;
}

Tensor l2_normalize_rows_backward(const Tensor& y, const std::vector<double>& norms,
                                  const Tensor& dy) {
  require_same_shape(y, dy, "l2_normalize_backward");
  Tensor dx = Tensor::matrix(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const auto yr = y.row(i);
    const auto dyr = dy.row(i);
    double proj = 0.0;
    for (std::size_t j = 0; j < yr.size(); ++j) proj += dyr[j] * yr[j];
    auto dxr = dx.row(i);
    for (std::size_t j = 0; j < yr.size(); ++j) dxr[j] = (dyr[j] - proj * yr[j]) / norms[i];
  }
  return dx;
}

Tensor cosine_matrix(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.cols(), "cosine_matrix",
          "embedding widths differ");
  const Tensor an = l2_normalize_rows(a);
  const Tensor bn = l2_normalize_rows(b);
  const std::size_t n = a.rows(), m = b.rows(), e = a.cols();
  Tensor s = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ar = an.data() + i * e;
    double* sr = s.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* br = bn.data() + j * e;
      double dot = 0.0;
      for (std::size_t k = 0; k < e; ++k) dot += ar[k] * br[k];
      sr[j] = dot;
    }
  }
  return s;
}

void cosine_matrix_backward(const Tensor& a, const Tensor& b, const Tensor& s, const Tensor& ds,
                            Tensor& da, Tensor& db) {
  require_same_shape(s, ds, "cosine_matrix_backward");
  require_same_shape(a, da, "cosine_matrix_backward da");
  require_same_shape(b, db, "cosine_matrix_backward db");
  std::vector<double> na, nb;
  const Tensor an = l2_normalize_rows(a, &na);
  const Tensor bn = l2_normalize_rows(b, &nb);
  const std::size_t n = a.rows(), m = b.rows(), e = a.cols();
  // d cos(a,b) / da = (b_hat - cos * a_hat) / |a|, symmetric for b.
  std::vector<double> gb_coef(m, 0.0);
  Tensor gb = Tensor::matrix(m, e);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ahat = an.data() + i * e;
    double* dar = da.data() + i * e;
    double coef_a = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double g = ds(i, j);
      if (g == 0.0) continue;
      const double* bhat = bn.data() + j * e;
      const double inv_na = g / na[i];
      for (std::size_t k = 0; k < e; ++k) dar[k] += inv_na * bhat[k];
      coef_a += g * s(i, j);
      double* gbr = gb.data() + j * e;
      for (std::size_t k = 0; k < e; ++k) gbr[k] += g * ahat[k];
      gb_coef[j] += g * s(i, j);
    }
    for (std::size_t k = 0; k < e; ++k) dar[k] -= coef_a * ahat[k] / na[i];
  }
  for (std::size_t j = 0; j < m; ++j) {
    const double* bhat = bn.data() + j * e;
    const double* gbr = gb.data() + j * e;
    double* dbr = db.data() + j * e;
    for (std::size_t k = 0; k < e; ++k) dbr[k] += (gbr[k] - gb_coef[j] * bhat[k]) / nb[j];
  }
}

}  // namespace cpr::nn
