#include "moma/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace moma::nn {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor: dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void check_2d(const Tensor& t, const char* op) {
  if (t.shape().size() > 2) {
    throw std::invalid_argument(std::string(op) + ": expected 1-D or 2-D tensor");
  }
}

}  // namespace

Tensor Tensor::wrap(std::shared_ptr<Impl> impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw std::logic_error("tensor: use of undefined tensor");
  return *impl_;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto impl = std::make_shared<Impl>();
  std::size_t n = shape_numel(shape);
  impl->shape = std::move(shape);
  impl->data.assign(n, 0.0);
  impl->requires_grad = requires_grad;
  return wrap(std::move(impl));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> values,
                         bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor: value count does not match shape");
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return wrap(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const std::vector<int>& Tensor::shape() const { return impl().shape; }

int Tensor::rows() const {
  const auto& s = impl().shape;
  return s.size() == 2 ? s[0] : 1;
}

int Tensor::cols() const {
  const auto& s = impl().shape;
  if (s.empty()) return 1;
  return s.size() == 2 ? s[1] : s[0];
}

std::size_t Tensor::numel() const { return impl().data.size(); }

bool Tensor::requires_grad() const { return impl().requires_grad; }

void Tensor::set_requires_grad(bool v) { impl().requires_grad = v; }

std::vector<double>& Tensor::values() const { return impl().data; }

bool Tensor::has_grad() const { return !impl().grad.empty(); }

std::vector<double>& Tensor::grad() const {
  auto& im = impl();
  if (im.grad.empty()) im.grad.assign(im.data.size(), 0.0);
  return im.grad;
}

void Tensor::zero_grad() const {
  auto& im = impl();
  im.grad.assign(im.data.size(), 0.0);
}

void Tensor::clear_grad() const { impl().grad.clear(); }

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("tensor: item() on non-scalar");
  return impl().data[0];
}

double Tensor::at(int r, int c) const {
  return impl().data[static_cast<std::size_t>(r) * cols() + c];
}

double& Tensor::at(int r, int c) {
  return impl().data[static_cast<std::size_t>(r) * cols() + c];
}

Tensor Tensor::clone() const {
  auto impl_copy = std::make_shared<Impl>();
  impl_copy->shape = impl().shape;
  impl_copy->data = impl().data;
  impl_copy->requires_grad = impl().requires_grad;
  return wrap(std::move(impl_copy));
}

bool Tensor::all_finite() const {
  for (double v : impl().data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Tape

void Tape::clear() {
  nodes_.clear();
  backward_ran_ = false;
}

bool Tape::track(std::initializer_list<const Tensor*> inputs) const {
  if (!grad_enabled_) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void Tape::record(std::function<void()> fn) { nodes_.push_back({std::move(fn)}); }

void Tape::backward(const Tensor& loss) {
  if (backward_ran_) {
    throw std::logic_error("tape: backward called twice without clear()");
  }
  if (!loss.is_scalar()) {
    throw std::invalid_argument("tape: backward requires a scalar loss");
  }
  backward_ran_ = true;
  Tensor l = loss;
  l.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward();
  }
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions disagree");
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n}, track({&a, &b}));
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const std::size_t brow = static_cast<std::size_t>(p) * n;
      const std::size_t orow = static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) ov[orow + j] += aip * bv[brow + j];
    }
  }
  if (out.requires_grad()) {
    record([a, b, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const auto& og = out.grad();
      if (a.requires_grad()) {
        auto& ag = a.grad();
        const auto& bv2 = b.values();
        for (int i = 0; i < m; ++i) {
          for (int p = 0; p < k; ++p) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) {
              acc += og[static_cast<std::size_t>(i) * n + j] *
                     bv2[static_cast<std::size_t>(p) * n + j];
            }
            ag[static_cast<std::size_t>(i) * k + p] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        auto& bg = b.grad();
        const auto& av2 = a.values();
        for (int p = 0; p < k; ++p) {
          for (int i = 0; i < m; ++i) {
            const double aip = av2[static_cast<std::size_t>(i) * k + p];
            if (aip == 0.0) continue;
            for (int j = 0; j < n; ++j) {
              bg[static_cast<std::size_t>(p) * n + j] +=
                  aip * og[static_cast<std::size_t>(i) * n + j];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("add: shape mismatch");
  Tensor out = Tensor::zeros(a.shape(), track({&a, &b}));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] + b.values()[i];
  if (out.requires_grad()) {
    record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const auto& og = out.grad();
      if (a.requires_grad()) {
        auto& ag = a.grad();
        for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i];
      }
      if (b.requires_grad()) {
        auto& bg = b.grad();
        for (std::size_t i = 0; i < og.size(); ++i) bg[i] += og[i];
      }
    });
  }
  return out;
}

Tensor Tape::add_bias(const Tensor& x, const Tensor& bias) {
  check_2d(x, "add_bias");
  if (bias.shape().size() != 1 || bias.cols() != x.cols()) {
    throw std::invalid_argument("add_bias: bias must match last dimension");
  }
  const int m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros(x.shape(), track({&x, &bias}));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      out.values()[static_cast<std::size_t>(i) * n + j] =
          x.values()[static_cast<std::size_t>(i) * n + j] + bias.values()[j];
    }
  }
  if (out.requires_grad()) {
    record([x, bias, out, m, n]() mutable {
      if (!out.has_grad()) return;
      const auto& og = out.grad();
      if (x.requires_grad()) {
        auto& xg = x.grad();
        for (std::size_t i = 0; i < og.size(); ++i) xg[i] += og[i];
      }
      if (bias.requires_grad()) {
        auto& bg = bias.grad();
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < n; ++j) bg[j] += og[static_cast<std::size_t>(i) * n + j];
        }
      }
    });
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("mul: shape mismatch");
  Tensor out = Tensor::zeros(a.shape(), track({&a, &b}));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * b.values()[i];
  if (out.requires_grad()) {
    record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const auto& og = out.grad();
      if (a.requires_grad()) {
        auto& ag = a.grad();
        for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i] * b.values()[i];
      }
      if (b.requires_grad()) {
        auto& bg = b.grad();
        for (std::size_t i = 0; i < og.size(); ++i) bg[i] += og[i] * a.values()[i];
      }
    });
  }
  return out;
}

Tensor Tape::scale(const Tensor& a, double s) {
  Tensor out = Tensor::zeros(a.shape(), track({&a}));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * s;
  if (out.requires_grad()) {
    record([a, out, s]() mutable {
      if (!out.has_grad()) return;
      const auto& og = out.grad();
      auto& ag = a.grad();
      for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i] * s;
    });
  }
  return out;
}

Tensor Tape::transpose(const Tensor& a) {
  if (a.shape().size() != 2) throw std::invalid_argument("transpose: expected 2-D tensor");
  const int m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({n, m}, track({&a}));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      out.values()[static_cast<std::size_t>(j) * m + i] =
          a.values()[static_cast<std::size_t>(i) * n + j];
    }
  }
  if (out.requires_grad()) {
    record([a, out, m, n]() mutable {
      if (!out.has_grad()) return;
      const auto& og = out.grad();
      auto& ag = a.grad();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
          ag[static_cast<std::size_t>(i) * n + j] += og[static_cast<std::size_t>(j) * m + i];
        }
      }
    });
  }
  return out;
}

Tensor Tape::relu(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape(), track({&a}));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = std::max(0.0, a.values()[i]);
  if (out.requires_grad()) {
    record([a, out]() mutable {
      if (!out.has_grad()) return;
      const auto& og = out.grad();
      auto& ag = a.grad();
      for (std::size_t i = 0; i < og.size(); ++i) {
        if (a.values()[i] > 0.0) ag[i] += og[i];
      }
    });
  }
  return out;
}

Tensor Tape::softmax(const Tensor& x, int axis) {
  check_2d(x, "softmax");
  const bool is_1d = x.shape().size() <= 1;
  if (is_1d && axis != 0) throw std::invalid_argument("softmax: axis out of range");
  if (!is_1d && axis != 0 && axis != 1) {
    throw std::invalid_argument("softmax: axis out of range");
  }
  // Normalize along rows; for axis 0 work on the transposed layout.
  const int m = x.rows(), n = x.cols();
  const bool row_wise = is_1d || axis == 1;
  const int groups = row_wise ? m : n;
  const int len = row_wise ? n : m;
  auto idx = [row_wise, n](int g, int i) {
    return row_wise ? static_cast<std::size_t>(g) * n + i
                    : static_cast<std::size_t>(i) * n + g;
  };
  Tensor out = Tensor::zeros(x.shape(), track({&x}));
  for (int g = 0; g < groups; ++g) {
    double mx = x.values()[idx(g, 0)];
    for (int i = 1; i < len; ++i) mx = std::max(mx, x.values()[idx(g, i)]);
    double z = 0.0;
    for (int i = 0; i < len; ++i) {
      const double e = std::exp(x.values()[idx(g, i)] - mx);
      out.values()[idx(g, i)] = e;
      z += e;
    }
    for (int i = 0; i < len; ++i) out.values()[idx(g, i)] /= z;
  }
  if (out.requires_grad()) {
    record([x, out, groups, len, idx]() mutable {
      if (!out.has_grad()) return;
      const auto& og = out.grad();
      auto& xg = x.grad();
      for (int g = 0; g < groups; ++g) {
        double inner = 0.0;
        for (int i = 0; i < len; ++i) inner += og[idx(g, i)] * out.values()[idx(g, i)];
        for (int i = 0; i < len; ++i) {
          xg[idx(g, i)] += out.values()[idx(g, i)] * (og[idx(g, i)] - inner);
        }
      }
    });
  }
  return out;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                        double epsilon) {
  check_2d(x, "layer_norm");
  const int m = x.rows(), n = x.cols();
  if (gain.numel() != static_cast<std::size_t>(n) ||
      bias.numel() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("layer_norm: gain/bias must match last dimension");
  }
  Tensor out = Tensor::zeros(x.shape(), track({&x, &gain, &bias}));
  std::vector<double> inv_sigma(m), mean(m);
  for (int i = 0; i < m; ++i) {
    const std::size_t row = static_cast<std::size_t>(i) * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += x.values()[row + j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = x.values()[row + j] - mu;
      var += d * d;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + epsilon);
    mean[i] = mu;
    inv_sigma[i] = is;
    for (int j = 0; j < n; ++j) {
      out.values()[row + j] = (x.values()[row + j] - mu) * is * gain.values()[j] +
                              bias.values()[j];
    }
  }
  if (out.requires_grad()) {
    record([x, gain, bias, out, m, n, mean, inv_sigma]() mutable {
      if (!out.has_grad()) return;
      const auto& og = out.grad();
      for (int i = 0; i < m; ++i) {
        const std::size_t row = static_cast<std::size_t>(i) * n;
        const double is = inv_sigma[i];
        // xhat_j = (x_j - mu) * is
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int j = 0; j < n; ++j) {
          const double xhat = (x.values()[row + j] - mean[i]) * is;
          const double dxhat = og[row + j] * gain.values()[j];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
        }
        if (x.requires_grad()) {
          auto& xg = x.grad();
          for (int j = 0; j < n; ++j) {
            const double xhat = (x.values()[row + j] - mean[i]) * is;
            const double dxhat = og[row + j] * gain.values()[j];
            xg[row + j] += is * (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
          }
        }
        if (gain.requires_grad()) {
          auto& gg = gain.grad();
          for (int j = 0; j < n; ++j) {
            const double xhat = (x.values()[row + j] - mean[i]) * is;
            gg[j] += og[row + j] * xhat;
          }
        }
        if (bias.requires_grad()) {
          auto& bg = bias.grad();
          for (int j = 0; j < n; ++j) bg[j] += og[row + j];
        }
      }
    });
  }
  return out;
}

Tensor Tape::embed_rows(const Tensor& table, const std::vector<int>& ids) {
  if (table.shape().size() != 2) throw std::invalid_argument("embed_rows: table must be 2-D");
  if (ids.empty()) throw std::invalid_argument("embed_rows: empty id list");
  const int n = table.cols();
  const int rows = table.rows();
  for (int id : ids) {
    if (id < 0 || id >= rows) throw std::invalid_argument("embed_rows: id out of range");
  }
  Tensor out = Tensor::zeros({static_cast<int>(ids.size()), n}, track({&table}));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t src = static_cast<std::size_t>(ids[i]) * n;
    const std::size_t dst = i * n;
    for (int j = 0; j < n; ++j) out.values()[dst + j] = table.values()[src + j];
  }
  if (out.requires_grad()) {
    record([table, out, ids, n]() mutable {
      if (!out.has_grad()) return;
      const auto& og = out.grad();
      auto& tg = table.grad();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const std::size_t dst = static_cast<std::size_t>(ids[i]) * n;
        const std::size_t src = i * n;
        for (int j = 0; j < n; ++j) tg[dst + j] += og[src + j];
      }
    });
  }
  return out;
}

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int n = parts[0].cols();
  int total = 0;
  bool need_grad = false;
  for (const Tensor& p : parts) {
    if (p.shape().size() != 2 || p.cols() != n) {
      throw std::invalid_argument("concat_rows: column counts disagree");
    }
    total += p.rows();
    need_grad = need_grad || p.requires_grad();
  }
  Tensor out = Tensor::zeros({total, n}, grad_enabled() && need_grad);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.values().begin() + off);
    off += p.numel();
  }
  if (out.requires_grad()) {
    record([parts, out]() mutable {
      if (!out.has_grad()) return;
      const auto& og = out.grad();
      std::size_t off2 = 0;
      for (const Tensor& p : parts) {
        if (p.requires_grad()) {
          auto& pg = p.grad();
          for (std::size_t i = 0; i < p.numel(); ++i) pg[i] += og[off2 + i];
        }
        off2 += p.numel();
      }
    });
  }
  return out;
}

Tensor Tape::slice_rows(const Tensor& x, int begin, int end) {
  if (x.shape().size() != 2) throw std::invalid_argument("slice_rows: expected 2-D tensor");
  if (begin < 0 || end > x.rows() || begin >= end) {
    throw std::invalid_argument("slice_rows: invalid range");
  }
  const int n = x.cols();
  Tensor out = Tensor::zeros({end - begin, n}, track({&x}));
  std::copy(x.values().begin() + static_cast<std::size_t>(begin) * n,
            x.values().begin() + static_cast<std::size_t>(end) * n, out.values().begin());
  if (out.requires_grad()) {
    record([x, out, begin, n]() mutable {
      if (!out.has_grad()) return;
      const auto& og = out.grad();
      auto& xg = x.grad();
      const std::size_t off = static_cast<std::size_t>(begin) * n;
      for (std::size_t i = 0; i < og.size(); ++i) xg[off + i] += og[i];
    });
  }
  return out;
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int m = parts[0].rows();
  int total = 0;
  bool need_grad = false;
  for (const Tensor& p : parts) {
    if (p.shape().size() != 2 || p.rows() != m) {
      throw std::invalid_argument("concat_cols: row counts disagree");
    }
    total += p.cols();
    need_grad = need_grad || p.requires_grad();
  }
  Tensor out = Tensor::zeros({m, total}, grad_enabled() && need_grad);
  int col = 0;
  for (const Tensor& p : parts) {
    const int pn = p.cols();
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < pn; ++j) {
        out.values()[static_cast<std::size_t>(i) * total + col + j] =
            p.values()[static_cast<std::size_t>(i) * pn + j];
      }
    }
    col += pn;
  }
  if (out.requires_grad()) {
    record([parts, out, m, total]() mutable {
      if (!out.has_grad()) return;
      const auto& og = out.grad();
      int col2 = 0;
      for (const Tensor& p : parts) {
        const int pn = p.cols();
        if (p.requires_grad()) {
          auto& pg = p.grad();
          for (int i = 0; i < m; ++i) {
            for (int j = 0; j < pn; ++j) {
              pg[static_cast<std::size_t>(i) * pn + j] +=
                  og[static_cast<std::size_t>(i) * total + col2 + j];
            }
          }
        }
        col2 += pn;
      }
    });
  }
  return out;
}

Tensor Tape::slice_cols(const Tensor& x, int begin, int end) {
  if (x.shape().size() != 2) throw std::invalid_argument("slice_cols: expected 2-D tensor");
  if (begin < 0 || end > x.cols() || begin >= end) {
    throw std::invalid_argument("slice_cols: invalid range");
  }
  const int m = x.rows(), n = x.cols(), w = end - begin;
  Tensor out = Tensor::zeros({m, w}, track({&x}));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < w; ++j) {
      out.values()[static_cast<std::size_t>(i) * w + j] =
          x.values()[static_cast<std::size_t>(i) * n + begin + j];
    }
  }
  if (out.requires_grad()) {
    record([x, out, begin, m, n, w]() mutable {
      if (!out.has_grad()) return;
      const auto& og = out.grad();
      auto& xg = x.grad();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < w; ++j) {
          xg[static_cast<std::size_t>(i) * n + begin + j] +=
              og[static_cast<std::size_t>(i) * w + j];
        }
      }
    });
  }
  return out;
}

Tensor Tape::reshape(const Tensor& x, std::vector<int> shape) {
  Tensor out = Tensor::zeros(shape, track({&x}));
  if (out.numel() != x.numel()) throw std::invalid_argument("reshape: element count differs");
  std::copy(x.values().begin(), x.values().end(), out.values().begin());
  if (out.requires_grad()) {
    record([x, out]() mutable {
      if (!out.has_grad()) return;
      const auto& og = out.grad();
      auto& xg = x.grad();
      for (std::size_t i = 0; i < og.size(); ++i) xg[i] += og[i];
    });
  }
  return out;
}

Tensor Tape::sum(const Tensor& x) {
  Tensor out = Tensor::zeros({1}, track({&x}));
  out.values()[0] = std::accumulate(x.values().begin(), x.values().end(), 0.0);
  if (out.requires_grad()) {
    record([x, out]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      auto& xg = x.grad();
      for (std::size_t i = 0; i < xg.size(); ++i) xg[i] += g;
    });
  }
  return out;
}

Tensor Tape::dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) throw std::invalid_argument("dot: size mismatch");
  Tensor out = Tensor::zeros({1}, track({&a, &b}));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a.values()[i] * b.values()[i];
  out.values()[0] = acc;
  if (out.requires_grad()) {
    record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      if (a.requires_grad()) {
        auto& ag = a.grad();
        for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g * b.values()[i];
      }
      if (b.requires_grad()) {
        auto& bg = b.grad();
        for (std::size_t i = 0; i < bg.size(); ++i) bg[i] += g * a.values()[i];
      }
    });
  }
  return out;
}

Tensor Tape::nll_ranking_loss(const Tensor& pos_score,
                              const std::vector<Tensor>& neg_scores) {
  if (!pos_score.is_scalar()) {
    throw std::invalid_argument("nll_ranking_loss: positive score must be scalar");
  }
  if (neg_scores.empty()) {
    throw std::invalid_argument("nll_ranking_loss: at least one negative required");
  }
  for (const Tensor& t : neg_scores) {
    if (!t.is_scalar()) {
      throw std::invalid_argument("nll_ranking_loss: negative scores must be scalar");
    }
  }
  bool need = pos_score.requires_grad();
  for (const Tensor& t : neg_scores) need = need || t.requires_grad();

  // -log( exp(s+) / (exp(s+) + sum exp(s-)) ), stabilized by max subtraction.
  const double p = pos_score.item();
  double mx = p;
  for (const Tensor& t : neg_scores) mx = std::max(mx, t.item());
  const double ep = std::exp(p - mx);
  double z = ep;
  std::vector<double> en(neg_scores.size());
  for (std::size_t i = 0; i < neg_scores.size(); ++i) {
    en[i] = std::exp(neg_scores[i].item() - mx);
    z += en[i];
  }
  Tensor out = Tensor::zeros({1}, grad_enabled() && need);
  out.values()[0] = -(p - mx) + std::log(z);
  if (out.requires_grad()) {
    const double p_pos = ep / z;
    std::vector<double> p_neg(en.size());
    for (std::size_t i = 0; i < en.size(); ++i) p_neg[i] = en[i] / z;
    record([pos_score, neg_scores, out, p_pos, p_neg]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      if (pos_score.requires_grad()) pos_score.grad()[0] += g * (p_pos - 1.0);
      for (std::size_t i = 0; i < neg_scores.size(); ++i) {
        Tensor t = neg_scores[i];
        if (t.requires_grad()) t.grad()[0] += g * p_neg[i];
      }
    });
  }
  return out;
}

}  // namespace moma::nn
