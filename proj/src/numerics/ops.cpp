#include "numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "common/error.hpp"

namespace elcorec::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

using detail::make_result;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_rank2(const char* op, const Tensor& a) {
  if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + shape_string(a.shape()));
}

// Elementwise op; dfdx receives the input and the op output.
template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF dfdx) {
  std::vector<double> out(a.size());
  const auto x = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return make_result(a.shape(), std::move(out), {a}, [dfdx](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.value.size(); ++i) p.grad[i] += self.grad[i] * dfdx(p.value[i], self.value[i]);
  });
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw DomainError("softmax: empty input");
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double den = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) den += (out[i] = std::exp(v[i] - mx));
  for (auto& x : out) x /= den;
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  const std::size_t m = ta ? ac : ar;
  const std::size_t k = ta ? ar : ac;
  const std::size_t k2 = tb ? bc : br;
  const std::size_t n = tb ? br : bc;
  if (k != k2) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_string(a.shape()) + (ta ? "^T" : "") +
                         " and " + shape_string(b.shape()) + (tb ? "^T" : ""));
  }
  std::vector<double> out(m * n);
  {
    CMatMap A(a.values().data(), ar, ac);
    CMatMap B(b.values().data(), br, bc);
    MatMap C(out.data(), m, n);
    if (!ta && !tb) C.noalias() = A * B;
    else if (ta && !tb) C.noalias() = A.transpose() * B;
    else if (!ta && tb) C.noalias() = A * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  }
  return make_result({m, n}, std::move(out), {a, b}, [=](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    CMatMap G(self.grad.data(), m, n);
    CMatMap A(pa.value.data(), ar, ac);
    CMatMap B(pb.value.data(), br, bc);
    if (pa.requires_grad) {
      MatMap GA(pa.grad.data(), ar, ac);
      if (!ta && !tb) GA.noalias() += G * B.transpose();
      else if (ta && !tb) GA.noalias() += B * G.transpose();
      else if (!ta && tb) GA.noalias() += G * B;
      else GA.noalias() += B.transpose() * G.transpose();
    }
    if (pb.requires_grad) {
      MatMap GB(pb.grad.data(), br, bc);
      if (!ta && !tb) GB.noalias() += A.transpose() * G;
      else if (ta && !tb) GB.noalias() += A * G;
      else if (!ta && tb) GB.noalias() += G.transpose() * A;
      else GB.noalias() += G.transpose() * A.transpose();
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i];
      if (pb.requires_grad) pb.grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.value[i];
      if (pb.requires_grad) pb.grad[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.size() != n) {
    throw DimensionError("add_row: bias " + shape_string(bias.shape()) + " does not fit " + shape_string(a.shape()));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bias.values()[c];
  return make_result(a.shape(), std::move(out), {a, bias}, [m, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    if (pb.requires_grad)
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) pb.grad[c] += self.grad[r * n + c];
  });
}

Tensor add_n(const std::vector<Tensor>& terms) {
  if (terms.empty()) throw InvalidArgumentError("add_n: no terms");
  for (const auto& t : terms) require_same_shape("add_n", terms.front(), t);
  std::vector<double> out(terms.front().size(), 0.0);
  for (const auto& t : terms)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t.values()[i];
  return make_result(terms.front().shape(), std::move(out), terms, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  return make_result({1}, {s}, {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (auto& g : p.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InvalidArgumentError("concat_cols: no parts");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.rows() != m) throw DimensionError("concat_cols: row count mismatch " + shape_string(parts.front().shape()) +
                                            " vs " + shape_string(p.shape()));
    widths.push_back(p.cols());
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * n + offset);
    offset += widths[k];
  }
  return make_result({m, n}, std::move(out), parts, [m, n, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (p.requires_grad) {
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) p.grad[r * widths[k] + c] += self.grad[r * n + off + c];
      }
      off += widths[k];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InvalidArgumentError("concat_rows: no parts");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) throw DimensionError("concat_rows: column count mismatch " +
                                            shape_string(parts.front().shape()) + " vs " + shape_string(p.shape()));
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_result({m, n}, std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& p : self.parents) {
      if (p->requires_grad)
        for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += self.grad[off + i];
      off += p->value.size();
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t m = a.rows(), n = a.cols();
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) + ") out of " +
                         shape_string(a.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  for (std::size_t r = 0; r < m; ++r) std::copy_n(a.values().data() + r * n + begin, w, out.data() + r * w);
  return make_result({m, w}, std::move(out), {a}, [m, n, w, begin](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < w; ++c) p.grad[r * n + begin + c] += self.grad[r * w + c];
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t m = a.rows(), n = a.cols();
  if (begin >= end || end > m) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) + ") out of " +
                         shape_string(a.shape()));
  }
  std::vector<double> out(a.values().begin() + begin * n, a.values().begin() + end * n);
  return make_result({end - begin, n}, std::move(out), {a}, [n, begin](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[begin * n + i] += self.grad[i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> index) {
  const std::size_t v = table.rows(), d = table.cols(), n = index.size();
  if (n == 0) throw DimensionError("gather_rows: empty index");
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    if (index[i] >= v) {
      throw LookupError("gather_rows: index " + std::to_string(index[i]) + " outside table " +
                        shape_string(table.shape()));
    }
    std::copy_n(table.values().data() + index[i] * d, d, out.data() + i * d);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result({n, d}, std::move(out), {table}, [idx = std::move(idx), d](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) p.grad[idx[i] * d + c] += self.grad[i * d + c];
  });
}

Tensor segment_sum(const Tensor& src, std::span<const std::size_t> segment, std::size_t num_segments) {
  require_rank2("segment_sum", src);
  const std::size_t e = src.rows(), d = src.cols();
  if (segment.size() != e) throw DimensionError("segment_sum: segment ids do not match rows of " + shape_string(src.shape()));
  std::vector<double> out(num_segments * d, 0.0);
  for (std::size_t i = 0; i < e; ++i) {
    if (segment[i] >= num_segments) throw LookupError("segment_sum: segment id out of range");
    for (std::size_t c = 0; c < d; ++c) out[segment[i] * d + c] += src.values()[i * d + c];
  }
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return make_result({num_segments, d}, std::move(out), {src}, [seg = std::move(seg), d](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < seg.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) p.grad[i * d + c] += self.grad[seg[i] * d + c];
  });
}

Tensor segment_softmax(const Tensor& scores, std::span<const std::size_t> segment, std::size_t num_segments) {
  require_rank2("segment_softmax", scores);
  const std::size_t e = scores.rows(), h = scores.cols();
  if (segment.size() != e) throw DimensionError("segment_softmax: segment ids do not match rows");
  const auto x = scores.values();
  std::vector<double> mx(num_segments * h, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < e; ++i) {
    if (segment[i] >= num_segments) throw LookupError("segment_softmax: segment id out of range");
    for (std::size_t c = 0; c < h; ++c) mx[segment[i] * h + c] = std::max(mx[segment[i] * h + c], x[i * h + c]);
  }
  std::vector<double> out(e * h);
  std::vector<double> den(num_segments * h, 0.0);
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t c = 0; c < h; ++c) {
      out[i * h + c] = std::exp(x[i * h + c] - mx[segment[i] * h + c]);
      den[segment[i] * h + c] += out[i * h + c];
    }
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t c = 0; c < h; ++c) out[i * h + c] /= den[segment[i] * h + c];
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return make_result(scores.shape(), std::move(out), {scores},
                     [seg = std::move(seg), num_segments, h](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       std::vector<double> dot(num_segments * h, 0.0);
                       for (std::size_t i = 0; i < seg.size(); ++i)
                         for (std::size_t c = 0; c < h; ++c)
                           dot[seg[i] * h + c] += self.grad[i * h + c] * self.value[i * h + c];
                       for (std::size_t i = 0; i < seg.size(); ++i)
                         for (std::size_t c = 0; c < h; ++c)
                           p.grad[i * h + c] += self.value[i * h + c] * (self.grad[i * h + c] - dot[seg[i] * h + c]);
                     });
}

Tensor head_dot(const Tensor& x, const Tensor& a) {
  require_rank2("head_dot", x);
  const std::size_t n = x.rows(), h = a.rows(), dh = a.cols();
  if (x.cols() != h * dh) {
    throw DimensionError("head_dot: " + shape_string(x.shape()) + " incompatible with heads " + shape_string(a.shape()));
  }
  std::vector<double> out(n * h, 0.0);
  const auto xv = x.values();
  const auto av = a.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < h; ++k) {
      double s = 0.0;
      for (std::size_t c = 0; c < dh; ++c) s += xv[r * h * dh + k * dh + c] * av[k * dh + c];
      out[r * h + k] = s;
    }
  return make_result({n, h}, std::move(out), {x, a}, [n, h, dh](Node& self) {
    Node& px = *self.parents[0];
    Node& pa = *self.parents[1];
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t k = 0; k < h; ++k) {
        const double g = self.grad[r * h + k];
        for (std::size_t c = 0; c < dh; ++c) {
          const std::size_t xi = r * h * dh + k * dh + c;
          if (px.requires_grad) px.grad[xi] += g * pa.value[k * dh + c];
          if (pa.requires_grad) pa.grad[k * dh + c] += g * px.value[xi];
        }
      }
  });
}

Tensor head_scale(const Tensor& x, const Tensor& w) {
  require_rank2("head_scale", x);
  require_rank2("head_scale", w);
  const std::size_t e = x.rows(), h = w.cols();
  if (w.rows() != e || x.cols() % h != 0) {
    throw DimensionError("head_scale: " + shape_string(x.shape()) + " incompatible with " + shape_string(w.shape()));
  }
  const std::size_t dh = x.cols() / h;
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < e; ++r)
    for (std::size_t k = 0; k < h; ++k)
      for (std::size_t c = 0; c < dh; ++c) {
        const std::size_t i = r * h * dh + k * dh + c;
        out[i] = x.values()[i] * w.values()[r * h + k];
      }
  return make_result(x.shape(), std::move(out), {x, w}, [e, h, dh](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    for (std::size_t r = 0; r < e; ++r)
      for (std::size_t k = 0; k < h; ++k) {
        double acc = 0.0;
        const double wk = pw.value[r * h + k];
        for (std::size_t c = 0; c < dh; ++c) {
          const std::size_t i = r * h * dh + k * dh + c;
          if (px.requires_grad) px.grad[i] += self.grad[i] * wk;
          acc += self.grad[i] * px.value[i];
        }
        if (pw.requires_grad) pw.grad[r * h + k] += acc;
      }
  });
}

Tensor replace_row(const Tensor& x, std::size_t row, const Tensor& v) {
  const std::size_t m = x.rows(), d = x.cols();
  if (row >= m) throw DimensionError("replace_row: row " + std::to_string(row) + " outside " + shape_string(x.shape()));
  if (v.size() != d) throw DimensionError("replace_row: vector " + shape_string(v.shape()) + " does not fit " +
                                          shape_string(x.shape()));
  std::vector<double> out(x.values().begin(), x.values().end());
  std::copy(v.values().begin(), v.values().end(), out.begin() + row * d);
  return make_result(x.shape(), std::move(out), {x, v}, [row, d](Node& self) {
    Node& px = *self.parents[0];
    Node& pv = *self.parents[1];
    if (px.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (i / d != row) px.grad[i] += self.grad[i];
    if (pv.requires_grad)
      for (std::size_t c = 0; c < d; ++c) pv.grad[c] += self.grad[row * d + c];
  });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(
      a, [slope](double x) { return x >= 0 ? x : slope * x; },
      [slope](double x, double) { return x >= 0 ? 1.0 : slope; });
}

Tensor elu(const Tensor& a, double alpha) {
  return unary(
      a, [alpha](double x) { return x > 0 ? x : alpha * std::expm1(x); },
      [alpha](double x, double y) { return x > 0 ? 1.0 : y + alpha; });
}

Tensor gelu(const Tensor& a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x))); },
      [](double x, double) {
        const double t = std::tanh(k * (x + c * x * x * x));
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * c * x * x);
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, [](double x) { return sigmoid(x); }, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double x : a.values())
    if (!(x > 0)) throw DomainError("log: non-positive input");
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor softmax(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  const auto x = a.values();
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = x.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double den = 0.0;
    for (std::size_t c = 0; c < n; ++c) den += (out[r * n + c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] /= den;
  }
  return make_result(a.shape(), std::move(out), {a}, [m, n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += self.grad[r * n + c] * self.value[r * n + c];
      for (std::size_t c = 0; c < n; ++c)
        p.grad[r * n + c] += self.value[r * n + c] * (self.grad[r * n + c] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.size() != n || beta.size() != n) {
    throw DimensionError("layer_norm: affine parameters do not fit " + shape_string(x.shape()));
  }
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(m);
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t r = 0; r < m; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += xv[r * n + c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (xv[r * n + c] - mu) * (xv[r * n + c] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (xv[r * n + c] - mu) * is;
      (*xhat)[r * n + c] = h;
      out[r * n + c] = gamma.values()[c] * h + beta.values()[c];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta}, [m, n, xhat, inv_std](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    for (std::size_t r = 0; r < m; ++r) {
      double mean_g = 0.0, mean_gx = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        const std::size_t i = r * n + c;
        const double g = self.grad[i];
        if (pg.requires_grad) pg.grad[c] += g * (*xhat)[i];
        if (pb.requires_grad) pb.grad[c] += g;
        const double gh = g * pg.value[c];
        mean_g += gh;
        mean_gx += gh * (*xhat)[i];
      }
      if (!px.requires_grad) continue;
      mean_g /= static_cast<double>(n);
      mean_gx /= static_cast<double>(n);
      for (std::size_t c = 0; c < n; ++c) {
        const std::size_t i = r * n + c;
        const double gh = self.grad[i] * pg.value[c];
        px.grad[i] += (*inv_std)[r] * (gh - mean_g - (*xhat)[i] * mean_gx);
      }
    }
  });
}

Tensor row_cosine(const Tensor& a, const Tensor& b) {
  require_same_shape("row_cosine", a, b);
  const std::size_t m = a.rows(), d = a.cols();
  std::vector<double> out(m);
  auto norms = std::make_shared<std::vector<double>>(2 * m);
  for (std::size_t r = 0; r < m; ++r) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double x = a.values()[r * d + c], y = b.values()[r * d + c];
      ab += x * y;
      aa += x * x;
      bb += y * y;
    }
    if (aa == 0.0 || bb == 0.0) throw NumericError("row_cosine: zero-norm vector in row " + std::to_string(r));
    (*norms)[2 * r] = std::sqrt(aa);
    (*norms)[2 * r + 1] = std::sqrt(bb);
    out[r] = ab / ((*norms)[2 * r] * (*norms)[2 * r + 1]);
  }
  return make_result({m}, std::move(out), {a, b}, [m, d, norms](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t r = 0; r < m; ++r) {
      const double na = (*norms)[2 * r], nb = (*norms)[2 * r + 1];
      const double cs = self.value[r], g = self.grad[r];
      for (std::size_t c = 0; c < d; ++c) {
        const std::size_t i = r * d + c;
        const double x = pa.value[i], y = pb.value[i];
        if (pa.requires_grad) pa.grad[i] += g * (y / (na * nb) - cs * x / (na * na));
        if (pb.requires_grad) pb.grad[i] += g * (x / (na * nb) - cs * y / (nb * nb));
      }
    }
  });
}

Tensor binary_cross_entropy(const Tensor& p, std::span<const double> labels) {
  const std::size_t m = p.size();
  if (labels.size() != m) throw DimensionError("binary_cross_entropy: label count mismatch");
  static constexpr double lo = 1e-12;
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double q = std::clamp(p.values()[i], lo, 1.0 - lo);
    loss -= labels[i] * std::log(q) + (1.0 - labels[i]) * std::log(1.0 - q);
  }
  loss /= static_cast<double>(m);
  std::vector<double> y(labels.begin(), labels.end());
  return make_result({1}, {loss}, {p}, [y = std::move(y), m](Node& self) {
    Node& pp = *self.parents[0];
    if (!pp.requires_grad) return;
    for (std::size_t i = 0; i < m; ++i) {
      const double q = std::clamp(pp.value[i], lo, 1.0 - lo);
      pp.grad[i] += self.grad[0] * (-y[i] / q + (1.0 - y[i]) / (1.0 - q)) / static_cast<double>(m);
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  const std::size_t m = logits.rows(), v = logits.cols();
  if (targets.size() != m) throw DimensionError("cross_entropy: target count mismatch");
  auto probs = std::make_shared<std::vector<double>>(m * v);
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    if (targets[r] >= v) throw LookupError("cross_entropy: target id out of range");
    const double* row = logits.values().data() + r * v;
    const double mx = *std::max_element(row, row + v);
    double den = 0.0;
    for (std::size_t c = 0; c < v; ++c) den += ((*probs)[r * v + c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < v; ++c) (*probs)[r * v + c] /= den;
    loss -= row[targets[r]] - mx - std::log(den);
  }
  loss /= static_cast<double>(m);
  std::vector<std::size_t> t(targets.begin(), targets.end());
  return make_result({1}, {loss}, {logits}, [probs, t = std::move(t), m, v](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    const double g = self.grad[0] / static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < v; ++c)
        p.grad[r * v + c] += g * ((*probs)[r * v + c] - (c == t[r] ? 1.0 : 0.0));
  });
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  require_rank2("causal_attention", q);
  require_same_shape("causal_attention", q, k);
  require_same_shape("causal_attention", q, v);
  const std::size_t len = q.rows(), d = q.cols();
  if (heads == 0 || d % heads != 0) throw DimensionError("causal_attention: width not divisible by head count");
  const std::size_t dh = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));

  auto probs = std::make_shared<std::vector<RowMat>>(heads);
  std::vector<double> out(len * d);
  {
    CMatMap Q(q.values().data(), len, d), K(k.values().data(), len, d), V(v.values().data(), len, d);
    MatMap O(out.data(), len, d);
    for (std::size_t h = 0; h < heads; ++h) {
      RowMat s = (Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose()) * inv;
      for (std::size_t i = 0; i < len; ++i) {
        const double mx = s.row(i).head(i + 1).maxCoeff();
        double den = 0.0;
        for (std::size_t j = 0; j <= i; ++j) den += (s(i, j) = std::exp(s(i, j) - mx));
        for (std::size_t j = 0; j <= i; ++j) s(i, j) /= den;
        for (std::size_t j = i + 1; j < len; ++j) s(i, j) = 0.0;
      }
      O.middleCols(h * dh, dh).noalias() = s * V.middleCols(h * dh, dh);
      (*probs)[h] = std::move(s);
    }
  }
  return make_result({len, d}, std::move(out), {q, k, v}, [probs, len, d, dh, heads, inv](Node& self) {
    Node& pq = *self.parents[0];
    Node& pk = *self.parents[1];
    Node& pv = *self.parents[2];
    CMatMap G(self.grad.data(), len, d);
    CMatMap Q(pq.value.data(), len, d), K(pk.value.data(), len, d), V(pv.value.data(), len, d);
    for (std::size_t h = 0; h < heads; ++h) {
      const RowMat& p = (*probs)[h];
      const auto go = G.middleCols(h * dh, dh);
      if (pv.requires_grad) MatMap(pv.grad.data(), len, d).middleCols(h * dh, dh).noalias() += p.transpose() * go;
      if (!pq.requires_grad && !pk.requires_grad) continue;
      RowMat dp = go * V.middleCols(h * dh, dh).transpose();
      for (std::size_t i = 0; i < len; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j <= i; ++j) dot += dp(i, j) * p(i, j);
        for (std::size_t j = 0; j <= i; ++j) dp(i, j) = p(i, j) * (dp(i, j) - dot) * inv;
        for (std::size_t j = i + 1; j < len; ++j) dp(i, j) = 0.0;
      }
      if (pq.requires_grad) MatMap(pq.grad.data(), len, d).middleCols(h * dh, dh).noalias() += dp * K.middleCols(h * dh, dh);
      if (pk.requires_grad)
        MatMap(pk.grad.data(), len, d).middleCols(h * dh, dh).noalias() += dp.transpose() * Q.middleCols(h * dh, dh);
    }
  });
}

Tensor dropout(const Tensor& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw DomainError("dropout: probability must be below 1");
  const double keep = 1.0 / (1.0 - p);
  std::vector<double> mask(a.size());
  for (auto& m : mask) m = rng.uniform() < p ? 0.0 : keep;
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * mask[i];
  return make_result(a.shape(), std::move(out), {a}, [mask = std::move(mask)](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (std::size_t i = 0; i < mask.size(); ++i) pa.grad[i] += self.grad[i] * mask[i];
  });
}

}  // namespace elcorec::nn
