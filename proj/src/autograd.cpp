#include "lotus/autograd.hpp"

#include "lotus/error.hpp"
#include "lotus/kernels.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace lotus::ad {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw Error(std::string(op) + ": shape mismatch " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                " vs " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
  }
}

// Copies columns [offset, offset + width) of src into a contiguous matrix.
Matrix slice_cols(const Matrix& src, std::size_t offset, std::size_t width) {
  Matrix out(src.rows, width);
  for (std::size_t r = 0; r < src.rows; ++r) {
    const double* s = src.data.data() + r * src.cols + offset;
    std::copy(s, s + width, out.data.data() + r * width);
  }
  return out;
}

void add_into_cols(Matrix& dst, const Matrix& src, std::size_t offset) {
  for (std::size_t r = 0; r < src.rows; ++r) {
    double* d = dst.data.data() + r * dst.cols + offset;
    const double* s = src.data.data() + r * src.cols;
    for (std::size_t c = 0; c < src.cols; ++c) {
      d[c] += s[c];
    }
  }
}

std::vector<std::size_t> valid_counts(std::size_t rows, std::size_t keys, AttentionMask mask) {
  std::vector<std::size_t> valid(rows);
  const auto limit = std::min(mask.key_len, keys);
  for (std::size_t i = 0; i < rows; ++i) {
    valid[i] = mask.causal ? std::min(i + 1, limit) : limit;
  }
  return valid;
}

constexpr double kGeluC = 0.7978845608028654; // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

} // namespace

Var Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&, Var)> backprop) {
  Node node;
  node.owned = std::move(value);
  node.requires_grad = requires_grad && record_;
  if (node.requires_grad) {
    node.backprop = std::move(backprop);
  }
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::parameter(const Matrix& value, std::size_t param_index) {
  Node node;
  node.external = &value;
  node.requires_grad = record_;
  node.param = static_cast<long>(param_index);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

const Matrix& Tape::value(Var v) const {
  const auto& n = nodes_[v.id];
  return n.external ? *n.external : n.owned;
}

Matrix& Tape::grad(Var v) {
  auto& n = nodes_[v.id];
  if (n.param >= 0) {
    return param_grads_[static_cast<std::size_t>(n.param)];
  }
  if (!n.grad_ready) {
    const auto& val = value(v);
    n.grad = Matrix(val.rows, val.cols);
    n.grad_ready = true;
  }
  return n.grad;
}

Var Tape::matmul(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.cols != bv.rows) {
    throw Error("matmul: inner dimensions differ (" + std::to_string(av.cols) + " vs " +
                std::to_string(bv.rows) + ")");
  }
  const auto n = av.rows, k = av.cols, m = bv.cols;
  Matrix out(n, m);
  kernels::matmul_nn(av.data.data(), bv.data.data(), out.data.data(), n, k, m);
  return push(std::move(out), needs(a) || needs(b), [a, b, n, k, m](Tape& t, Var self) {
    const auto& g = t.grad(self);
    if (t.needs(a)) {
      // dA[n x k] += dC[n x m] * B[k x m]^T
      kernels::matmul_nt(g.data.data(), t.value(b).data.data(), t.grad(a).data.data(), n, m, k);
    }
    if (t.needs(b)) {
      // dB[k x m] += A[n x k]^T * dC[n x m]
      kernels::matmul_tn(t.value(a).data.data(), g.data.data(), t.grad(b).data.data(), k, n, m);
    }
  });
}

Var Tape::add(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  check_same_shape(av, bv, "add");
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data[i] += bv.data[i];
  }
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, Var self) {
    for (Var in : {a, b}) {
      if (t.needs(in)) {
        auto& gi = t.grad(in);
        const auto& g = t.grad(self);
        for (std::size_t i = 0; i < g.size(); ++i) {
          gi.data[i] += g.data[i];
        }
      }
    }
  });
}

Var Tape::add_row(Var a, Var row) {
  const auto& av = value(a);
  const auto& rv = value(row);
  if (rv.rows != 1 || rv.cols != av.cols) {
    throw Error("add_row: bias shape mismatch");
  }
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows; ++r) {
    auto dst = out.row(r);
    for (std::size_t c = 0; c < out.cols; ++c) {
      dst[c] += rv.data[c];
    }
  }
  return push(std::move(out), needs(a) || needs(row), [a, row](Tape& t, Var self) {
    const auto& g = t.grad(self);
    if (t.needs(a)) {
      auto& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga.data[i] += g.data[i];
      }
    }
    if (t.needs(row)) {
      auto& gr = t.grad(row);
      for (std::size_t r = 0; r < g.rows; ++r) {
        const auto src = g.row(r);
        for (std::size_t c = 0; c < g.cols; ++c) {
          gr.data[c] += src[c];
        }
      }
    }
  });
}

Var Tape::scale(Var x, double s) {
  Matrix out = value(x);
  for (auto& v : out.data) {
    v *= s;
  }
  return push(std::move(out), needs(x), [x, s](Tape& t, Var self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx.data[i] += s * g.data[i];
    }
  });
}

Var Tape::gelu(Var x) {
  const auto& xv = value(x);
  Matrix out(xv.rows, xv.cols);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv.data[i];
    out.data[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  return push(std::move(out), needs(x), [x](Tape& t, Var self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(x);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv.data[i];
      const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      gx.data[i] += g.data[i] * d;
    }
  });
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const auto& xv = value(x);
  const auto& gv = value(gain);
  const auto& bv = value(bias);
  const auto n = xv.rows, d = xv.cols;
  if (gv.rows != 1 || gv.cols != d || !gv.same_shape(bv)) {
    throw Error("layer_norm: gain/bias shape mismatch");
  }
  auto normed = std::make_shared<Matrix>(n, d);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  Matrix out(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = xv.row(r);
    double mean = 0.0;
    for (double v : row) {
      mean += v;
    }
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : row) {
      var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = (row[c] - mean) * is;
      (*normed)(r, c) = xh;
      out(r, c) = xh * gv.data[c] + bv.data[c];
    }
  }
  return push(std::move(out), needs(x) || needs(gain) || needs(bias),
              [x, gain, bias, normed, inv_std, n, d](Tape& t, Var self) {
                const auto& g = t.grad(self);
                const auto& gv = t.value(gain);
                if (t.needs(gain) || t.needs(bias)) {
                  for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t c = 0; c < d; ++c) {
                      if (t.needs(gain)) {
                        t.grad(gain).data[c] += g(r, c) * (*normed)(r, c);
                      }
                      if (t.needs(bias)) {
                        t.grad(bias).data[c] += g(r, c);
                      }
                    }
                  }
                }
                if (t.needs(x)) {
                  auto& gx = t.grad(x);
                  std::vector<double> dxh(d);
                  for (std::size_t r = 0; r < n; ++r) {
                    double mean_dxh = 0.0;
                    double mean_dxh_xh = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                      dxh[c] = g(r, c) * gv.data[c];
                      mean_dxh += dxh[c];
                      mean_dxh_xh += dxh[c] * (*normed)(r, c);
                    }
                    mean_dxh /= static_cast<double>(d);
                    mean_dxh_xh /= static_cast<double>(d);
                    for (std::size_t c = 0; c < d; ++c) {
                      gx(r, c) += (*inv_std)[r] * (dxh[c] - mean_dxh - (*normed)(r, c) * mean_dxh_xh);
                    }
                  }
                }
              });
}

Var Tape::embedding(Var table, std::span<const TokenId> ids, double scale) {
  const auto& tv = value(table);
  Matrix out(ids.size(), tv.cols);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= tv.rows) {
      throw Error("embedding: token id " + std::to_string(ids[r]) + " outside vocabulary of size " +
                  std::to_string(tv.rows));
    }
    const auto src = tv.row(static_cast<std::size_t>(ids[r]));
    auto dst = out.row(r);
    for (std::size_t c = 0; c < tv.cols; ++c) {
      dst[c] = scale * src[c];
    }
  }
  std::vector<TokenId> saved(ids.begin(), ids.end());
  return push(std::move(out), needs(table), [table, saved = std::move(saved), scale](Tape& t, Var self) {
    const auto& g = t.grad(self);
    auto& gt = t.grad(table);
    for (std::size_t r = 0; r < saved.size(); ++r) {
      auto dst = gt.row(static_cast<std::size_t>(saved[r]));
      const auto src = g.row(r);
      for (std::size_t c = 0; c < g.cols; ++c) {
        dst[c] += scale * src[c];
      }
    }
  });
}

Var Tape::attention(Var q, Var k, Var v, std::size_t heads, AttentionMask mask) {
  const auto& qv = value(q);
  const auto& kv = value(k);
  const auto& vv = value(v);
  const auto n = qv.rows, m = kv.rows, d = qv.cols;
  if (heads == 0 || d % heads != 0 || kv.cols != d || !vv.same_shape(kv)) {
    throw Error("attention: incompatible q/k/v shapes or head count");
  }
  const auto dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto valid = valid_counts(n, m, mask);
  auto probs = std::make_shared<std::vector<Matrix>>(heads);
  Matrix out(n, d);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto qh = slice_cols(qv, h * dh, dh);
    const auto kh = slice_cols(kv, h * dh, dh);
    const auto vh = slice_cols(vv, h * dh, dh);
    Matrix s(n, m);
    kernels::matmul_nt(qh.data.data(), kh.data.data(), s.data.data(), n, dh, m);
    for (auto& x : s.data) {
      x *= sc;
    }
    kernels::softmax_rows(s.data.data(), n, m, valid.data());
    Matrix oh(n, dh);
    kernels::matmul_nn(s.data.data(), vh.data.data(), oh.data.data(), n, m, dh);
    add_into_cols(out, oh, h * dh);
    (*probs)[h] = std::move(s);
  }
  return push(std::move(out), needs(q) || needs(k) || needs(v),
              [q, k, v, heads, probs, n, m, dh, sc](Tape& t, Var self) {
                const auto& g = t.grad(self);
                for (std::size_t h = 0; h < heads; ++h) {
                  const auto& p = (*probs)[h];
                  const auto goh = slice_cols(g, h * dh, dh);
                  const auto vh = slice_cols(t.value(v), h * dh, dh);
                  if (t.needs(v)) {
                    Matrix gvh(m, dh);
                    kernels::matmul_tn(p.data.data(), goh.data.data(), gvh.data.data(), m, n, dh);
                    add_into_cols(t.grad(v), gvh, h * dh);
                  }
                  if (!t.needs(q) && !t.needs(k)) {
                    continue;
                  }
                  Matrix gs(n, m);
                  kernels::matmul_nt(goh.data.data(), vh.data.data(), gs.data.data(), n, dh, m);
                  for (std::size_t r = 0; r < n; ++r) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < m; ++c) {
                      dot += gs(r, c) * p(r, c);
                    }
                    for (std::size_t c = 0; c < m; ++c) {
                      gs(r, c) = sc * p(r, c) * (gs(r, c) - dot);
                    }
                  }
                  if (t.needs(q)) {
                    const auto kh = slice_cols(t.value(k), h * dh, dh);
                    Matrix gqh(n, dh);
                    kernels::matmul_nn(gs.data.data(), kh.data.data(), gqh.data.data(), n, m, dh);
                    add_into_cols(t.grad(q), gqh, h * dh);
                  }
                  if (t.needs(k)) {
                    const auto qh = slice_cols(t.value(q), h * dh, dh);
                    Matrix gkh(m, dh);
                    kernels::matmul_tn(gs.data.data(), qh.data.data(), gkh.data.data(), m, n, dh);
                    add_into_cols(t.grad(k), gkh, h * dh);
                  }
                }
              });
}

void Tape::backward(Var output, const Matrix& seed, std::span<Matrix> param_grads) {
  if (!record_) {
    throw Error("backward on a tape recorded in inference mode");
  }
  check_same_shape(value(output), seed, "backward seed");
  for (const auto& node : nodes_) {
    if (node.param >= 0) {
      const auto idx = static_cast<std::size_t>(node.param);
      if (idx >= param_grads.size() || !param_grads[idx].same_shape(*node.external)) {
        throw Error("backward: gradient buffer for parameter " + std::to_string(idx) + " has the wrong shape");
      }
    }
  }
  param_grads_ = param_grads;
  if (!nodes_[output.id].requires_grad) {
    param_grads_ = {};
    return;
  }
  auto& g = grad(output);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.data[i] += seed.data[i];
  }
  for (std::size_t i = output.id + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.backprop && node.grad_ready) {
      node.backprop(*this, Var{i});
    }
  }
  param_grads_ = {};
}

} // namespace lotus::ad
