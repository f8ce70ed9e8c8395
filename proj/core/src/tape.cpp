#include "graphpde/tape.hpp"

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace gpde {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

CMap mat(const Tensor& t) {
  assert(t.rank() == 2);
  return CMap(t.data.data(), t.shape[0], t.shape[1]);
}
MMap mat(Tensor& t) { return MMap(t.data.data(), t.shape[0], t.shape[1]); }

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }
double gelu_bwd(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

}  // namespace

int Tape::push(Tensor val, std::vector<int> parents,
               std::function<void(Tape&, int)> back) {
  Node n;
  n.val = std::move(val);
  n.parents = std::move(parents);
  for (int p : n.parents) {
    if (nodes_[size_t(p)].needs_grad) {
      n.needs_grad = true;
      break;
    }
  }
  if (!n.needs_grad) back = nullptr;  // constant subgraph: nothing to do
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

Tensor& Tape::gbuf(int id) {
  Tensor& g = grads_[size_t(id)];
  if (g.data.empty()) g = Tensor(nodes_[size_t(id)].val.shape);
  return g;
}

int Tape::leaf(Tensor value) {
  Node n;
  n.val = std::move(value);
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

int Tape::constant(Tensor value) {
  Node n;
  n.val = std::move(value);
  n.needs_grad = false;
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

void Tape::backward(int loss_id) {
  grads_.assign(nodes_.size(), Tensor{});
  const Node& loss = nodes_[size_t(loss_id)];
  if (loss.val.numel() != 1)
    throw std::runtime_error("backward: loss must be a scalar");
  if (!loss.needs_grad) return;
  gbuf(loss_id).data[0] = 1.0;
  for (int id = loss_id; id >= 0; --id) {
    const Node& n = nodes_[size_t(id)];
    if (!n.needs_grad || !n.back) continue;
    if (grads_[size_t(id)].data.empty()) continue;  // not an ancestor of loss
    n.back(*this, id);
  }
}

const Tensor* Tape::grad(int id) const {
  if (size_t(id) >= grads_.size()) return nullptr;
  const Tensor& g = grads_[size_t(id)];
  return g.data.empty() ? nullptr : &g;
}

int Tape::add(int a, int b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw std::runtime_error("add: shape mismatch");
  Tensor out(ta.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] + tb[i];
  return push(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    if (t.wants(a)) {
      Tensor& ga = t.gbuf(a);
      for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (t.wants(b)) {
      Tensor& gb = t.gbuf(b);
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
    }
  });
}

int Tape::mul(int a, int b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw std::runtime_error("mul: shape mismatch");
  Tensor out(ta.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] * tb[i];
  return push(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& ta = t.val(a);
    const Tensor& tb = t.val(b);
    if (t.wants(a)) {
      Tensor& ga = t.gbuf(a);
      for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * tb[i];
    }
    if (t.wants(b)) {
      Tensor& gb = t.gbuf(b);
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * ta[i];
    }
  });
}

int Tape::scale(int a, double c) {
  Tensor out(val(a).shape);
  const Tensor& ta = val(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] * c;
  return push(std::move(out), {a}, [a, c](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    Tensor& ga = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * c;
  });
}

int Tape::add_const(int a, double c) {
  Tensor out(val(a).shape);
  const Tensor& ta = val(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] + c;
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    Tensor& ga = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  });
}

int Tape::broadcast_to(int a, std::vector<int64_t> shape) {
  const Tensor& ta = val(a);
  const int64_t src_n = ta.numel();
  const int64_t dst_n = Tensor::numel_of(shape);
  if (dst_n % src_n != 0)
    throw std::runtime_error("broadcast_to: incompatible shapes");
  // Require the source shape to be a literal suffix of the target shape.
  const size_t off = shape.size() - ta.shape.size();
  for (size_t i = 0; i < ta.shape.size(); ++i)
    if (shape[off + i] != ta.shape[i])
      throw std::runtime_error("broadcast_to: source must be a shape suffix");
  Tensor out(shape);
  const int64_t reps = dst_n / src_n;
  for (int64_t r = 0; r < reps; ++r)
    for (int64_t i = 0; i < src_n; ++i) out[r * src_n + i] = ta[i];
  return push(std::move(out), {a}, [a, reps, src_n](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    Tensor& ga = t.gbuf(a);
    for (int64_t r = 0; r < reps; ++r)
      for (int64_t i = 0; i < src_n; ++i) ga[i] += g[r * src_n + i];
  });
}

int Tape::matmul(int a, int b, bool trans_a, bool trans_b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != 2 || tb.rank() != 2)
    throw std::runtime_error("matmul: operands must be 2D");
  const int64_t m = trans_a ? ta.shape[1] : ta.shape[0];
  const int64_t k = trans_a ? ta.shape[0] : ta.shape[1];
  const int64_t k2 = trans_b ? tb.shape[1] : tb.shape[0];
  const int64_t n = trans_b ? tb.shape[0] : tb.shape[1];
  if (k != k2) throw std::runtime_error("matmul: inner dims disagree");
  Tensor out({m, n});
  {
    auto A = mat(ta);
    auto B = mat(tb);
    auto C = mat(out);
    if (!trans_a && !trans_b) C.noalias() = A * B;
    else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
    else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  }
  return push(std::move(out), {a, b},
              [a, b, trans_a, trans_b](Tape& t, int self) {
    auto G = mat(t.grads_[size_t(self)]);
    const Tensor& ta = t.val(a);
    const Tensor& tb = t.val(b);
    if (t.wants(a)) {
      auto GA = mat(t.gbuf(a));
      auto B = mat(tb);
      if (!trans_a && !trans_b) GA.noalias() += G * B.transpose();
      else if (!trans_a && trans_b) GA.noalias() += G * B;
      else if (trans_a && !trans_b) GA.noalias() += B * G.transpose();
      else GA.noalias() += B.transpose() * G.transpose();
    }
    if (t.wants(b)) {
      auto GB = mat(t.gbuf(b));
      auto A = mat(ta);
      if (!trans_a && !trans_b) GB.noalias() += A.transpose() * G;
      else if (trans_a && !trans_b) GB.noalias() += A * G;
      else if (!trans_a && trans_b) GB.noalias() += G.transpose() * A;
      else GB.noalias() += G.transpose() * A.transpose();
    }
  });
}

int Tape::affine(int x, int w, int b) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  const Tensor& tb = val(b);
  if (tx.rank() != 2 || tw.rank() != 2 || tb.rank() != 1)
    throw std::runtime_error("affine: want x[n,in], w[out,in], b[out]");
  if (tx.shape[1] != tw.shape[1] || tb.shape[0] != tw.shape[0])
    throw std::runtime_error("affine: dimension mismatch");
  const int64_t n = tx.shape[0], out_d = tw.shape[0];
  Tensor out({n, out_d});
  {
    auto X = mat(tx);
    auto W = mat(tw);
    auto Y = mat(out);
    Y.noalias() = X * W.transpose();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < out_d; ++j) out.at2(i, j) += tb[j];
  }
  return push(std::move(out), {x, w, b}, [x, w, b](Tape& t, int self) {
    auto G = mat(t.grads_[size_t(self)]);
    if (t.wants(x)) mat(t.gbuf(x)).noalias() += G * mat(t.val(w));
    if (t.wants(w)) mat(t.gbuf(w)).noalias() += G.transpose() * mat(t.val(x));
    if (t.wants(b)) {
      Tensor& gb = t.gbuf(b);
      Eigen::Map<Eigen::VectorXd>(gb.data.data(), gb.numel()) +=
          G.colwise().sum().transpose();
    }
  });
}

int Tape::sum(int a) {
  const Tensor& ta = val(a);
  double s = 0.0;
  for (int64_t i = 0; i < ta.numel(); ++i) s += ta[i];
  return push(Tensor::scalar(s), {a}, [a](Tape& t, int self) {
    const double g = t.grads_[size_t(self)][0];
    Tensor& ga = t.gbuf(a);
    for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

int Tape::mean(int a) {
  const Tensor& ta = val(a);
  double s = 0.0;
  for (int64_t i = 0; i < ta.numel(); ++i) s += ta[i];
  const double inv = 1.0 / double(ta.numel());
  return push(Tensor::scalar(s * inv), {a}, [a, inv](Tape& t, int self) {
    const double g = t.grads_[size_t(self)][0] * inv;
    Tensor& ga = t.gbuf(a);
    for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

int Tape::sqrt_(int a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::sqrt(ta[i]);
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& y = t.val(self);
    Tensor& ga = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * 0.5 / y[i];
  });
}

int Tape::sin_(int a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::sin(ta[i]);
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& x = t.val(a);
    Tensor& ga = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * std::cos(x[i]);
  });
}

int Tape::cos_(int a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::cos(ta[i]);
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& x = t.val(a);
    Tensor& ga = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] -= g[i] * std::sin(x[i]);
  });
}

int Tape::exp_(int a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(ta[i]);
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& y = t.val(self);
    Tensor& ga = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i];
  });
}

int Tape::log_(int a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::log(ta[i]);
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& x = t.val(a);
    Tensor& ga = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] / x[i];
  });
}

int Tape::powc(int a, double p) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::pow(ta[i], p);
  return push(std::move(out), {a}, [a, p](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& x = t.val(a);
    Tensor& ga = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i)
      ga[i] += g[i] * p * std::pow(x[i], p - 1.0);
  });
}

int Tape::gelu(int a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = gelu_fwd(ta[i]);
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& x = t.val(a);
    Tensor& ga = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * gelu_bwd(x[i]);
  });
}

int Tape::relu(int a) {
  const Tensor& ta = val(a);
  Tensor out(ta.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] > 0.0 ? ta[i] : 0.0;
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& x = t.val(a);
    Tensor& ga = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  });
}

int Tape::softmax_rows(int a) {
  const Tensor& ta = val(a);
  if (ta.rank() != 2) throw std::runtime_error("softmax_rows: want 2D");
  const int64_t n = ta.shape[0], m = ta.shape[1];
  Tensor out(ta.shape);
  for (int64_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < m; ++j) mx = std::max(mx, ta.at2(i, j));
    if (!std::isfinite(mx)) continue;  // fully masked row: all zeros
    double z = 0.0;
    for (int64_t j = 0; j < m; ++j) {
      const double e = std::exp(ta.at2(i, j) - mx);
      out.at2(i, j) = e;
      z += e;
    }
    for (int64_t j = 0; j < m; ++j) out.at2(i, j) /= z;
  }
  return push(std::move(out), {a}, [a, n, m](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& y = t.val(self);
    Tensor& ga = t.gbuf(a);
    for (int64_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (int64_t j = 0; j < m; ++j) dot += g.at2(i, j) * y.at2(i, j);
      for (int64_t j = 0; j < m; ++j)
        ga.at2(i, j) += (g.at2(i, j) - dot) * y.at2(i, j);
    }
  });
}

int Tape::layer_norm(int x, int gamma, int beta, double eps) {
  const Tensor& tx = val(x);
  const Tensor& tg = val(gamma);
  const Tensor& tb = val(beta);
  if (tx.rank() != 2 || tg.rank() != 1 || tb.rank() != 1 ||
      tg.shape[0] != tx.shape[1] || tb.shape[0] != tx.shape[1])
    throw std::runtime_error("layer_norm: want x[n,d], gamma[d], beta[d]");
  const int64_t n = tx.shape[0], d = tx.shape[1];
  Tensor out(tx.shape);
  auto mu = std::make_shared<std::vector<double>>(size_t(n));
  auto inv = std::make_shared<std::vector<double>>(size_t(n));
  for (int64_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (int64_t j = 0; j < d; ++j) m += tx.at2(i, j);
    m /= double(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double c = tx.at2(i, j) - m;
      var += c * c;
    }
    var /= double(d);
    const double iv = 1.0 / std::sqrt(var + eps);
    (*mu)[size_t(i)] = m;
    (*inv)[size_t(i)] = iv;
    for (int64_t j = 0; j < d; ++j)
      out.at2(i, j) = (tx.at2(i, j) - m) * iv * tg[j] + tb[j];
  }
  return push(std::move(out), {x, gamma, beta},
              [x, gamma, beta, n, d, mu, inv](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& tx = t.val(x);
    const Tensor& tg = t.val(gamma);
    for (int64_t i = 0; i < n; ++i) {
      const double m = (*mu)[size_t(i)], iv = (*inv)[size_t(i)];
      double s1 = 0.0, s2 = 0.0;  // mean(gy*gamma), mean(gy*gamma*xhat)
      for (int64_t j = 0; j < d; ++j) {
        const double xh = (tx.at2(i, j) - m) * iv;
        const double gg = g.at2(i, j) * tg[j];
        s1 += gg;
        s2 += gg * xh;
      }
      s1 /= double(d);
      s2 /= double(d);
      if (t.wants(x)) {
        Tensor& gx = t.gbuf(x);
        for (int64_t j = 0; j < d; ++j) {
          const double xh = (tx.at2(i, j) - m) * iv;
          const double gg = g.at2(i, j) * tg[j];
          gx.at2(i, j) += (gg - s1 - xh * s2) * iv;
        }
      }
      if (t.wants(gamma)) {
        Tensor& gw = t.gbuf(gamma);
        for (int64_t j = 0; j < d; ++j)
          gw[j] += g.at2(i, j) * (tx.at2(i, j) - m) * iv;
      }
      if (t.wants(beta)) {
        Tensor& gb = t.gbuf(beta);
        for (int64_t j = 0; j < d; ++j) gb[j] += g.at2(i, j);
      }
    }
  });
}

int Tape::conv2d(int x, int w, int b, int stride) {
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  const Tensor& tb = val(b);
  if (tx.rank() != 3 || tw.rank() != 4 || tb.rank() != 1)
    throw std::runtime_error("conv2d: want x[C,H,W], w[O,C,k,k], b[O]");
  const int64_t cin = tx.shape[0], h = tx.shape[1], wdt = tx.shape[2];
  const int64_t cout = tw.shape[0], k = tw.shape[2];
  if (tw.shape[1] != cin || tw.shape[3] != k || tb.shape[0] != cout)
    throw std::runtime_error("conv2d: dimension mismatch");
  if ((h - k) % stride != 0 || (wdt - k) % stride != 0)
    throw std::runtime_error("conv2d: size not divisible by stride");
  const int64_t ho = (h - k) / stride + 1, wo = (wdt - k) / stride + 1;
  const int64_t npos = ho * wo, patch = cin * k * k;

  // im2col followed by one GEMM; the patch matrix is rebuilt in backward
  // rather than saved (cheap relative to the GEMMs).
  auto build_cols = [=](const Tensor& src) {
    Tensor cols({npos, patch});
    for (int64_t oy = 0; oy < ho; ++oy)
      for (int64_t ox = 0; ox < wo; ++ox) {
        double* row = &cols.data[size_t((oy * wo + ox) * patch)];
        for (int64_t c = 0; c < cin; ++c)
          for (int64_t ky = 0; ky < k; ++ky) {
            const double* srow =
                &src.data[size_t((c * h + oy * stride + ky) * wdt + ox * stride)];
            for (int64_t kx = 0; kx < k; ++kx)
              row[c * k * k + ky * k + kx] = srow[kx];
          }
      }
    return cols;
  };

  Tensor cols = build_cols(tx);
  Tensor out({cout, ho, wo});
  {
    CMap C(cols.data.data(), npos, patch);
    CMap W(tw.data.data(), cout, patch);
    EMat Y = C * W.transpose();  // [npos, cout]
    for (int64_t c = 0; c < cout; ++c)
      for (int64_t p = 0; p < npos; ++p)
        out.data[size_t(c * npos + p)] = Y(p, c) + tb[c];
  }
  return push(std::move(out), {x, w, b},
              [=](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& tx = t.val(x);
    const Tensor& tw = t.val(w);
    EMat G(npos, cout);  // g rearranged to [npos, cout]
    for (int64_t c = 0; c < cout; ++c)
      for (int64_t p = 0; p < npos; ++p) G(p, c) = g.data[size_t(c * npos + p)];
    if (t.wants(w)) {
      Tensor cols = build_cols(tx);
      CMap C(cols.data.data(), npos, patch);
      MMap GW(t.gbuf(w).data.data(), cout, patch);
      GW.noalias() += G.transpose() * C;
    }
    if (t.wants(b)) {
      Tensor& gb = t.gbuf(b);
      for (int64_t c = 0; c < cout; ++c) gb[c] += G.col(c).sum();
    }
    if (t.wants(x)) {
      CMap W(tw.data.data(), cout, patch);
      EMat GC = G * W;  // [npos, patch]
      Tensor& gx = t.gbuf(x);
      for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
          const int64_t p = oy * wo + ox;
          for (int64_t c = 0; c < cin; ++c)
            for (int64_t ky = 0; ky < k; ++ky) {
              double* drow = &gx.data[size_t(
                  (c * h + oy * stride + ky) * wdt + ox * stride)];
              for (int64_t kx = 0; kx < k; ++kx)
                drow[kx] += GC(p, c * k * k + ky * k + kx);
            }
        }
    }
  });
}

int Tape::gather_rows(int x, std::vector<int64_t> idx) {
  const Tensor& tx = val(x);
  if (tx.rank() != 1 && tx.rank() != 2)
    throw std::runtime_error("gather_rows: want 1D or 2D source");
  const int64_t n = tx.shape[0];
  const int64_t d = tx.rank() == 2 ? tx.shape[1] : 1;
  for (int64_t i : idx)
    if (i < 0 || i >= n) throw std::runtime_error("gather_rows: index out of range");
  auto ids = std::make_shared<std::vector<int64_t>>(std::move(idx));
  const int64_t k = int64_t(ids->size());
  Tensor out(tx.rank() == 2 ? std::vector<int64_t>{k, d}
                            : std::vector<int64_t>{k});
  for (int64_t r = 0; r < k; ++r)
    for (int64_t j = 0; j < d; ++j)
      out.data[size_t(r * d + j)] = tx.data[size_t((*ids)[size_t(r)] * d + j)];
  return push(std::move(out), {x}, [x, ids, d](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    Tensor& gx = t.gbuf(x);
    const int64_t k = int64_t(ids->size());
    for (int64_t r = 0; r < k; ++r)
      for (int64_t j = 0; j < d; ++j)
        gx.data[size_t((*ids)[size_t(r)] * d + j)] += g.data[size_t(r * d + j)];
  });
}

int Tape::slice_cols(int x, int64_t c0, int64_t len) {
  const Tensor& tx = val(x);
  if (tx.rank() != 2) throw std::runtime_error("slice_cols: want 2D");
  const int64_t n = tx.shape[0], d = tx.shape[1];
  if (c0 < 0 || c0 + len > d) throw std::runtime_error("slice_cols: out of range");
  Tensor out({n, len});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < len; ++j) out.at2(i, j) = tx.at2(i, c0 + j);
  return push(std::move(out), {x}, [x, c0, len, n](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    Tensor& gx = t.gbuf(x);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < len; ++j) gx.at2(i, c0 + j) += g.at2(i, j);
  });
}

int Tape::concat_cols(const std::vector<int>& xs) {
  if (xs.empty()) throw std::runtime_error("concat_cols: empty input");
  const int64_t n = val(xs[0]).shape[0];
  int64_t d = 0;
  for (int id : xs) {
    const Tensor& t = val(id);
    if (t.rank() != 2 || t.shape[0] != n)
      throw std::runtime_error("concat_cols: row counts disagree");
    d += t.shape[1];
  }
  Tensor out({n, d});
  int64_t off = 0;
  for (int id : xs) {
    const Tensor& t = val(id);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < t.shape[1]; ++j) out.at2(i, off + j) = t.at2(i, j);
    off += t.shape[1];
  }
  auto parts = std::make_shared<std::vector<int>>(xs);
  return push(std::move(out), xs, [parts, n](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    int64_t off = 0;
    for (int id : *parts) {
      const int64_t w = t.val(id).shape[1];
      if (t.wants(id)) {
        Tensor& gx = t.gbuf(id);
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < w; ++j) gx.at2(i, j) += g.at2(i, off + j);
      }
      off += w;
    }
  });
}

int Tape::stack_rows(const std::vector<int>& xs) {
  if (xs.empty()) throw std::runtime_error("stack_rows: empty input");
  const int64_t d = val(xs[0]).numel();
  for (int id : xs) {
    const Tensor& t = val(id);
    if (t.rank() != 1 || t.shape[0] != d)
      throw std::runtime_error("stack_rows: want equal-length vectors");
  }
  const int64_t k = int64_t(xs.size());
  Tensor out({k, d});
  for (int64_t r = 0; r < k; ++r)
    for (int64_t j = 0; j < d; ++j) out.at2(r, j) = val(xs[size_t(r)])[j];
  auto parts = std::make_shared<std::vector<int>>(xs);
  return push(std::move(out), xs, [parts, d](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    for (size_t r = 0; r < parts->size(); ++r) {
      const int id = (*parts)[r];
      if (!t.wants(id)) continue;
      Tensor& gx = t.gbuf(id);
      for (int64_t j = 0; j < d; ++j) gx[j] += g.at2(int64_t(r), j);
    }
  });
}

int Tape::reshape(int a, std::vector<int64_t> shape) {
  const Tensor& ta = val(a);
  if (Tensor::numel_of(shape) != ta.numel())
    throw std::runtime_error("reshape: element count changed");
  Tensor out(std::move(shape), ta.data);
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    Tensor& ga = t.gbuf(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  });
}

}  // namespace gpde
