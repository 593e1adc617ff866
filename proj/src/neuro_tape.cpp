#include "osdec/neuro/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace osdec::neuro {
namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shapes " + a.shape_str() + " and " +
                     b.shape_str() + " differ");
}

}  // namespace

Tape::Ref Tape::push(Tensor value, std::function<void()> back) {
  Node node;
  node.grad = Tensor::zeros(value.shape);
  node.value = std::move(value);
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return static_cast<Ref>(nodes_.size()) - 1;
}

Tape::Ref Tape::leaf(Tensor t) { return push(std::move(t)); }

Tape::Ref Tape::matmul(Ref a, Ref b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.cols() != B.rows())
    throw ShapeError("matmul: " + A.shape_str() + " * " + B.shape_str());
  const size_t n = A.rows(), k = A.cols(), m = B.cols();
  Tensor out = Tensor::zeros({n, m});
  for (size_t i = 0; i < n; ++i)
    for (size_t p = 0; p < k; ++p) {
      const double aip = A.at(i, p);
      if (aip == 0.0) continue;
      for (size_t j = 0; j < m; ++j) out.at(i, j) += aip * B.at(p, j);
    }
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, a, b, r, n, k, m] {
    const Tensor& g = grad(r);
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    Tensor& ga = grad_mut(a);
    Tensor& gb = grad_mut(b);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < m; ++j) {
        const double gij = g.at(i, j);
        if (gij == 0.0) continue;
        for (size_t p = 0; p < k; ++p) {
          ga.at(i, p) += gij * B.at(p, j);
          gb.at(p, j) += gij * A.at(i, p);
        }
      }
  };
  return r;
}

Tape::Ref Tape::matmul_nt(Ref a, Ref b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.cols() != B.cols())
    throw ShapeError("matmul_nt: " + A.shape_str() + " * " + B.shape_str() +
                     "^T");
  const size_t n = A.rows(), k = A.cols(), m = B.rows();
  Tensor out = Tensor::zeros({n, m});
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (size_t p = 0; p < k; ++p) acc += A.at(i, p) * B.at(j, p);
      out.at(i, j) = acc;
    }
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, a, b, r, n, k, m] {
    const Tensor& g = grad(r);
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    Tensor& ga = grad_mut(a);
    Tensor& gb = grad_mut(b);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < m; ++j) {
        const double gij = g.at(i, j);
        if (gij == 0.0) continue;
        for (size_t p = 0; p < k; ++p) {
          ga.at(i, p) += gij * B.at(j, p);
          gb.at(j, p) += gij * A.at(i, p);
        }
      }
  };
  return r;
}

Tape::Ref Tape::add(Ref a, Ref b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_same_shape(A, B, "add");
  Tensor out = A;
  for (size_t i = 0; i < out.values.size(); ++i) out.values[i] += B.values[i];
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, a, b, r] {
    const Tensor& g = grad(r);
    Tensor& ga = grad_mut(a);
    Tensor& gb = grad_mut(b);
    for (size_t i = 0; i < g.values.size(); ++i) {
      ga.values[i] += g.values[i];
      gb.values[i] += g.values[i];
    }
  };
  return r;
}

Tape::Ref Tape::sub(Ref a, Ref b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_same_shape(A, B, "sub");
  Tensor out = A;
  for (size_t i = 0; i < out.values.size(); ++i) out.values[i] -= B.values[i];
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, a, b, r] {
    const Tensor& g = grad(r);
    Tensor& ga = grad_mut(a);
    Tensor& gb = grad_mut(b);
    for (size_t i = 0; i < g.values.size(); ++i) {
      ga.values[i] += g.values[i];
      gb.values[i] -= g.values[i];
    }
  };
  return r;
}

Tape::Ref Tape::mul(Ref a, Ref b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_same_shape(A, B, "mul");
  Tensor out = A;
  for (size_t i = 0; i < out.values.size(); ++i) out.values[i] *= B.values[i];
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, a, b, r] {
    const Tensor& g = grad(r);
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    Tensor& ga = grad_mut(a);
    Tensor& gb = grad_mut(b);
    for (size_t i = 0; i < g.values.size(); ++i) {
      ga.values[i] += g.values[i] * B.values[i];
      gb.values[i] += g.values[i] * A.values[i];
    }
  };
  return r;
}

Tape::Ref Tape::div(Ref a, Ref b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_same_shape(A, B, "div");
  Tensor out = A;
  for (size_t i = 0; i < out.values.size(); ++i) out.values[i] /= B.values[i];
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, a, b, r] {
    const Tensor& g = grad(r);
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    Tensor& ga = grad_mut(a);
    Tensor& gb = grad_mut(b);
    for (size_t i = 0; i < g.values.size(); ++i) {
      ga.values[i] += g.values[i] / B.values[i];
      gb.values[i] -= g.values[i] * A.values[i] / (B.values[i] * B.values[i]);
    }
  };
  return r;
}

Tape::Ref Tape::add_rowvec(Ref x, Ref b) {
  const Tensor& X = value(x);
  const Tensor& B = value(b);
  if (B.rows() != 1 || B.cols() != X.cols())
    throw ShapeError("add_rowvec: " + X.shape_str() + " + " + B.shape_str());
  Tensor out = X;
  for (size_t i = 0; i < X.rows(); ++i)
    for (size_t j = 0; j < X.cols(); ++j) out.at(i, j) += B.at(0, j);
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, x, b, r] {
    const Tensor& g = grad(r);
    Tensor& gx = grad_mut(x);
    Tensor& gb = grad_mut(b);
    for (size_t i = 0; i < g.rows(); ++i)
      for (size_t j = 0; j < g.cols(); ++j) {
        gx.at(i, j) += g.at(i, j);
        gb.at(0, j) += g.at(i, j);
      }
  };
  return r;
}

Tape::Ref Tape::scale(Ref a, double c) {
  Tensor out = value(a);
  for (double& v : out.values) v *= c;
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, a, r, c] {
    const Tensor& g = grad(r);
    Tensor& ga = grad_mut(a);
    for (size_t i = 0; i < g.values.size(); ++i)
      ga.values[i] += c * g.values[i];
  };
  return r;
}

Tape::Ref Tape::add_const(Ref a, double c) {
  Tensor out = value(a);
  for (double& v : out.values) v += c;
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, a, r] {
    const Tensor& g = grad(r);
    Tensor& ga = grad_mut(a);
    for (size_t i = 0; i < g.values.size(); ++i) ga.values[i] += g.values[i];
  };
  return r;
}

Tape::Ref Tape::tanh_op(Ref a) {
  Tensor out = value(a);
  for (double& v : out.values) v = std::tanh(v);
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, a, r] {
    const Tensor& g = grad(r);
    const Tensor& y = value(r);
    Tensor& ga = grad_mut(a);
    for (size_t i = 0; i < g.values.size(); ++i)
      ga.values[i] += g.values[i] * (1.0 - y.values[i] * y.values[i]);
  };
  return r;
}

Tape::Ref Tape::sigmoid_op(Ref a) {
  Tensor out = value(a);
  for (double& v : out.values) v = 1.0 / (1.0 + std::exp(-v));
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, a, r] {
    const Tensor& g = grad(r);
    const Tensor& y = value(r);
    Tensor& ga = grad_mut(a);
    for (size_t i = 0; i < g.values.size(); ++i)
      ga.values[i] += g.values[i] * y.values[i] * (1.0 - y.values[i]);
  };
  return r;
}

Tape::Ref Tape::softplus_op(Ref a) {
  Tensor out = value(a);
  for (double& v : out.values) v = v > 30.0 ? v : std::log1p(std::exp(v));
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, a, r] {
    const Tensor& g = grad(r);
    const Tensor& x = value(a);
    Tensor& ga = grad_mut(a);
    for (size_t i = 0; i < g.values.size(); ++i) {
      const double s = x.values[i] > 30.0
                           ? 1.0
                           : 1.0 / (1.0 + std::exp(-x.values[i]));
      ga.values[i] += g.values[i] * s;
    }
  };
  return r;
}

Tape::Ref Tape::exp_op(Ref a) {
  Tensor out = value(a);
  for (double& v : out.values) v = std::exp(v);
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, a, r] {
    const Tensor& g = grad(r);
    const Tensor& y = value(r);
    Tensor& ga = grad_mut(a);
    for (size_t i = 0; i < g.values.size(); ++i)
      ga.values[i] += g.values[i] * y.values[i];
  };
  return r;
}

Tape::Ref Tape::log_op(Ref a) {
  Tensor out = value(a);
  for (double& v : out.values) v = std::log(v);
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, a, r] {
    const Tensor& g = grad(r);
    const Tensor& x = value(a);
    Tensor& ga = grad_mut(a);
    for (size_t i = 0; i < g.values.size(); ++i)
      ga.values[i] += g.values[i] / x.values[i];
  };
  return r;
}

Tape::Ref Tape::square(Ref a) {
  Tensor out = value(a);
  for (double& v : out.values) v *= v;
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, a, r] {
    const Tensor& g = grad(r);
    const Tensor& x = value(a);
    Tensor& ga = grad_mut(a);
    for (size_t i = 0; i < g.values.size(); ++i)
      ga.values[i] += 2.0 * g.values[i] * x.values[i];
  };
  return r;
}

Tape::Ref Tape::layer_norm(Ref x, Ref gain, Ref bias) {
  constexpr double kEps = 1e-5;
  const Tensor& X = value(x);
  const Tensor& G = value(gain);
  const Tensor& B = value(bias);
  if (G.rows() != 1 || G.cols() != X.cols() || !G.same_shape(B))
    throw ShapeError("layer_norm: x " + X.shape_str() + ", gain " +
                     G.shape_str() + ", bias " + B.shape_str());
  const size_t n = X.rows(), d = X.cols();
  Tensor out = Tensor::zeros({n, d});
  // cache standardized rows and inverse stddevs for the backward pass
  auto normed = std::make_shared<Tensor>(Tensor::zeros({n, d}));
  auto invStd = std::make_shared<std::vector<double>>(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (size_t j = 0; j < d; ++j) mean += X.at(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (size_t j = 0; j < d; ++j) {
      const double dev = X.at(i, j) - mean;
      var += dev * dev;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kEps);
    (*invStd)[i] = is;
    for (size_t j = 0; j < d; ++j) {
      const double y = (X.at(i, j) - mean) * is;
      normed->at(i, j) = y;
      out.at(i, j) = G.at(0, j) * y + B.at(0, j);
    }
  }
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, x, gain, bias, r, n, d, normed,
                                         invStd] {
    const Tensor& g = grad(r);
    const Tensor& G = value(gain);
    Tensor& gx = grad_mut(x);
    Tensor& gg = grad_mut(gain);
    Tensor& gb = grad_mut(bias);
    for (size_t i = 0; i < n; ++i) {
      double meanDy = 0.0, meanDyY = 0.0;
      for (size_t j = 0; j < d; ++j) {
        const double dy = g.at(i, j) * G.at(0, j);
        meanDy += dy;
        meanDyY += dy * normed->at(i, j);
        gg.at(0, j) += g.at(i, j) * normed->at(i, j);
        gb.at(0, j) += g.at(i, j);
      }
      meanDy /= static_cast<double>(d);
      meanDyY /= static_cast<double>(d);
      for (size_t j = 0; j < d; ++j) {
        const double dy = g.at(i, j) * G.at(0, j);
        gx.at(i, j) +=
            (*invStd)[i] * (dy - meanDy - normed->at(i, j) * meanDyY);
      }
    }
  };
  return r;
}

Tape::Ref Tape::masked_softmax_rows(Ref logits,
                                    const std::vector<char>& keyMask) {
  const Tensor& L = value(logits);
  const size_t n = L.rows(), m = L.cols();
  if (keyMask.size() != m)
    throw ShapeError("masked_softmax_rows: mask length " +
                     std::to_string(keyMask.size()) + " vs " + L.shape_str());
  if (std::none_of(keyMask.begin(), keyMask.end(), [](char c) { return c; }))
    throw ContractError("masked_softmax_rows: every key is masked");
  Tensor out = Tensor::zeros({n, m});
  for (size_t i = 0; i < n; ++i) {
    double maxv = -1e300;
    for (size_t j = 0; j < m; ++j)
      if (keyMask[j]) maxv = std::max(maxv, L.at(i, j));
    double total = 0.0;
    for (size_t j = 0; j < m; ++j) {
      if (!keyMask[j]) continue;
      const double e = std::exp(L.at(i, j) - maxv);
      out.at(i, j) = e;
      total += e;
    }
    for (size_t j = 0; j < m; ++j) out.at(i, j) /= total;
  }
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, logits, r, n, m] {
    const Tensor& g = grad(r);
    const Tensor& p = value(r);
    Tensor& gl = grad_mut(logits);
    for (size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (size_t j = 0; j < m; ++j) dot += g.at(i, j) * p.at(i, j);
      for (size_t j = 0; j < m; ++j)
        gl.at(i, j) += p.at(i, j) * (g.at(i, j) - dot);
    }
  };
  return r;
}

Tape::Ref Tape::mask_rows(Ref x, const std::vector<char>& rowMask) {
  const Tensor& X = value(x);
  if (rowMask.size() != X.rows())
    throw ShapeError("mask_rows: mask length " +
                     std::to_string(rowMask.size()) + " vs " + X.shape_str());
  Tensor out = X;
  for (size_t i = 0; i < X.rows(); ++i)
    if (!rowMask[i])
      for (size_t j = 0; j < X.cols(); ++j) out.at(i, j) = 0.0;
  Ref r = push(std::move(out));
  auto mask = std::make_shared<std::vector<char>>(rowMask);
  nodes_[static_cast<size_t>(r)].back = [this, x, r, mask] {
    const Tensor& g = grad(r);
    Tensor& gx = grad_mut(x);
    for (size_t i = 0; i < g.rows(); ++i)
      if ((*mask)[i])
        for (size_t j = 0; j < g.cols(); ++j) gx.at(i, j) += g.at(i, j);
  };
  return r;
}

Tape::Ref Tape::slice_rows(Ref x, size_t start, size_t count) {
  const Tensor& X = value(x);
  if (start + count > X.rows())
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") of " + X.shape_str());
  const size_t d = X.cols();
  Tensor out = Tensor::zeros({count, d});
  for (size_t i = 0; i < count; ++i)
    for (size_t j = 0; j < d; ++j) out.at(i, j) = X.at(start + i, j);
  Ref r = push(std::move(out));
  nodes_[static_cast<size_t>(r)].back = [this, x, r, start, count, d] {
    const Tensor& g = grad(r);
    Tensor& gx = grad_mut(x);
    for (size_t i = 0; i < count; ++i)
      for (size_t j = 0; j < d; ++j) gx.at(start + i, j) += g.at(i, j);
  };
  return r;
}

Tape::Ref Tape::concat_cols(const std::vector<Ref>& parts) {
  size_t total = 0;
  for (Ref p : parts) {
    if (value(p).rows() != 1)
      throw ShapeError("concat_cols expects [1 x *] parts, got " +
                       value(p).shape_str());
    total += value(p).cols();
  }
  Tensor out = Tensor::zeros({1, total});
  size_t off = 0;
  for (Ref p : parts) {
    const Tensor& P = value(p);
    for (size_t j = 0; j < P.cols(); ++j) out.at(0, off + j) = P.at(0, j);
    off += P.cols();
  }
  Ref r = push(std::move(out));
  auto ps = std::make_shared<std::vector<Ref>>(parts);
  nodes_[static_cast<size_t>(r)].back = [this, r, ps] {
    const Tensor& g = grad(r);
    size_t off = 0;
    for (Ref p : *ps) {
      Tensor& gp = grad_mut(p);
      for (size_t j = 0; j < gp.cols(); ++j) gp.at(0, j) += g.at(0, off + j);
      off += gp.cols();
    }
  };
  return r;
}

Tape::Ref Tape::sum(Ref a) {
  double total = 0.0;
  for (double v : value(a).values) total += v;
  Ref r = push(Tensor::scalar(total));
  nodes_[static_cast<size_t>(r)].back = [this, a, r] {
    const double g = grad(r).values[0];
    Tensor& ga = grad_mut(a);
    for (double& v : ga.values) v += g;
  };
  return r;
}

Tape::Ref Tape::ppo_surrogate(Ref logProbNew, double logProbOld,
                              double advantage, double eps) {
  if (value(logProbNew).count() != 1)
    throw ShapeError("ppo_surrogate expects a scalar log-probability");
  const double ratio = std::exp(scalar(logProbNew) - logProbOld);
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  const double unclippedTerm = ratio * advantage;
  const double clippedTerm = clipped * advantage;
  Ref r = push(Tensor::scalar(std::min(unclippedTerm, clippedTerm)));
  const bool unclippedActive = unclippedTerm <= clippedTerm;
  nodes_[static_cast<size_t>(r)].back = [this, logProbNew, r, ratio, advantage,
                                         unclippedActive] {
    if (!unclippedActive) return;  // clipped branch has zero gradient
    grad_mut(logProbNew).values[0] += grad(r).values[0] * ratio * advantage;
  };
  return r;
}

Tape::Ref Tape::self_attention(Ref x, Ref Wq, Ref Wk, Ref Wv,
                               const std::vector<char>& mask) {
  const size_t d = value(x).cols();
  Ref q = matmul(x, Wq);
  Ref k = matmul(x, Wk);
  Ref v = matmul(x, Wv);
  Ref scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
  Ref attn = masked_softmax_rows(scores, mask);
  return mask_rows(matmul(attn, v), mask);
}

Tape::Ref Tape::gru_cell(Ref x, Ref h, Ref Wz, Ref Uz, Ref bz, Ref Wr, Ref Ur,
                         Ref br, Ref Wh, Ref Uh, Ref bh) {
  Ref z = sigmoid_op(add(add(matmul(x, Wz), matmul(h, Uz)), bz));
  Ref rGate = sigmoid_op(add(add(matmul(x, Wr), matmul(h, Ur)), br));
  Ref hTilde = tanh_op(add(add(matmul(x, Wh), matmul(mul(rGate, h), Uh)), bh));
  // h' = (1-z) h + z h~
  return add(sub(h, mul(z, h)), mul(z, hTilde));
}

void Tape::backward(Ref root) {
  if (value(root).count() != 1)
    throw ContractError("backward() requires a scalar root");
  for (auto& node : nodes_)
    std::fill(node.grad.values.begin(), node.grad.values.end(), 0.0);
  grad_mut(root).values[0] = 1.0;
  for (size_t i = nodes_.size(); i-- > 0;)
    if (nodes_[i].back) nodes_[i].back();
}

}  // namespace osdec::neuro
