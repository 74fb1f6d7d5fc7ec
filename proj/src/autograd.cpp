#include "dsgd/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace dsgd::ag {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

bool any_requires_grad(const std::vector<Var>& vs) {
  if (!g_grad_enabled) return false;
  for (const auto& v : vs)
    if (v && v->requires_grad) return true;
  return false;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (any_requires_grad(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return n;
}

int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// col layout: [(c*k + ky)*k + kx][oy*Wo + ox]
void im2col(const Scalar* x, int c_in, int h, int w, int k, int stride, int pad, int ho, int wo,
            Scalar* col) {
  const int hw_out = ho * wo;
  for (int c = 0; c < c_in; ++c) {
    const Scalar* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* row = col + static_cast<std::size_t>((c * k + ky) * k + kx) * hw_out;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          Scalar* dst = row + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, Scalar{0});
            continue;
          }
          const Scalar* src = xc + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : Scalar{0};
          }
        }
      }
    }
  }
}

void col2im_add(const Scalar* col, int c_in, int h, int w, int k, int stride, int pad, int ho,
                int wo, Scalar* x) {
  const int hw_out = ho * wo;
  for (int c = 0; c < c_in; ++c) {
    Scalar* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* row = col + static_cast<std::size_t>((c * k + ky) * k + kx) * hw_out;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          Scalar* dst = xc + static_cast<std::size_t>(iy) * w;
          const Scalar* src = row + oy * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

Var parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return n;
}

void backward(const Var& root) {
  if (!root || root->value.size() != 1) throw std::invalid_argument("backward needs a scalar root");
  if (!root->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS; graphs from deep dense blocks overflow recursion.
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad()[0] += 1;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Interior gradients are scratch; drop them so the graph can be freed.
  for (Node* n : order)
    if (n->backward_fn) n->grad = Tensor();
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const Tensor& X = x->value;
  const Tensor& W = w->value;
  if (X.rank() != 4 || W.rank() != 4 || W.dim(1) != X.dim(1) || W.dim(2) != W.dim(3))
    throw std::invalid_argument("conv2d shape mismatch: input " + X.shape_string() + " weight " +
                                W.shape_string());
  const int n = X.dim(0), cin = X.dim(1), h = X.dim(2), wd = X.dim(3);
  const int cout = W.dim(0), k = W.dim(2);
  const int ho = conv_out(h, k, stride, pad), wo = conv_out(wd, k, stride, pad);
  const bool direct = (k == 1 && stride == 1 && pad == 0);
  const int kk = cin * k * k, hw = ho * wo;
  Tensor Y({n, cout, ho, wo});
  std::vector<Scalar> col(direct ? 0 : static_cast<std::size_t>(kk) * hw);
  CMapMat wm(W.data(), cout, kk);
  for (int i = 0; i < n; ++i) {
    const Scalar* xi = X.data() + static_cast<std::size_t>(i) * cin * h * wd;
    if (!direct) im2col(xi, cin, h, wd, k, stride, pad, ho, wo, col.data());
    CMapMat cm(direct ? xi : col.data(), kk, hw);
    MapMat ym(Y.data() + static_cast<std::size_t>(i) * cout * hw, cout, hw);
    ym.noalias() = wm * cm;
    if (b) {
      for (int c = 0; c < cout; ++c) ym.row(c).array() += b->value[c];
    }
  }
  std::vector<Var> parents{x, w};
  if (b) parents.push_back(b);
  return make_node(std::move(Y), parents, [=](Node& self) {
    const Tensor& G = self.grad;
    const Tensor& Xv = x->value;
    const Tensor& Wv = w->value;
    std::vector<Scalar> colb(direct ? 0 : static_cast<std::size_t>(kk) * hw);
    std::vector<Scalar> dcol(static_cast<std::size_t>(kk) * hw);
    CMapMat wmb(Wv.data(), cout, kk);
    for (int i = 0; i < n; ++i) {
      CMapMat gm(G.data() + static_cast<std::size_t>(i) * cout * hw, cout, hw);
      const Scalar* xi = Xv.data() + static_cast<std::size_t>(i) * cin * h * wd;
      if (w->requires_grad) {
        if (!direct) im2col(xi, cin, h, wd, k, stride, pad, ho, wo, colb.data());
        CMapMat cm(direct ? xi : colb.data(), kk, hw);
        MapMat dw(w->ensure_grad().data(), cout, kk);
        dw.noalias() += gm * cm.transpose();
      }
      if (b && b->requires_grad) {
        Tensor& db = b->ensure_grad();
        for (int c = 0; c < cout; ++c) db[c] += gm.row(c).sum();
      }
      if (x->requires_grad) {
        Scalar* dx = x->ensure_grad().data() + static_cast<std::size_t>(i) * cin * h * wd;
        if (direct) {
          MapMat dxm(dx, kk, hw);
          dxm.noalias() += wmb.transpose() * gm;
        } else {
          MapMat dcm(dcol.data(), kk, hw);
          dcm.noalias() = wmb.transpose() * gm;
          col2im_add(dcol.data(), cin, h, wd, k, stride, pad, ho, wo, dx);
        }
      }
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const Tensor& X = x->value;
  const Tensor& W = w->value;
  if (X.rank() != 4 || W.rank() != 4 || W.dim(0) != X.dim(1) || W.dim(2) != W.dim(3))
    throw std::invalid_argument("conv_transpose2d shape mismatch: input " + X.shape_string() +
                                " weight " + W.shape_string());
  const int n = X.dim(0), cin = X.dim(1), h = X.dim(2), wd = X.dim(3);
  const int cout = W.dim(1), k = W.dim(2);
  const int ho = (h - 1) * stride - 2 * pad + k, wo = (wd - 1) * stride - 2 * pad + k;
  const int ck = cout * k * k, hw = h * wd;
  Tensor Y({n, cout, ho, wo});
  std::vector<Scalar> col(static_cast<std::size_t>(ck) * hw);
  CMapMat wm(W.data(), cin, ck);
  for (int i = 0; i < n; ++i) {
    CMapMat xm(X.data() + static_cast<std::size_t>(i) * cin * hw, cin, hw);
    MapMat cm(col.data(), ck, hw);
    cm.noalias() = wm.transpose() * xm;
    Scalar* yi = Y.data() + static_cast<std::size_t>(i) * cout * ho * wo;
    col2im_add(col.data(), cout, ho, wo, k, stride, pad, h, wd, yi);
    if (b) {
      for (int c = 0; c < cout; ++c) {
        Scalar* yc = yi + static_cast<std::size_t>(c) * ho * wo;
        for (int j = 0; j < ho * wo; ++j) yc[j] += b->value[c];
      }
    }
  }
  std::vector<Var> parents{x, w};
  if (b) parents.push_back(b);
  return make_node(std::move(Y), parents, [=](Node& self) {
    const Tensor& G = self.grad;
    std::vector<Scalar> gcol(static_cast<std::size_t>(ck) * hw);
    CMapMat wmb(w->value.data(), cin, ck);
    for (int i = 0; i < n; ++i) {
      const Scalar* gi = G.data() + static_cast<std::size_t>(i) * cout * ho * wo;
      im2col(gi, cout, ho, wo, k, stride, pad, h, wd, gcol.data());
      CMapMat gm(gcol.data(), ck, hw);
      if (x->requires_grad) {
        MapMat dx(x->ensure_grad().data() + static_cast<std::size_t>(i) * cin * hw, cin, hw);
        dx.noalias() += wmb * gm;
      }
      if (w->requires_grad) {
        CMapMat xm(x->value.data() + static_cast<std::size_t>(i) * cin * hw, cin, hw);
        MapMat dw(w->ensure_grad().data(), cin, ck);
        dw.noalias() += xm * gm.transpose();
      }
      if (b && b->requires_grad) {
        Tensor& db = b->ensure_grad();
        for (int c = 0; c < cout; ++c) {
          const Scalar* gc = gi + static_cast<std::size_t>(c) * ho * wo;
          Scalar s = 0;
          for (int j = 0; j < ho * wo; ++j) s += gc[j];
          db[c] += s;
        }
      }
    }
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state,
               bool training) {
  const Tensor& X = x->value;
  if (X.rank() != 4 || gamma->value.size() != static_cast<std::size_t>(X.dim(1)))
    throw std::invalid_argument("batch_norm shape mismatch: " + X.shape_string());
  const int n = X.dim(0), c = X.dim(1), hw = X.dim(2) * X.dim(3);
  const std::size_t m = static_cast<std::size_t>(n) * hw;
  if (state.running_mean.size() != static_cast<std::size_t>(c)) {
    state.running_mean = Tensor({c}, 0);
    state.running_var = Tensor({c}, 1);
  }
  Tensor mean({c}), invstd({c});
  for (int ch = 0; ch < c; ++ch) {
    double mu, var;
    if (training) {
      double s = 0, s2 = 0;
      for (int i = 0; i < n; ++i) {
        const Scalar* p = X.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
        for (int j = 0; j < hw; ++j) {
          s += p[j];
          s2 += static_cast<double>(p[j]) * p[j];
        }
      }
      mu = s / m;
      var = std::max(0.0, s2 / m - mu * mu);
      const double unbiased = m > 1 ? var * m / (m - 1) : var;
      state.running_mean[ch] = static_cast<Scalar>((1 - state.momentum) * state.running_mean[ch] +
                                                   state.momentum * mu);
      state.running_var[ch] = static_cast<Scalar>((1 - state.momentum) * state.running_var[ch] +
                                                  state.momentum * unbiased);
    } else {
      mu = state.running_mean[ch];
      var = state.running_var[ch];
    }
    mean[ch] = static_cast<Scalar>(mu);
    invstd[ch] = static_cast<Scalar>(1.0 / std::sqrt(var + state.eps));
  }
  Tensor Y(X.shape());
  Tensor xhat(X.shape());
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * hw;
      const Scalar g = gamma->value[ch], bt = beta->value[ch];
      for (int j = 0; j < hw; ++j) {
        const Scalar xh = (X[off + j] - mean[ch]) * invstd[ch];
        xhat[off + j] = xh;
        Y[off + j] = g * xh + bt;
      }
    }
  return make_node(std::move(Y), {x, gamma, beta},
                   [=, xhat = std::move(xhat), invstd = std::move(invstd)](Node& self) {
                     const Tensor& G = self.grad;
                     for (int ch = 0; ch < c; ++ch) {
                       double sg = 0, sgx = 0;
                       for (int i = 0; i < n; ++i) {
                         const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * hw;
                         for (int j = 0; j < hw; ++j) {
                           sg += G[off + j];
                           sgx += static_cast<double>(G[off + j]) * xhat[off + j];
                         }
                       }
                       if (gamma->requires_grad) gamma->ensure_grad()[ch] += static_cast<Scalar>(sgx);
                       if (beta->requires_grad) beta->ensure_grad()[ch] += static_cast<Scalar>(sg);
                       if (!x->requires_grad) continue;
                       Tensor& dx = x->ensure_grad();
                       const Scalar g = gamma->value[ch];
                       const Scalar is = invstd[ch];
                       for (int i = 0; i < n; ++i) {
                         const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * hw;
                         for (int j = 0; j < hw; ++j) {
                           if (training) {
                             dx[off + j] += static_cast<Scalar>(
                                 g * is * (G[off + j] - sg / m - xhat[off + j] * sgx / m));
                           } else {
                             dx[off + j] += g * is * G[off + j];
                           }
                         }
                       }
                     }
                   });
}

Var relu(const Var& x) {
  Tensor Y(x->value.shape());
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = std::max(Scalar{0}, x->value[i]);
  return make_node(std::move(Y), {x}, [x](Node& self) {
    Tensor& dx = x->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (x->value[i] > 0) dx[i] += self.grad[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor Y(x->value.shape());
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = 1 / (1 + std::exp(-x->value[i]));
  return make_node(Y, {x}, [x, Y](Node& self) {
    Tensor& dx = x->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * Y[i] * (1 - Y[i]);
  });
}

Var softplus(const Var& x) {
  Tensor Y(x->value.shape());
  for (std::size_t i = 0; i < Y.size(); ++i) {
    const Scalar v = x->value[i];
    Y[i] = v > 20 ? v : std::log1p(std::exp(v));
  }
  return make_node(std::move(Y), {x}, [x](Node& self) {
    Tensor& dx = x->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i)
      dx[i] += self.grad[i] / (1 + std::exp(-x->value[i]));
  });
}

Var avg_pool2(const Var& x) {
  const Tensor& X = x->value;
  const int n = X.dim(0), c = X.dim(1), h = X.dim(2) / 2, w = X.dim(3) / 2;
  Tensor Y({n, c, h, w});
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          Y.at(i, ch, y, xx) = 0.25f * (X.at(i, ch, 2 * y, 2 * xx) + X.at(i, ch, 2 * y, 2 * xx + 1) +
                                        X.at(i, ch, 2 * y + 1, 2 * xx) +
                                        X.at(i, ch, 2 * y + 1, 2 * xx + 1));
  return make_node(std::move(Y), {x}, [x, n, c, h, w](Node& self) {
    Tensor& dx = x->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) {
            const Scalar g = 0.25f * self.grad.at(i, ch, y, xx);
            dx.at(i, ch, 2 * y, 2 * xx) += g;
            dx.at(i, ch, 2 * y, 2 * xx + 1) += g;
            dx.at(i, ch, 2 * y + 1, 2 * xx) += g;
            dx.at(i, ch, 2 * y + 1, 2 * xx + 1) += g;
          }
  });
}

Var global_avg_pool(const Var& x) {
  const Tensor& X = x->value;
  const int n = X.dim(0), c = X.dim(1), hw = X.dim(2) * X.dim(3);
  Tensor Y({n, c});
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const Scalar* p = X.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
      Scalar s = 0;
      for (int j = 0; j < hw; ++j) s += p[j];
      Y[static_cast<std::size_t>(i) * c + ch] = s / hw;
    }
  return make_node(std::move(Y), {x}, [x, n, c, hw](Node& self) {
    Tensor& dx = x->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const Scalar g = self.grad[static_cast<std::size_t>(i) * c + ch] / hw;
        Scalar* p = dx.data() + (static_cast<std::size_t>(i) * c + ch) * hw;
        for (int j = 0; j < hw; ++j) p[j] += g;
      }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const Tensor& X = x->value;
  const int n = X.dim(0);
  const int f = static_cast<int>(X.size() / n);
  const int o = w->value.dim(0);
  if (w->value.dim(1) != f)
    throw std::invalid_argument("linear: input features " + std::to_string(f) + " vs weight " +
                                w->value.shape_string());
  Tensor Y({n, o});
  CMapMat xm(X.data(), n, f);
  CMapMat wm(w->value.data(), o, f);
  MapMat ym(Y.data(), n, o);
  ym.noalias() = xm * wm.transpose();
  if (b)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < o; ++j) ym(i, j) += b->value[j];
  std::vector<Var> parents{x, w};
  if (b) parents.push_back(b);
  return make_node(std::move(Y), parents, [=](Node& self) {
    CMapMat gm(self.grad.data(), n, o);
    if (x->requires_grad) {
      MapMat dx(x->ensure_grad().data(), n, f);
      dx.noalias() += gm * CMapMat(w->value.data(), o, f);
    }
    if (w->requires_grad) {
      MapMat dw(w->ensure_grad().data(), o, f);
      dw.noalias() += gm.transpose() * CMapMat(x->value.data(), n, f);
    }
    if (b && b->requires_grad) {
      Tensor& db = b->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < o; ++j) db[j] += gm(i, j);
    }
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Tensor& first = xs.front()->value;
  const int n = first.dim(0), h = first.dim(2), w = first.dim(3);
  int c_total = 0;
  for (const auto& v : xs) {
    if (v->value.dim(0) != n || v->value.dim(2) != h || v->value.dim(3) != w)
      throw std::invalid_argument("concat_channels: spatial mismatch " + v->value.shape_string() +
                                  " vs " + first.shape_string());
    c_total += v->value.dim(1);
  }
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  Tensor Y({n, c_total, h, w});
  for (int i = 0; i < n; ++i) {
    std::size_t dst = static_cast<std::size_t>(i) * c_total * hw;
    for (const auto& v : xs) {
      const std::size_t len = static_cast<std::size_t>(v->value.dim(1)) * hw;
      std::copy_n(v->value.data() + i * len, len, Y.data() + dst);
      dst += len;
    }
  }
  return make_node(std::move(Y), xs, [xs, n, c_total, hw](Node& self) {
    for (int i = 0; i < n; ++i) {
      std::size_t src = static_cast<std::size_t>(i) * c_total * hw;
      for (const auto& v : xs) {
        const std::size_t len = static_cast<std::size_t>(v->value.dim(1)) * hw;
        if (v->requires_grad) {
          Scalar* d = v->ensure_grad().data() + i * len;
          for (std::size_t j = 0; j < len; ++j) d[j] += self.grad[src + j];
        }
        src += len;
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value)) throw std::invalid_argument("add: shape mismatch");
  Tensor Y(a->value.shape());
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = a->value[i] + b->value[i];
  return make_node(std::move(Y), {a, b}, [a, b](Node& self) {
    for (const auto& v : {a, b})
      if (v->requires_grad) {
        Tensor& d = v->ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
      }
  });
}

Var scale(const Var& a, Scalar s) {
  Tensor Y(a->value.shape());
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = a->value[i] * s;
  return make_node(std::move(Y), {a}, [a, s](Node& self) {
    Tensor& d = a->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * s;
  });
}

Scalar bilinear_sample(const Tensor& x, int n, int c, Scalar fy, Scalar fx) {
  const int h = x.dim(2), w = x.dim(3);
  fy = std::clamp(fy, Scalar{0}, static_cast<Scalar>(h - 1));
  fx = std::clamp(fx, Scalar{0}, static_cast<Scalar>(w - 1));
  const int y0 = static_cast<int>(std::floor(fy)), x0 = static_cast<int>(std::floor(fx));
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const Scalar ly = fy - y0, lx = fx - x0;
  return (1 - ly) * ((1 - lx) * x.at(n, c, y0, x0) + lx * x.at(n, c, y0, x1)) +
         ly * ((1 - lx) * x.at(n, c, y1, x0) + lx * x.at(n, c, y1, x1));
}

Var roi_align(const Var& x, std::span<const RoiBox> rois_in, int out_h, int out_w) {
  const Tensor& X = x->value;
  const int c = X.dim(1), h = X.dim(2), w = X.dim(3);
  const int r = static_cast<int>(rois_in.size());
  std::vector<RoiBox> rois(rois_in.begin(), rois_in.end());
  Tensor Y({r, c, out_h, out_w});
  struct Tap {
    int y0, x0, y1, x1;
    Scalar w00, w01, w10, w11;
  };
  std::vector<Tap> taps(static_cast<std::size_t>(r) * out_h * out_w);
  for (int i = 0; i < r; ++i) {
    const RoiBox& b = rois[i];
    const Scalar bh = (b.y1 - b.y0) / out_h, bw = (b.x1 - b.x0) / out_w;
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        Scalar fy = std::clamp(b.y0 + (oy + Scalar{0.5}) * bh, Scalar{0}, Scalar(h - 1));
        Scalar fx = std::clamp(b.x0 + (ox + Scalar{0.5}) * bw, Scalar{0}, Scalar(w - 1));
        const int y0 = static_cast<int>(std::floor(fy)), x0 = static_cast<int>(std::floor(fx));
        const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
        const Scalar ly = fy - y0, lx = fx - x0;
        taps[(static_cast<std::size_t>(i) * out_h + oy) * out_w + ox] = {
            y0, x0, y1, x1, (1 - ly) * (1 - lx), (1 - ly) * lx, ly * (1 - lx), ly * lx};
      }
    for (int ch = 0; ch < c; ++ch)
      for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
          const Tap& t = taps[(static_cast<std::size_t>(i) * out_h + oy) * out_w + ox];
          Y.at(i, ch, oy, ox) = t.w00 * X.at(b.batch, ch, t.y0, t.x0) +
                                t.w01 * X.at(b.batch, ch, t.y0, t.x1) +
                                t.w10 * X.at(b.batch, ch, t.y1, t.x0) +
                                t.w11 * X.at(b.batch, ch, t.y1, t.x1);
        }
  }
  return make_node(std::move(Y), {x},
                   [x, rois = std::move(rois), taps = std::move(taps), r, c, out_h, out_w](Node& self) {
                     Tensor& dx = x->ensure_grad();
                     for (int i = 0; i < r; ++i) {
                       const int bi = rois[i].batch;
                       for (int ch = 0; ch < c; ++ch)
                         for (int oy = 0; oy < out_h; ++oy)
                           for (int ox = 0; ox < out_w; ++ox) {
                             const Tap& t =
                                 taps[(static_cast<std::size_t>(i) * out_h + oy) * out_w + ox];
                             const Scalar g = self.grad.at(i, ch, oy, ox);
                             dx.at(bi, ch, t.y0, t.x0) += t.w00 * g;
                             dx.at(bi, ch, t.y0, t.x1) += t.w01 * g;
                             dx.at(bi, ch, t.y1, t.x0) += t.w10 * g;
                             dx.at(bi, ch, t.y1, t.x1) += t.w11 * g;
                           }
                     }
                   });
}

Var eager_loss(const std::vector<Var>& inputs, const EagerLoss& fn) {
  std::vector<const Tensor*> values;
  values.reserve(inputs.size());
  for (const auto& v : inputs) values.push_back(&v->value);
  auto grads = std::make_shared<std::vector<Tensor>>();
  std::vector<Tensor*> gptrs;
  grads->reserve(inputs.size());
  for (const auto& v : inputs) grads->emplace_back(v->value.shape());
  for (auto& g : *grads) gptrs.push_back(&g);
  const Scalar value = fn(values, gptrs);
  Tensor Y({1}, value);
  return make_node(std::move(Y), inputs, [inputs, grads](Node& self) {
    const Scalar up = self.grad[0];
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (!inputs[k]->requires_grad) continue;
      Tensor& d = inputs[k]->ensure_grad();
      const Tensor& g = (*grads)[k];
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += up * g[i];
    }
  });
}

Var weighted_sum(const std::vector<Var>& terms, const std::vector<Scalar>& weights) {
  if (terms.size() != weights.size()) throw std::invalid_argument("weighted_sum: size mismatch");
  Scalar total = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) total += weights[i] * terms[i]->value[0];
  return make_node(Tensor({1}, total), terms, [terms, weights](Node& self) {
    for (std::size_t i = 0; i < terms.size(); ++i)
      if (terms[i]->requires_grad) terms[i]->ensure_grad()[0] += weights[i] * self.grad[0];
  });
}

}  // namespace dsgd::ag
