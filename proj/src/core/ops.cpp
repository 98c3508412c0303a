#include "mga/core/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mga/errors.hpp"

namespace mga::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t filters, kh, kw;
  std::size_t out_h, out_w;
  std::size_t stride, pad;

  std::size_t patch() const { return channels * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

void im2col(const double* image, const ConvGeometry& g, RowMat& cols) {
  cols.resize(static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.positions()));
  const auto h = static_cast<std::ptrdiff_t>(g.height);
  const auto w = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = image + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols.data() + ((c * g.kh + i) * g.kw + j) * g.positions();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
            row[oy * g.out_w + ox] = (y >= 0 && y < h && x >= 0 && x < w) ? plane[y * w + x] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const RowMat& cols, const ConvGeometry& g, double* image) {
  const auto h = static_cast<std::ptrdiff_t>(g.height);
  const auto w = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = image + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols.data() + ((c * g.kh + i) * g.kw + j) * g.positions();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          if (y < 0 || y >= h) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
            if (x >= 0 && x < w) plane[y * w + x] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

// Views a rank-3 image as a batch of one.
struct Batched {
  std::size_t n, c, h, w;
  bool unbatched;
};

Batched as_batched(const Tensor& t, const char* op) {
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), false};
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2), true};
  throw DimensionError(std::string(op) + ": expected C×H×W or N×C×H×W input, got " +
                       shape_string(t.shape()));
}

}  // namespace

Var conv2d(const Var& input, const Var& filters, const Var& bias, Conv2dSpec spec) {
  const Tensor& x = input.value();
  const Tensor& wt = filters.value();
  const auto b = as_batched(x, "conv2d");
  require(wt.rank() == 4, "conv2d: filters must be K×C×h×w, got " + shape_string(wt.shape()));
  require(wt.dim(1) == b.c, "conv2d: input has " + std::to_string(b.c) + " channels but filters expect " +
                                std::to_string(wt.dim(1)));
  require(bias.value().size() == wt.dim(0), "conv2d: bias length must equal filter count");
  require(spec.stride >= 1, "conv2d: stride must be >= 1");

  ConvGeometry g{b.n, b.c, b.h, b.w, wt.dim(0), wt.dim(2), wt.dim(3), 0, 0, spec.stride, spec.padding};
  require(g.kh <= b.h + 2 * g.pad && g.kw <= b.w + 2 * g.pad,
          "conv2d: kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) + " larger than input " +
              std::to_string(b.h) + "x" + std::to_string(b.w));
  g.out_h = (b.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.out_w = (b.w + 2 * g.pad - g.kw) / g.stride + 1;

  Shape out_shape = b.unbatched ? Shape{g.filters, g.out_h, g.out_w} : Shape{g.batch, g.filters, g.out_h, g.out_w};
  Tensor out(out_shape);
  const auto K = static_cast<Eigen::Index>(g.filters);
  const auto P = static_cast<Eigen::Index>(g.positions());
  const auto Q = static_cast<Eigen::Index>(g.patch());
  ConstMapMat weight(wt.data(), K, Q);
  Eigen::Map<const Eigen::VectorXd> bvec(bias.value().data(), K);
  RowMat cols;
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(x.data() + n * g.channels * g.height * g.width, g, cols);
    MapMat y(out.data() + n * g.filters * g.positions(), K, P);
    y.noalias() = weight * cols;
    y.colwise() += bvec;
  }

  return make_op(std::move(out), {input, filters, bias}, [g, K, P, Q](Node& self) {
    auto& in = *self.parents[0];
    auto& fl = *self.parents[1];
    auto& bs = *self.parents[2];
    const Tensor& dy = self.grad;
    RowMat cols;
    RowMat dcols;
    for (std::size_t n = 0; n < g.batch; ++n) {
      ConstMapMat dyn(dy.data() + n * g.filters * g.positions(), K, P);
      if (bs.requires_grad) {
        Eigen::Map<Eigen::VectorXd> db(bs.ensure_grad().data(), K);
        db += dyn.rowwise().sum();
      }
      if (fl.requires_grad) {
        im2col(in.value.data() + n * g.channels * g.height * g.width, g, cols);
        MapMat dw(fl.ensure_grad().data(), K, Q);
        dw.noalias() += dyn * cols.transpose();
      }
      if (in.requires_grad) {
        ConstMapMat weight(fl.value.data(), K, Q);
        dcols.noalias() = weight.transpose() * dyn;
        col2im_add(dcols, g, in.ensure_grad().data() + n * g.channels * g.height * g.width);
      }
    }
  });
}

Var max_pool2d(const Var& input, std::size_t size, std::size_t stride) {
  const Tensor& x = input.value();
  const auto b = as_batched(x, "max_pool2d");
  require(size >= 1 && stride >= 1, "max_pool2d: size and stride must be >= 1");
  require(size <= b.h && size <= b.w, "max_pool2d: window " + std::to_string(size) + " larger than input " +
                                          std::to_string(b.h) + "x" + std::to_string(b.w));
  const std::size_t oh = (b.h - size) / stride + 1;
  const std::size_t ow = (b.w - size) / stride + 1;
  Shape out_shape = b.unbatched ? Shape{b.c, oh, ow} : Shape{b.n, b.c, oh, ow};
  Tensor out(out_shape);
  std::vector<std::size_t> argmax(out.size());
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < b.n * b.c; ++plane) {
    const std::size_t base = plane * b.h * b.w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = base + (oy * stride) * b.w + ox * stride;
        for (std::size_t i = 0; i < size; ++i) {
          for (std::size_t j = 0; j < size; ++j) {
            const std::size_t idx = base + (oy * stride + i) * b.w + ox * stride + j;
            if (x[idx] > x[best]) best = idx;
          }
        }
        out[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  return make_op(std::move(out), {input}, [argmax = std::move(argmax)](Node& self) {
    Tensor& dx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += self.grad[i];
  });
}

Var relu(const Var& input) {
  Tensor out = input.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_op(std::move(out), {input}, [](Node& self) {
    Node& in = *self.parents[0];
    Tensor& dx = in.ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (in.value[i] > 0.0) dx[i] += self.grad[i];
    }
  });
}

Var batch_norm(const Var& input, const Var& gamma, const Var& beta, BatchNormStats stats,
               BatchNormOptions options) {
  const Tensor& x = input.value();
  std::size_t n = 0, c = 0, s = 1;
  if (x.rank() == 2) {
    n = x.dim(0);
    c = x.dim(1);
  } else if (x.rank() == 4) {
    n = x.dim(0);
    c = x.dim(1);
    s = x.dim(2) * x.dim(3);
  } else {
    throw DimensionError("batch_norm: expected N×F or N×C×H×W input, got " + shape_string(x.shape()));
  }
  require(gamma.value().size() == c && beta.value().size() == c,
          "batch_norm: gamma/beta length must equal channel count " + std::to_string(c));
  if (!stats.mean || !stats.var || !stats.count) throw StateError("batch_norm: running statistics not bound");
  require(stats.mean->size() == c && stats.var->size() == c, "batch_norm: running statistics have wrong length");
  if (!(options.eps > 0.0)) throw ContractError("batch_norm: eps must be positive");

  const double m = static_cast<double>(n * s);
  std::vector<double> mean(c, 0.0), inv_std(c, 0.0);
  if (options.mode == BnMode::Train) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = x.data() + (i * c + ch) * s;
        for (std::size_t k = 0; k < s; ++k) sum += p[k];
      }
      const double mu = sum / m;
      double sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = x.data() + (i * c + ch) * s;
        for (std::size_t k = 0; k < s; ++k) sq += (p[k] - mu) * (p[k] - mu);
      }
      const double var = sq / m;
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + options.eps);
      if ((*stats.count)[0] == 0.0) {
        (*stats.mean)[ch] = mu;
        (*stats.var)[ch] = var;
      } else {
        (*stats.mean)[ch] = options.momentum * (*stats.mean)[ch] + (1.0 - options.momentum) * mu;
        (*stats.var)[ch] = options.momentum * (*stats.var)[ch] + (1.0 - options.momentum) * var;
      }
    }
    (*stats.count)[0] += 1.0;
  } else {
    if ((*stats.count)[0] <= 0.0) throw StateError("batch_norm: infer mode without accumulated statistics");
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = (*stats.mean)[ch];
      inv_std[ch] = 1.0 / std::sqrt((*stats.var)[ch] + options.eps);
    }
  }

  Tensor xhat(x.shape());
  Tensor out(x.shape());
  const Tensor& g = gamma.value();
  const Tensor& bt = beta.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (i * c + ch) * s;
      for (std::size_t k = 0; k < s; ++k) {
        const double h = (x[off + k] - mean[ch]) * inv_std[ch];
        xhat[off + k] = h;
        out[off + k] = g[ch] * h + bt[ch];
      }
    }
  }

  const bool train = options.mode == BnMode::Train;
  return make_op(std::move(out), {input, gamma, beta},
                 [n, c, s, m, train, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                   Node& in = *self.parents[0];
                   Node& gm = *self.parents[1];
                   Node& bt = *self.parents[2];
                   const Tensor& dy = self.grad;
                   std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
                   for (std::size_t i = 0; i < n; ++i) {
                     for (std::size_t ch = 0; ch < c; ++ch) {
                       const std::size_t off = (i * c + ch) * s;
                       for (std::size_t k = 0; k < s; ++k) {
                         sum_dy[ch] += dy[off + k];
                         sum_dy_xhat[ch] += dy[off + k] * xhat[off + k];
                       }
                     }
                   }
                   if (gm.requires_grad) {
                     Tensor& dg = gm.ensure_grad();
                     for (std::size_t ch = 0; ch < c; ++ch) dg[ch] += sum_dy_xhat[ch];
                   }
                   if (bt.requires_grad) {
                     Tensor& db = bt.ensure_grad();
                     for (std::size_t ch = 0; ch < c; ++ch) db[ch] += sum_dy[ch];
                   }
                   if (!in.requires_grad) return;
                   Tensor& dx = in.ensure_grad();
                   const Tensor& g = gm.value;
                   for (std::size_t i = 0; i < n; ++i) {
                     for (std::size_t ch = 0; ch < c; ++ch) {
                       const std::size_t off = (i * c + ch) * s;
                       const double scale = g[ch] * inv_std[ch];
                       for (std::size_t k = 0; k < s; ++k) {
                         if (train) {
                           dx[off + k] += scale * (dy[off + k] - sum_dy[ch] / m -
                                                   xhat[off + k] * sum_dy_xhat[ch] / m);
                         } else {
                           dx[off + k] += scale * dy[off + k];
                         }
                       }
                     }
                   }
                 });
}

Var global_avg_pool(const Var& input) {
  const Tensor& x = input.value();
  const auto b = as_batched(x, "global_avg_pool");
  const std::size_t area = b.h * b.w;
  Tensor out(b.unbatched ? Shape{b.c} : Shape{b.n, b.c});
  for (std::size_t plane = 0; plane < b.n * b.c; ++plane) {
    double sum = 0.0;
    for (std::size_t k = 0; k < area; ++k) sum += x[plane * area + k];
    out[plane] = sum / static_cast<double>(area);
  }
  return make_op(std::move(out), {input}, [area](Node& self) {
    Tensor& dx = self.parents[0]->ensure_grad();
    const double inv = 1.0 / static_cast<double>(area);
    for (std::size_t plane = 0; plane < self.grad.size(); ++plane) {
      const double g = self.grad[plane] * inv;
      for (std::size_t k = 0; k < area; ++k) dx[plane * area + k] += g;
    }
  });
}

Var linear(const Var& input, const Var& weight, const Var& bias) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  require(x.rank() == 2, "linear: input must be N×in, got " + shape_string(x.shape()));
  require(w.rank() == 2, "linear: weight must be out×in, got " + shape_string(w.shape()));
  require(w.dim(1) == x.dim(1), "linear: input width " + std::to_string(x.dim(1)) + " does not match weight " +
                                    shape_string(w.shape()));
  require(bias.value().size() == w.dim(0), "linear: bias length must equal output width");
  const auto N = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(x.dim(1));
  const auto outw = static_cast<Eigen::Index>(w.dim(0));
  Tensor out({x.dim(0), w.dim(0)});
  MapMat y(out.data(), N, outw);
  y.noalias() = ConstMapMat(x.data(), N, in) * ConstMapMat(w.data(), outw, in).transpose();
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().data(), outw);
  return make_op(std::move(out), {input, weight, bias}, [N, in, outw](Node& self) {
    Node& xn = *self.parents[0];
    Node& wn = *self.parents[1];
    Node& bn = *self.parents[2];
    ConstMapMat dy(self.grad.data(), N, outw);
    if (xn.requires_grad) {
      MapMat dx(xn.ensure_grad().data(), N, in);
      dx.noalias() += dy * ConstMapMat(wn.value.data(), outw, in);
    }
    if (wn.requires_grad) {
      MapMat dw(wn.ensure_grad().data(), outw, in);
      dw.noalias() += dy.transpose() * ConstMapMat(xn.value.data(), N, in);
    }
    if (bn.requires_grad) {
      Eigen::Map<Eigen::RowVectorXd> db(bn.ensure_grad().data(), outw);
      db += dy.colwise().sum();
    }
  });
}

Var softmax(const Var& logits) {
  const Tensor& z = logits.value();
  require(z.rank() == 1 || z.rank() == 2, "softmax: expected rank 1 or 2, got " + shape_string(z.shape()));
  const std::size_t cols = z.shape().back();
  const std::size_t rows = z.size() / cols;
  require(cols >= 2, "softmax: need at least 2 classes");
  Tensor p(z.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z.data() + r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < cols; ++k) {
      if (!std::isfinite(zr[k])) throw NumericError("softmax: non-finite logit");
      mx = std::max(mx, zr[k]);
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < cols; ++k) {
      p[r * cols + k] = std::exp(zr[k] - mx);
      sum += p[r * cols + k];
    }
    for (std::size_t k = 0; k < cols; ++k) p[r * cols + k] /= sum;
  }
  return make_op(std::move(p), {logits}, [rows, cols](Node& self) {
    Tensor& dz = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t k = 0; k < cols; ++k) dot += self.grad[r * cols + k] * self.value[r * cols + k];
      for (std::size_t k = 0; k < cols; ++k) {
        dz[r * cols + k] += self.value[r * cols + k] * (self.grad[r * cols + k] - dot);
      }
    }
  });
}

Var concat_columns(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require(x.rank() == 2 && y.rank() == 2 && x.dim(0) == y.dim(0),
          "concat_columns: expected N×p and N×q, got " + shape_string(x.shape()) + " and " +
              shape_string(y.shape()));
  const std::size_t n = x.dim(0), p = x.dim(1), q = y.dim(1);
  Tensor out({n, p + q});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.data() + i * p, p, out.data() + i * (p + q));
    std::copy_n(y.data() + i * q, q, out.data() + i * (p + q) + p);
  }
  return make_op(std::move(out), {a, b}, [n, p, q](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    for (std::size_t i = 0; i < n; ++i) {
      const double* g = self.grad.data() + i * (p + q);
      if (an.requires_grad) {
        double* da = an.ensure_grad().data() + i * p;
        for (std::size_t k = 0; k < p; ++k) da[k] += g[k];
      }
      if (bn.requires_grad) {
        double* db = bn.ensure_grad().data() + i * q;
        for (std::size_t k = 0; k < q; ++k) db[k] += g[p + k];
      }
    }
  });
}

Var affine(const Var& input, double scale, double offset) {
  Tensor out = input.value();
  for (auto& v : out.values()) v = scale * v + offset;
  return make_op(std::move(out), {input}, [scale](Node& self) {
    Tensor& dx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += scale * self.grad[i];
  });
}

Var weighted_sum(const std::vector<std::pair<double, Var>>& terms) {
  if (terms.empty()) throw ContractError("weighted_sum: no terms");
  Tensor out = Tensor::zeros_like(terms.front().second.value());
  std::vector<Var> parents;
  std::vector<double> weights;
  for (const auto& [w, t] : terms) {
    require(t.value().same_shape(out), "weighted_sum: terms must share a shape");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * t.value()[i];
    parents.push_back(t);
    weights.push_back(w);
  }
  return make_op(std::move(out), parents, [weights](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      Tensor& dp = p.ensure_grad();
      for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += weights[k] * self.grad[i];
    }
  });
}

Var mixture(const Var& gate, const std::vector<Var>& experts) {
  const Tensor& gv = gate.value();
  require(gv.rank() == 2, "mixture: gate must be N×K");
  const std::size_t n = gv.dim(0), k = gv.dim(1);
  require(experts.size() == k, "mixture: expert count must equal gate width");
  const std::size_t c = experts.front().value().rank() == 2 ? experts.front().value().dim(1) : 0;
  for (const auto& e : experts) {
    require(e.value().rank() == 2 && e.value().dim(0) == n && e.value().dim(1) == c,
            "mixture: every expert must be N×C");
  }
  Tensor out({n, c});
  for (std::size_t e = 0; e < k; ++e) {
    const Tensor& ev = experts[e].value();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] += gv[i * k + e] * ev[i * c + j];
    }
  }
  std::vector<Var> parents{gate};
  parents.insert(parents.end(), experts.begin(), experts.end());
  return make_op(std::move(out), parents, [n, k, c](Node& self) {
    Node& gn = *self.parents[0];
    for (std::size_t e = 0; e < k; ++e) {
      Node& en = *self.parents[1 + e];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          const double g = self.grad[i * c + j];
          if (gn.requires_grad) gn.ensure_grad()[i * k + e] += g * en.value[i * c + j];
          if (en.requires_grad) en.ensure_grad()[i * c + j] += g * gn.value[i * k + e];
        }
      }
    }
  });
}

Var mean_abs_error(const Var& pred, std::span<const double> targets) {
  const Tensor& p = pred.value();
  if (targets.empty()) throw ContractError("mean_abs_error: empty batch");
  require(p.size() == targets.size(), "mean_abs_error: " + std::to_string(p.size()) + " predictions for " +
                                          std::to_string(targets.size()) + " targets");
  const double n = static_cast<double>(targets.size());
  double sum = 0.0;
  std::vector<double> sign(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double d = p[i] - targets[i];
    sum += std::abs(d);
    sign[i] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
  }
  return make_op(Tensor::scalar(sum / n), {pred}, [sign = std::move(sign), n](Node& self) {
    Tensor& dp = self.parents[0]->ensure_grad();
    const double g = self.grad[0] / n;
    for (std::size_t i = 0; i < sign.size(); ++i) dp[i] += g * sign[i];
  });
}

Var cross_entropy(const Var& probs, std::span<const int> labels, double clamp) {
  const Tensor& p = probs.value();
  require(p.rank() == 2, "cross_entropy: probabilities must be N×G, got " + shape_string(p.shape()));
  const std::size_t n = p.dim(0), g = p.dim(1);
  if (labels.empty()) throw ContractError("cross_entropy: empty batch");
  require(labels.size() == n, "cross_entropy: label count does not match batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= g) {
      throw ContractError("cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " +
                          std::to_string(g) + ")");
    }
    sum -= std::log(std::max(p[i * g + static_cast<std::size_t>(labels[i])], clamp));
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return make_op(Tensor::scalar(sum / static_cast<double>(n)), {probs},
                 [lab = std::move(lab), n, g, clamp](Node& self) {
                   Node& pn = *self.parents[0];
                   Tensor& dp = pn.ensure_grad();
                   const double scale = self.grad[0] / static_cast<double>(n);
                   for (std::size_t i = 0; i < n; ++i) {
                     const std::size_t idx = i * g + static_cast<std::size_t>(lab[i]);
                     if (pn.value[idx] > clamp) dp[idx] -= scale / pn.value[idx];
                   }
                 });
}

}  // namespace mga::nn
