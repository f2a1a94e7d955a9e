#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "pfgen/errors.hpp"
#include "pfgen/tensor.hpp"

namespace pfgen {

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

// Reverse-mode tape over a fixed op set. Values are float32; reductions
// accumulate in double and traverse flat storage in index order, so results
// are bitwise reproducible within one build. One tape records one forward
// pass and can be differentiated exactly once.
class Tape {
  using MatCM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
  using MapM = Eigen::Map<MatCM>;
  using CMapM = Eigen::Map<const MatCM>;
  using MapV = Eigen::Map<Eigen::VectorXf>;
  using CMapV = Eigen::Map<const Eigen::VectorXf>;

 public:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated by backward(); empty before
    std::function<void(Tape&)> backprop;  // empty for leaves
  };

  int leaf(const Tensor& value) {
    require(!value.empty() || value.rank() > 0, ErrorCategory::dimension,
            "leaf: tensor must be constructed");
    nodes_.push_back(Node{value, Tensor{}, {}});
    return last();
  }

  int leaf(Tensor&& value) {
    nodes_.push_back(Node{std::move(value), Tensor{}, {}});
    return last();
  }

  const Tensor& value(int id) const { return at(id).value; }

  // Valid after backward() for every node at or below the loss node.
  const Tensor& grad(int id) const {
    const Tensor& g = at(id).grad;
    require(!g.empty() || g.rank() > 0, ErrorCategory::internal,
            "grad: node was not reached by backward");
    return g;
  }

  std::size_t size() const { return nodes_.size(); }

  // y = x @ w + b applied to each row; x is [R x Cin] or [B x N x Cin].
  int linear(int xid, int wid, int bid) {
    const Tensor& x = at(xid).value;
    const Tensor& w = at(wid).value;
    const Tensor& b = at(bid).value;
    require(x.rank() >= 2, ErrorCategory::dimension, "linear: input rank must be >= 2");
    require(w.rank() == 2, ErrorCategory::dimension, "linear: weight rank must be 2");
    require(b.rank() == 1, ErrorCategory::dimension, "linear: bias rank must be 1");
    Index cin = x.extent(x.rank() - 1);
    Index cout = w.extent(1);
    require(w.extent(0) == cin, ErrorCategory::dimension,
            "linear: weight rows " + std::to_string(w.extent(0)) +
                " do not match input channels " + std::to_string(cin));
    require(b.extent(0) == cout, ErrorCategory::dimension,
            "linear: bias length does not match output channels");
    Index rows = row_count(x);

    std::vector<Index> oshape = x.shape();
    oshape.back() = cout;
    Tensor y(std::move(oshape));
    {
      // Row-major [R x C] buffers are column-major [C x R] transposes; the
      // product below is Y^T = W^T X^T.
      CMapM xt(x.data(), cin, rows);
      CMapM wt(w.data(), cout, cin);
      MapM yt(y.data(), cout, rows);
      yt.noalias() = wt * xt;
      yt.colwise() += CMapV(b.data(), cout);
    }
    nodes_.push_back(Node{std::move(y), Tensor{}, {}});
    int yid = last();
    at(yid).backprop = [xid, wid, bid, yid, cin, cout, rows](Tape& t) {
      const Tensor& xv = t.at(xid).value;
      const Tensor& wv = t.at(wid).value;
      const Tensor& gy = t.at(yid).grad;
      CMapM xt(xv.data(), cin, rows);
      CMapM wt(wv.data(), cout, cin);
      CMapM gyt(gy.data(), cout, rows);
      MapM gxt(t.at(xid).grad.data(), cin, rows);
      MapM gwt(t.at(wid).grad.data(), cout, cin);
      gxt.noalias() += wt.transpose() * gyt;
      gwt.noalias() += gyt * xt.transpose();
      // Fixed-order accumulation: a vectorized reduction may group terms by
      // buffer alignment, which breaks bitwise-identical replays.
      Tensor& gb = t.at(bid).grad;
      for (Index ch = 0; ch < cout; ++ch) {
        double s = 0.0;
        for (Index r = 0; r < rows; ++r)
          s += static_cast<double>(gy[r * cout + ch]);
        gb[ch] += static_cast<float>(s);
      }
    };
    return yid;
  }

  int relu(int xid) {
    const Tensor& x = at(xid).value;
    Tensor y(x.shape());
    for (Index i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
    nodes_.push_back(Node{std::move(y), Tensor{}, {}});
    int yid = last();
    at(yid).backprop = [xid, yid](Tape& t) {
      const Tensor& xv = t.at(xid).value;
      const Tensor& gy = t.at(yid).grad;
      Tensor& gx = t.at(xid).grad;
      for (Index i = 0; i < xv.size(); ++i)
        if (xv[i] > 0.0f) gx[i] += gy[i];  // derivative at 0 is 0
    };
    return yid;
  }

  int sigmoid(int xid) {
    const Tensor& x = at(xid).value;
    Tensor y(x.shape());
    for (Index i = 0; i < x.size(); ++i)
      y[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(x[i]))));
    nodes_.push_back(Node{std::move(y), Tensor{}, {}});
    int yid = last();
    at(yid).backprop = [xid, yid](Tape& t) {
      const Tensor& yv = t.at(yid).value;
      const Tensor& gy = t.at(yid).grad;
      Tensor& gx = t.at(xid).grad;
      for (Index i = 0; i < yv.size(); ++i) {
        double s = yv[i];
        gx[i] += static_cast<float>(gy[i] * s * (1.0 - s));
      }
    };
    return yid;
  }

  // Training-mode batch norm over the channel (last) axis; statistics are
  // biased (divide by row count) and taken jointly over all leading axes.
  // Running statistics are updated in place: run = 0.9*run + 0.1*batch.
  int batch_norm_train(int xid, int scale_id, int shift_id, Tensor& run_mean,
                       Tensor& run_var) {
    const Tensor& x = at(xid).value;
    const Tensor& scale = at(scale_id).value;
    const Tensor& shift = at(shift_id).value;
    Index c = check_bn_args(x, scale, shift);
    require(run_mean.rank() == 1 && run_mean.extent(0) == c && run_var.rank() == 1 &&
                run_var.extent(0) == c,
            ErrorCategory::dimension, "batch_norm: running stat shape mismatch");
    Index rows = row_count(x);
    require(rows > 0, ErrorCategory::dimension, "batch_norm: empty input");

    auto mu = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c));
    auto inv = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c));
    Tensor y(x.shape());
    for (Index ch = 0; ch < c; ++ch) {
      double sum = 0.0;
      for (Index r = 0; r < rows; ++r) sum += x[r * c + ch];
      double mean = sum / static_cast<double>(rows);
      double sq = 0.0;
      for (Index r = 0; r < rows; ++r) {
        double d = x[r * c + ch] - mean;
        sq += d * d;
      }
      double var = sq / static_cast<double>(rows);
      double invdev = 1.0 / std::sqrt(var + kBnEps);
      (*mu)[static_cast<std::size_t>(ch)] = mean;
      (*inv)[static_cast<std::size_t>(ch)] = invdev;
      double g = scale[ch];
      double s = shift[ch];
      for (Index r = 0; r < rows; ++r) {
        double xh = (x[r * c + ch] - mean) * invdev;
        y[r * c + ch] = static_cast<float>(g * xh + s);
      }
      run_mean[ch] = static_cast<float>((1.0 - kBnMomentum) * run_mean[ch] + kBnMomentum * mean);
      run_var[ch] = static_cast<float>((1.0 - kBnMomentum) * run_var[ch] + kBnMomentum * var);
    }
    nodes_.push_back(Node{std::move(y), Tensor{}, {}});
    int yid = last();
    at(yid).backprop = [xid, scale_id, shift_id, yid, c, rows, mu, inv](Tape& t) {
      const Tensor& xv = t.at(xid).value;
      const Tensor& scale = t.at(scale_id).value;
      const Tensor& gy = t.at(yid).grad;
      Tensor& gx = t.at(xid).grad;
      Tensor& gscale = t.at(scale_id).grad;
      Tensor& gshift = t.at(shift_id).grad;
      double n = static_cast<double>(rows);
      for (Index ch = 0; ch < c; ++ch) {
        double mean = (*mu)[static_cast<std::size_t>(ch)];
        double invdev = (*inv)[static_cast<std::size_t>(ch)];
        double sum_g = 0.0, sum_gx = 0.0;
        for (Index r = 0; r < rows; ++r) {
          double g = gy[r * c + ch];
          double xh = (xv[r * c + ch] - mean) * invdev;
          sum_g += g;
          sum_gx += g * xh;
        }
        gshift[ch] += static_cast<float>(sum_g);
        gscale[ch] += static_cast<float>(sum_gx);
        double k = scale[ch] * invdev;
        for (Index r = 0; r < rows; ++r) {
          double g = gy[r * c + ch];
          double xh = (xv[r * c + ch] - mean) * invdev;
          gx[r * c + ch] +=
              static_cast<float>(k * (g - sum_g / n - xh * (sum_gx / n)));
        }
      }
    };
    return yid;
  }

  // Inference-mode batch norm: normalizes with the captured running stats.
  int batch_norm_infer(int xid, int scale_id, int shift_id, const Tensor& run_mean,
                       const Tensor& run_var) {
    const Tensor& x = at(xid).value;
    const Tensor& scale = at(scale_id).value;
    const Tensor& shift = at(shift_id).value;
    Index c = check_bn_args(x, scale, shift);
    require(run_mean.rank() == 1 && run_mean.extent(0) == c && run_var.rank() == 1 &&
                run_var.extent(0) == c,
            ErrorCategory::dimension, "batch_norm: running stat shape mismatch");
    Index rows = row_count(x);

    auto mu = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c));
    auto inv = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c));
    for (Index ch = 0; ch < c; ++ch) {
      (*mu)[static_cast<std::size_t>(ch)] = run_mean[ch];
      (*inv)[static_cast<std::size_t>(ch)] =
          1.0 / std::sqrt(static_cast<double>(run_var[ch]) + kBnEps);
    }
    Tensor y(x.shape());
    for (Index ch = 0; ch < c; ++ch) {
      double m = (*mu)[static_cast<std::size_t>(ch)];
      double invdev = (*inv)[static_cast<std::size_t>(ch)];
      double g = scale[ch];
      double s = shift[ch];
      for (Index r = 0; r < rows; ++r)
        y[r * c + ch] = static_cast<float>(g * ((x[r * c + ch] - m) * invdev) + s);
    }
    nodes_.push_back(Node{std::move(y), Tensor{}, {}});
    int yid = last();
    at(yid).backprop = [xid, scale_id, shift_id, yid, c, rows, mu, inv](Tape& t) {
      const Tensor& xv = t.at(xid).value;
      const Tensor& scale = t.at(scale_id).value;
      const Tensor& gy = t.at(yid).grad;
      Tensor& gx = t.at(xid).grad;
      Tensor& gscale = t.at(scale_id).grad;
      Tensor& gshift = t.at(shift_id).grad;
      for (Index ch = 0; ch < c; ++ch) {
        double m = (*mu)[static_cast<std::size_t>(ch)];
        double invdev = (*inv)[static_cast<std::size_t>(ch)];
        double k = scale[ch] * invdev;
        double sum_g = 0.0, sum_gx = 0.0;
        for (Index r = 0; r < rows; ++r) {
          double g = gy[r * c + ch];
          sum_g += g;
          sum_gx += g * (xv[r * c + ch] - m) * invdev;
        }
        gshift[ch] += static_cast<float>(sum_g);
        gscale[ch] += static_cast<float>(sum_gx);
        for (Index r = 0; r < rows; ++r)
          gx[r * c + ch] += static_cast<float>(k * gy[r * c + ch]);
      }
    };
    return yid;
  }

  // Channel-wise max over the point axis: [B x N x C] -> [B x C].
  // Ties resolve to the lowest point index.
  int max_pool_points(int xid) {
    const Tensor& x = at(xid).value;
    require(x.rank() == 3, ErrorCategory::dimension, "max_pool_points: rank must be 3");
    Index bsz = x.extent(0), n = x.extent(1), c = x.extent(2);
    require(n > 0, ErrorCategory::dimension, "max_pool_points: empty point axis");
    Tensor y({bsz, c});
    auto arg = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(bsz * c));
    for (Index b = 0; b < bsz; ++b)
      for (Index ch = 0; ch < c; ++ch) {
        Index best = 0;
        float bv = x(b, 0, ch);
        for (Index p = 1; p < n; ++p) {
          float v = x(b, p, ch);
          if (v > bv) {
            bv = v;
            best = p;
          }
        }
        y(b, ch) = bv;
        (*arg)[static_cast<std::size_t>(b * c + ch)] = best;
      }
    nodes_.push_back(Node{std::move(y), Tensor{}, {}});
    int yid = last();
    at(yid).backprop = [xid, yid, bsz, c, arg](Tape& t) {
      const Tensor& gy = t.at(yid).grad;
      Tensor& gx = t.at(xid).grad;
      for (Index b = 0; b < bsz; ++b)
        for (Index ch = 0; ch < c; ++ch) {
          Index p = (*arg)[static_cast<std::size_t>(b * c + ch)];
          gx(b, p, ch) += gy(b, ch);
        }
    };
    return yid;
  }

  // Broadcasts [B x C] across a new point axis: -> [B x N x C].
  int tile_points(int xid, Index n) {
    const Tensor& x = at(xid).value;
    require(x.rank() == 2, ErrorCategory::dimension, "tile_points: rank must be 2");
    require(n >= 1, ErrorCategory::dimension, "tile_points: n must be >= 1");
    Index bsz = x.extent(0), c = x.extent(1);
    Tensor y({bsz, n, c});
    for (Index b = 0; b < bsz; ++b)
      for (Index p = 0; p < n; ++p)
        for (Index ch = 0; ch < c; ++ch) y(b, p, ch) = x(b, ch);
    nodes_.push_back(Node{std::move(y), Tensor{}, {}});
    int yid = last();
    at(yid).backprop = [xid, yid, bsz, n, c](Tape& t) {
      const Tensor& gy = t.at(yid).grad;
      Tensor& gx = t.at(xid).grad;
      for (Index b = 0; b < bsz; ++b)
        for (Index ch = 0; ch < c; ++ch) {
          double s = 0.0;
          for (Index p = 0; p < n; ++p) s += gy(b, p, ch);
          gx(b, ch) += static_cast<float>(s);
        }
    };
    return yid;
  }

  // Concatenates along the channel (last) axis; leading extents must match.
  // A zero-channel operand is legal and contributes nothing.
  int concat_channels(int aid, int bid) {
    const Tensor& a = at(aid).value;
    const Tensor& b = at(bid).value;
    require(a.rank() == b.rank(), ErrorCategory::dimension, "concat_channels: rank mismatch");
    for (int ax = 0; ax + 1 < a.rank(); ++ax)
      require(a.extent(ax) == b.extent(ax), ErrorCategory::dimension,
              "concat_channels: leading extent mismatch at axis " + std::to_string(ax));
    Index ca = a.extent(a.rank() - 1), cb = b.extent(b.rank() - 1);
    Index rows = ca > 0 ? row_count(a) : row_count(b);
    std::vector<Index> oshape = a.shape();
    oshape.back() = ca + cb;
    Tensor y(std::move(oshape));
    Index co = ca + cb;
    for (Index r = 0; r < rows; ++r) {
      for (Index ch = 0; ch < ca; ++ch) y[r * co + ch] = a[r * ca + ch];
      for (Index ch = 0; ch < cb; ++ch) y[r * co + ca + ch] = b[r * cb + ch];
    }
    nodes_.push_back(Node{std::move(y), Tensor{}, {}});
    int yid = last();
    at(yid).backprop = [aid, bid, yid, ca, cb, rows](Tape& t) {
      const Tensor& gy = t.at(yid).grad;
      Tensor& ga = t.at(aid).grad;
      Tensor& gb = t.at(bid).grad;
      Index co = ca + cb;
      for (Index r = 0; r < rows; ++r) {
        for (Index ch = 0; ch < ca; ++ch) ga[r * ca + ch] += gy[r * co + ch];
        for (Index ch = 0; ch < cb; ++ch) gb[r * cb + ch] += gy[r * co + ca + ch];
      }
    };
    return yid;
  }

  // Mean over all entries of (pred - target)^2; target is a constant.
  int mse(int pid, const Tensor& target) {
    const Tensor& p = at(pid).value;
    require(p.same_shape(target), ErrorCategory::dimension,
            "mse: shape mismatch " + p.shape_str() + " vs " + target.shape_str());
    require(p.size() > 0, ErrorCategory::dimension, "mse: empty tensors");
    double acc = 0.0;
    for (Index i = 0; i < p.size(); ++i) {
      double d = static_cast<double>(p[i]) - static_cast<double>(target[i]);
      acc += d * d;
    }
    Tensor y({1});
    y[0] = static_cast<float>(acc / static_cast<double>(p.size()));
    nodes_.push_back(Node{std::move(y), Tensor{}, {}});
    int yid = last();
    auto tgt = std::make_shared<Tensor>(target);
    at(yid).backprop = [pid, yid, tgt](Tape& t) {
      const Tensor& pv = t.at(pid).value;
      const Tensor& gy = t.at(yid).grad;
      Tensor& gp = t.at(pid).grad;
      double scale = 2.0 * gy[0] / static_cast<double>(pv.size());
      for (Index i = 0; i < pv.size(); ++i)
        gp[i] += static_cast<float>(scale * (static_cast<double>(pv[i]) -
                                             static_cast<double>((*tgt)[i])));
    };
    return yid;
  }

  // Seeds d(loss)/d(loss) = 1 and propagates to every node below the loss.
  // A tape can be differentiated exactly once.
  void backward(int loss_id) {
    require(!consumed_, ErrorCategory::internal, "backward: tape already differentiated");
    require(loss_id >= 0 && loss_id < static_cast<int>(nodes_.size()),
            ErrorCategory::internal, "backward: bad node id");
    require(at(loss_id).value.size() == 1, ErrorCategory::dimension,
            "backward: loss must be a scalar");
    for (int i = 0; i <= loss_id; ++i) nodes_[static_cast<std::size_t>(i)].grad =
        Tensor(nodes_[static_cast<std::size_t>(i)].value.shape());
    at(loss_id).grad[0] = 1.0f;
    for (int i = loss_id; i >= 0; --i) {
      auto& fn = nodes_[static_cast<std::size_t>(i)].backprop;
      if (fn) fn(*this);
    }
    consumed_ = true;
  }

 private:
  Node& at(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& at(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  int last() const { return static_cast<int>(nodes_.size()) - 1; }

  static Index check_bn_args(const Tensor& x, const Tensor& scale, const Tensor& shift) {
    require(x.rank() >= 2, ErrorCategory::dimension, "batch_norm: input rank must be >= 2");
    Index c = x.extent(x.rank() - 1);
    require(scale.rank() == 1 && scale.extent(0) == c, ErrorCategory::dimension,
            "batch_norm: scale shape mismatch");
    require(shift.rank() == 1 && shift.extent(0) == c, ErrorCategory::dimension,
            "batch_norm: shift shape mismatch");
    return c;
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace pfgen
