// Reverse-mode automatic differentiation over dense matrices. A Tape owns
// the computation graph of one training step; nodes are created in
// topological order, so backward() is a reverse sweep.
//
// Templated on the scalar so gradient checks can run in double while
// training runs in float.
#ifndef VQSIGN_AUTODIFF_HPP
#define VQSIGN_AUTODIFF_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqsign/rng.hpp"

namespace vqsign {

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A learnable matrix with its gradient accumulator and Adam state.
template <class S>
struct Param {
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;
  Matrix<S> adam_m;
  Matrix<S> adam_v;

  Param() = default;
  Param(std::string n, Matrix<S> v) : name(std::move(n)), value(std::move(v)) {
    grad = Matrix<S>::Zero(value.rows(), value.cols());
    adam_m = grad;
    adam_v = grad;
  }

  void zero_grad() { grad.setZero(); }
  std::size_t size() const { return std::size_t(value.size()); }
};

template <class S>
class Tape {
 public:
  using Mat = Matrix<S>;

  struct Node {
    Mat val;
    Mat grad;
    Param<S>* leaf = nullptr;
    bool needs_grad = false;
    std::function<void(Tape&, Node&)> backward;
  };

  void clear() {
    nodes_.clear();
    param_nodes_.clear();
  }

  std::size_t size() const { return nodes_.size(); }
  const Mat& value(int handle) const { return nodes_[std::size_t(handle)]->val; }
  const Mat& gradient(int handle) const { return nodes_[std::size_t(handle)]->grad; }

  int constant(Mat v) { return make(std::move(v), nullptr, {}, {}); }

  // Leaf for a parameter; memoized so repeated uses share one node and the
  // gradient accumulates correctly.
  int param(Param<S>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return it->second;
    const int h = make(p.value, &p, {}, [](Tape&, Node& n) { n.leaf->grad += n.grad; });
    param_nodes_.emplace(&p, h);
    return h;
  }

  int matmul(int a, int b) {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    if (av.cols() != bv.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
    Mat out = av * bv;
    return make(std::move(out), nullptr, {a, b}, [a, b](Tape& t, Node& n) {
      if (t.wants_grad(a)) t.grad_of(a).noalias() += n.grad * t.value(b).transpose();
      if (t.wants_grad(b)) t.grad_of(b).noalias() += t.value(a).transpose() * n.grad;
    });
  }

  int add(int a, int b) {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw std::invalid_argument("add: shape mismatch");
    Mat out = value(a) + value(b);
    return make(std::move(out), nullptr, {a, b}, [a, b](Tape& t, Node& n) {
      if (t.wants_grad(a)) t.grad_of(a) += n.grad;
      if (t.wants_grad(b)) t.grad_of(b) += n.grad;
    });
  }

  // x + row-broadcast bias (bias is 1 x d).
  int add_bias(int x, int bias) {
    if (value(bias).rows() != 1 || value(bias).cols() != value(x).cols())
      throw std::invalid_argument("add_bias: bias must be 1 x cols(x)");
    Mat out = value(x).rowwise() + value(bias).row(0);
    return make(std::move(out), nullptr, {x, bias}, [x, bias](Tape& t, Node& n) {
      if (t.wants_grad(x)) t.grad_of(x) += n.grad;
      if (t.wants_grad(bias)) t.grad_of(bias).row(0) += n.grad.colwise().sum();
    });
  }

  int add_constant(int x, const Mat& c) {
    if (c.rows() != value(x).rows() || c.cols() != value(x).cols())
      throw std::invalid_argument("add_constant: shape mismatch");
    Mat out = value(x) + c;
    return make(std::move(out), nullptr, {x}, [x](Tape& t, Node& n) {
      if (t.wants_grad(x)) t.grad_of(x) += n.grad;
    });
  }

  int scale(int x, S factor) {
    Mat out = value(x) * factor;
    return make(std::move(out), nullptr, {x}, [x, factor](Tape& t, Node& n) {
      if (t.wants_grad(x)) t.grad_of(x) += n.grad * factor;
    });
  }

  int relu(int x) {
    Mat out = value(x).cwiseMax(S(0));
    return make(std::move(out), nullptr, {x}, [x](Tape& t, Node& n) {
      if (!t.wants_grad(x)) return;
      t.grad_of(x).array() += n.grad.array() * (n.val.array() > S(0)).template cast<S>();
    });
  }

  // Row-wise layer normalization with learned gain/offset (1 x d each).
  int layer_norm(int x, int gamma, int beta, S eps = S(1e-5)) {
    const Mat& xv = value(x);
    const int d = int(xv.cols());
    if (value(gamma).cols() != d || value(beta).cols() != d)
      throw std::invalid_argument("layer_norm: gain/offset width mismatch");
    Mat xhat(xv.rows(), d);
    Mat inv_sigma(xv.rows(), 1);
    for (int r = 0; r < xv.rows(); ++r) {
      const S mean = xv.row(r).mean();
      const S var = (xv.row(r).array() - mean).square().sum() / S(d);
      const S inv = S(1) / std::sqrt(var + eps);
      inv_sigma(r, 0) = inv;
      xhat.row(r) = (xv.row(r).array() - mean) * inv;
    }
    Mat out = (xhat.array().rowwise() * value(gamma).row(0).array()).rowwise() +
              value(beta).row(0).array();
    auto xhat_p = std::make_shared<Mat>(std::move(xhat));
    auto inv_p = std::make_shared<Mat>(std::move(inv_sigma));
    return make(std::move(out), nullptr, {x, gamma, beta},
                [x, gamma, beta, xhat_p, inv_p, d](Tape& t, Node& n) {
                  const Mat& g = t.value(gamma);
                  if (t.wants_grad(gamma))
                    t.grad_of(gamma).row(0) +=
                        (n.grad.array() * xhat_p->array()).colwise().sum().matrix();
                  if (t.wants_grad(beta)) t.grad_of(beta).row(0) += n.grad.colwise().sum();
                  if (!t.wants_grad(x)) return;
                  Mat& gx = t.grad_of(x);
                  for (int r = 0; r < n.grad.rows(); ++r) {
                    // dxhat = dy*gamma; dx = (dxhat - mean(dxhat)
                    //        - xhat*mean(dxhat*xhat)) / sigma
                    Eigen::Array<S, 1, Eigen::Dynamic> dxhat =
                        n.grad.row(r).array() * g.row(0).array();
                    const S m1 = dxhat.sum() / S(d);
                    const S m2 = (dxhat * xhat_p->row(r).array()).sum() / S(d);
                    gx.row(r).array() +=
                        ((dxhat - m1) - xhat_p->row(r).array() * m2) * (*inv_p)(r, 0);
                  }
                });
  }

  // Inverted dropout; identity when probability is zero.
  int dropout(int x, S prob, Rng& rng) {
    if (prob <= S(0)) return x;
    const S keep = S(1) - prob;
    Mat mask(value(x).rows(), value(x).cols());
    for (int r = 0; r < mask.rows(); ++r)
      for (int c = 0; c < mask.cols(); ++c)
        mask(r, c) = S(rng.uniform()) < prob ? S(0) : S(1) / keep;
    Mat out = value(x).cwiseProduct(mask);
    auto mask_p = std::make_shared<Mat>(std::move(mask));
    return make(std::move(out), nullptr, {x}, [x, mask_p](Tape& t, Node& n) {
      if (t.wants_grad(x)) t.grad_of(x) += n.grad.cwiseProduct(*mask_p);
    });
  }

  int concat_rows(int a, int b) {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    if (av.cols() != bv.cols()) throw std::invalid_argument("concat_rows: width mismatch");
    Mat out(av.rows() + bv.rows(), av.cols());
    out.topRows(av.rows()) = av;
    out.bottomRows(bv.rows()) = bv;
    const int na = int(av.rows());
    return make(std::move(out), nullptr, {a, b}, [a, b, na](Tape& t, Node& n) {
      if (t.wants_grad(a)) t.grad_of(a) += n.grad.topRows(na);
      if (t.wants_grad(b)) t.grad_of(b) += n.grad.bottomRows(n.grad.rows() - na);
    });
  }

  int slice_rows(int x, int offset, int count) {
    if (offset < 0 || offset + count > value(x).rows())
      throw std::invalid_argument("slice_rows: out of range");
    Mat out = value(x).middleRows(offset, count);
    return make(std::move(out), nullptr, {x}, [x, offset, count](Tape& t, Node& n) {
      if (t.wants_grad(x)) t.grad_of(x).middleRows(offset, count) += n.grad;
    });
  }

  // Interleaves per-sample frame blocks with a shared query-token block:
  // output rows are [frames(b), queries] for each sample b. `queries` is a
  // (q x d) node shared across samples; its gradient sums over samples.
  int pack_sequences(int frames, int queries, int batch, int frames_per_sample) {
    const Mat& fv = value(frames);
    const Mat& qv = value(queries);
    if (fv.cols() != qv.cols()) throw std::invalid_argument("pack_sequences: width mismatch");
    if (fv.rows() != Eigen::Index(batch) * frames_per_sample)
      throw std::invalid_argument("pack_sequences: frame rows != batch * frames_per_sample");
    const int q = int(qv.rows());
    const int m = frames_per_sample + q;
    Mat out(Eigen::Index(batch) * m, fv.cols());
    for (int b = 0; b < batch; ++b) {
      out.middleRows(Eigen::Index(b) * m, frames_per_sample) =
          fv.middleRows(Eigen::Index(b) * frames_per_sample, frames_per_sample);
      out.middleRows(Eigen::Index(b) * m + frames_per_sample, q) = qv;
    }
    return make(std::move(out), nullptr, {frames, queries},
                [frames, queries, batch, frames_per_sample, q, m](Tape& t, Node& n) {
                  if (t.wants_grad(frames)) {
                    Mat& gf = t.grad_of(frames);
                    for (int b = 0; b < batch; ++b)
                      gf.middleRows(Eigen::Index(b) * frames_per_sample, frames_per_sample) +=
                          n.grad.middleRows(Eigen::Index(b) * m, frames_per_sample);
                  }
                  if (t.wants_grad(queries)) {
                    Mat& gq = t.grad_of(queries);
                    for (int b = 0; b < batch; ++b)
                      gq += n.grad.middleRows(Eigen::Index(b) * m + frames_per_sample, q);
                  }
                });
  }

  // Extracts `count` rows starting at `offset` from each per-sample block of
  // height `block`, producing (batch*count) x d.
  int slice_blocks(int x, int batch, int block, int offset, int count) {
    const Mat& xv = value(x);
    if (xv.rows() != Eigen::Index(batch) * block)
      throw std::invalid_argument("slice_blocks: rows != batch * block");
    Mat out(Eigen::Index(batch) * count, xv.cols());
    for (int b = 0; b < batch; ++b)
      out.middleRows(Eigen::Index(b) * count, count) =
          xv.middleRows(Eigen::Index(b) * block + offset, count);
    return make(std::move(out), nullptr, {x},
                [x, batch, block, offset, count](Tape& t, Node& n) {
                  if (!t.wants_grad(x)) return;
                  Mat& gx = t.grad_of(x);
                  for (int b = 0; b < batch; ++b)
                    gx.middleRows(Eigen::Index(b) * block + offset, count) +=
                        n.grad.middleRows(Eigen::Index(b) * count, count);
                });
  }

  // Repeats a (q x d) block `batch` times; gradient sums over repeats.
  int tile_rows(int x, int batch) {
    const Mat& xv = value(x);
    const int q = int(xv.rows());
    Mat out(Eigen::Index(batch) * q, xv.cols());
    for (int b = 0; b < batch; ++b) out.middleRows(Eigen::Index(b) * q, q) = xv;
    return make(std::move(out), nullptr, {x}, [x, batch, q](Tape& t, Node& n) {
      if (!t.wants_grad(x)) return;
      Mat& gx = t.grad_of(x);
      for (int b = 0; b < batch; ++b) gx += n.grad.middleRows(Eigen::Index(b) * q, q);
    });
  }

  // Batched multi-head attention over stacked per-sample sequences.
  // q: (batch*mq) x d, k/v: (batch*mk) x d. key_valid, when given, holds
  // batch*mk flags; invalid keys receive zero attention.
  int attention(int q, int k, int v, int heads, int batch, int mq, int mk,
                const std::vector<std::uint8_t>* key_valid = nullptr) {
    const Mat& qv = value(q);
    const Mat& kv = value(k);
    const Mat& vv = value(v);
    const int d = int(qv.cols());
    if (d % heads != 0) throw std::invalid_argument("attention: heads must divide dim");
    if (kv.cols() != d || vv.cols() != d) throw std::invalid_argument("attention: dim mismatch");
    if (qv.rows() != Eigen::Index(batch) * mq || kv.rows() != Eigen::Index(batch) * mk ||
        vv.rows() != Eigen::Index(batch) * mk)
      throw std::invalid_argument("attention: stacked shape mismatch");
    if (key_valid && key_valid->size() != std::size_t(batch) * std::size_t(mk))
      throw std::invalid_argument("attention: key mask size mismatch");

    const int dh = d / heads;
    const S scale = S(1) / std::sqrt(S(dh));
    Mat out(qv.rows(), d);
    // Cached softmax probabilities, one (mq x mk) block per (sample, head).
    auto probs = std::make_shared<std::vector<Mat>>();
    probs->reserve(std::size_t(batch) * std::size_t(heads));
    for (int b = 0; b < batch; ++b) {
      const auto qb = qv.middleRows(Eigen::Index(b) * mq, mq);
      const auto kb = kv.middleRows(Eigen::Index(b) * mk, mk);
      const auto vb = vv.middleRows(Eigen::Index(b) * mk, mk);
      for (int h = 0; h < heads; ++h) {
        Mat scores(mq, mk);
        scores.noalias() = qb.middleCols(h * dh, dh) * kb.middleCols(h * dh, dh).transpose();
        scores *= scale;
        if (key_valid) {
          for (int j = 0; j < mk; ++j)
            if (!(*key_valid)[std::size_t(b) * std::size_t(mk) + std::size_t(j)])
              scores.col(j).setConstant(-std::numeric_limits<S>::infinity());
        }
        Mat p(mq, mk);
        for (int r = 0; r < mq; ++r) {
          const S mx = scores.row(r).maxCoeff();
          p.row(r) = (scores.row(r).array() - mx).exp();
          p.row(r) /= p.row(r).sum();
        }
        out.block(Eigen::Index(b) * mq, h * dh, mq, dh).noalias() =
            p * vb.middleCols(h * dh, dh);
        probs->push_back(std::move(p));
      }
    }
    return make(std::move(out), nullptr, {q, k, v},
                [q, k, v, heads, batch, mq, mk, dh, scale, probs](Tape& t, Node& n) {
                  const bool wq = t.wants_grad(q), wk = t.wants_grad(k), wv = t.wants_grad(v);
                  if (!wq && !wk && !wv) return;
                  const Mat& qv = t.value(q);
                  const Mat& kv = t.value(k);
                  const Mat& vv = t.value(v);
                  for (int b = 0; b < batch; ++b) {
                    for (int h = 0; h < heads; ++h) {
                      const Mat& p = (*probs)[std::size_t(b) * std::size_t(heads) + std::size_t(h)];
                      const auto dout = n.grad.block(Eigen::Index(b) * mq, h * dh, mq, dh);
                      const auto vb = vv.block(Eigen::Index(b) * mk, h * dh, mk, dh);
                      if (wv)
                        t.grad_of(v).block(Eigen::Index(b) * mk, h * dh, mk, dh).noalias() +=
                            p.transpose() * dout;
                      if (!wq && !wk) continue;
                      Mat dp(mq, mk);
                      dp.noalias() = dout * vb.transpose();
                      // softmax backward: ds = p .* (dp - rowsum(dp .* p))
                      Mat ds(mq, mk);
                      for (int r = 0; r < mq; ++r) {
                        const S dot = (dp.row(r).array() * p.row(r).array()).sum();
                        ds.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
                      }
                      ds *= scale;
                      const auto qb = qv.block(Eigen::Index(b) * mq, h * dh, mq, dh);
                      const auto kb = kv.block(Eigen::Index(b) * mk, h * dh, mk, dh);
                      if (wq)
                        t.grad_of(q).block(Eigen::Index(b) * mq, h * dh, mq, dh).noalias() +=
                            ds * kb;
                      if (wk)
                        t.grad_of(k).block(Eigen::Index(b) * mk, h * dh, mk, dh).noalias() +=
                            ds.transpose() * qb;
                    }
                  }
                });
  }

  // Mean squared error against a constant target; with a row mask, padded
  // rows are excluded from both the mean and the gradient.
  int mse(int x, const Mat& target, const std::vector<std::uint8_t>* row_valid = nullptr) {
    const Mat& xv = value(x);
    if (xv.rows() != target.rows() || xv.cols() != target.cols())
      throw std::invalid_argument("mse: shape mismatch");
    if (row_valid && row_valid->size() != std::size_t(xv.rows()))
      throw std::invalid_argument("mse: row mask size mismatch");
    auto diff = std::make_shared<Mat>(xv - target);
    S count = 0;
    S total = 0;
    for (int r = 0; r < diff->rows(); ++r) {
      if (row_valid && !(*row_valid)[std::size_t(r)]) {
        diff->row(r).setZero();
        continue;
      }
      total += diff->row(r).squaredNorm();
      count += S(diff->cols());
    }
    if (count == S(0)) throw std::invalid_argument("mse: no valid elements");
    Mat out(1, 1);
    out(0, 0) = total / count;
    return make(std::move(out), nullptr, {x}, [x, diff, count](Tape& t, Node& n) {
      if (!t.wants_grad(x)) return;
      t.grad_of(x) += (S(2) * n.grad(0, 0) / count) * *diff;
    });
  }

  // Squared Euclidean distances between rows of x (n x d) and rows of c
  // (k x d), giving n x k.
  int pairwise_sqdist(int x, int c) {
    const Mat& xv = value(x);
    const Mat& cv = value(c);
    if (xv.cols() != cv.cols()) throw std::invalid_argument("pairwise_sqdist: dim mismatch");
    Mat out(xv.rows(), cv.rows());
    out.noalias() = S(-2) * (xv * cv.transpose());
    Eigen::Matrix<S, Eigen::Dynamic, 1> xn = xv.rowwise().squaredNorm();
    Eigen::Matrix<S, Eigen::Dynamic, 1> cn = cv.rowwise().squaredNorm();
    out.colwise() += xn;
    out.rowwise() += cn.transpose();
    return make(std::move(out), nullptr, {x, c}, [x, c](Tape& t, Node& n) {
      const Mat& xv = t.value(x);
      const Mat& cv = t.value(c);
      if (t.wants_grad(x)) {
        Eigen::Array<S, Eigen::Dynamic, 1> rowsum = n.grad.rowwise().sum();
        t.grad_of(x) += S(2) * (xv.array().colwise() * rowsum).matrix();
        t.grad_of(x).noalias() -= S(2) * (n.grad * cv);
      }
      if (t.wants_grad(c)) {
        Eigen::Array<S, Eigen::Dynamic, 1> colsum = n.grad.colwise().sum().transpose();
        t.grad_of(c) += S(2) * (cv.array().colwise() * colsum).matrix();
        t.grad_of(c).noalias() -= S(2) * (n.grad.transpose() * xv);
      }
    });
  }

  int softmax_rows(int x) {
    const Mat& xv = value(x);
    Mat out(xv.rows(), xv.cols());
    for (int r = 0; r < xv.rows(); ++r) {
      const S mx = xv.row(r).maxCoeff();
      out.row(r) = (xv.row(r).array() - mx).exp();
      out.row(r) /= out.row(r).sum();
    }
    return make(std::move(out), nullptr, {x}, [x](Tape& t, Node& n) {
      if (!t.wants_grad(x)) return;
      Mat& gx = t.grad_of(x);
      for (int r = 0; r < n.val.rows(); ++r) {
        const S dot = (n.grad.row(r).array() * n.val.row(r).array()).sum();
        gx.row(r).array() += n.val.row(r).array() * (n.grad.row(r).array() - dot);
      }
    });
  }

  int colwise_mean(int x) {
    const Mat& xv = value(x);
    Mat out = xv.colwise().mean();
    const S inv_n = S(1) / S(xv.rows());
    return make(std::move(out), nullptr, {x}, [x, inv_n](Tape& t, Node& n) {
      if (!t.wants_grad(x)) return;
      t.grad_of(x).rowwise() += (n.grad.row(0) * inv_n);
    });
  }

  // 1 - H(p) / log(K) for a probability row vector p: 0 at the uniform
  // distribution, 1 when all mass sits on one entry. Entries below the
  // floor are treated as frozen (zero gradient) so the value/gradient pair
  // stays consistent.
  int entropy_deficit(int p) {
    const Mat& pv = value(p);
    if (pv.rows() != 1) throw std::invalid_argument("entropy_deficit: expects a row vector");
    const int k = int(pv.cols());
    if (k < 2) throw std::invalid_argument("entropy_deficit: needs at least 2 entries");
    const S log_k = std::log(S(k));
    const S floor = S(1e-12);
    S entropy = 0;
    for (int j = 0; j < k; ++j) {
      const S pj = std::max(pv(0, j), floor);
      entropy -= pj * std::log(pj);
    }
    Mat out(1, 1);
    out(0, 0) = S(1) - entropy / log_k;
    return make(std::move(out), nullptr, {p}, [p, log_k, floor](Tape& t, Node& n) {
      if (!t.wants_grad(p)) return;
      const Mat& pv = t.value(p);
      Mat& gp = t.grad_of(p);
      const S g = n.grad(0, 0) / log_k;
      for (int j = 0; j < pv.cols(); ++j)
        if (pv(0, j) >= floor) gp(0, j) += g * (std::log(pv(0, j)) + S(1));
    });
  }

  // Rows of `table` selected by index; gradient scatters into the table.
  int gather_rows(int table, const std::vector<int>& indices) {
    const Mat& tv = value(table);
    Mat out(Eigen::Index(indices.size()), tv.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] < 0 || indices[i] >= tv.rows())
        throw std::invalid_argument("gather_rows: index out of range");
      out.row(Eigen::Index(i)) = tv.row(indices[i]);
    }
    auto idx = std::make_shared<std::vector<int>>(indices);
    return make(std::move(out), nullptr, {table}, [table, idx](Tape& t, Node& n) {
      if (!t.wants_grad(table)) return;
      Mat& gt = t.grad_of(table);
      for (std::size_t i = 0; i < idx->size(); ++i)
        gt.row((*idx)[i]) += n.grad.row(Eigen::Index(i));
    });
  }

  // Mean cross entropy of row-wise logits against integer targets.
  int cross_entropy(int logits, const std::vector<int>& targets) {
    const Mat& lv = value(logits);
    if (targets.size() != std::size_t(lv.rows()))
      throw std::invalid_argument("cross_entropy: target count mismatch");
    auto probs = std::make_shared<Mat>(lv.rows(), lv.cols());
    S total = 0;
    for (int r = 0; r < lv.rows(); ++r) {
      const int target = targets[std::size_t(r)];
      if (target < 0 || target >= lv.cols())
        throw std::invalid_argument("cross_entropy: target out of range");
      const S mx = lv.row(r).maxCoeff();
      Eigen::Array<S, 1, Eigen::Dynamic> e = (lv.row(r).array() - mx).exp();
      const S z = e.sum();
      probs->row(r) = e / z;
      total -= lv(r, target) - mx - std::log(z);
    }
    Mat out(1, 1);
    out(0, 0) = total / S(lv.rows());
    auto tgt = std::make_shared<std::vector<int>>(targets);
    return make(std::move(out), nullptr, {logits}, [logits, probs, tgt](Tape& t, Node& n) {
      if (!t.wants_grad(logits)) return;
      Mat& g = t.grad_of(logits);
      const S w = n.grad(0, 0) / S(probs->rows());
      g += w * *probs;
      for (int r = 0; r < probs->rows(); ++r) g(r, (*tgt)[std::size_t(r)]) -= w;
    });
  }

  // Forward value is `snapped`; the full output gradient flows to x
  // unchanged (identity Jacobian).
  int straight_through(int x, Mat snapped) {
    if (snapped.rows() != value(x).rows() || snapped.cols() != value(x).cols())
      throw std::invalid_argument("straight_through: shape mismatch");
    return make(std::move(snapped), nullptr, {x}, [x](Tape& t, Node& n) {
      if (t.wants_grad(x)) t.grad_of(x) += n.grad;
    });
  }

  // Weighted sum of 1x1 scalar nodes.
  int weighted_sum(const std::vector<std::pair<S, int>>& terms) {
    Mat out(1, 1);
    out(0, 0) = S(0);
    std::vector<int> parents;
    for (const auto& [w, h] : terms) {
      if (value(h).size() != 1) throw std::invalid_argument("weighted_sum: non-scalar term");
      out(0, 0) += w * value(h)(0, 0);
      parents.push_back(h);
    }
    auto terms_p = std::make_shared<std::vector<std::pair<S, int>>>(terms);
    return make(std::move(out), nullptr, parents, [terms_p](Tape& t, Node& n) {
      for (const auto& [w, h] : *terms_p)
        if (t.wants_grad(h)) t.grad_of(h)(0, 0) += w * n.grad(0, 0);
    });
  }

  // Reverse sweep from a scalar loss node.
  void backward(int loss) {
    if (value(loss).size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    grad_of(loss)(0, 0) = S(1);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = *nodes_[i];
      if (n.grad.size() == 0 || !n.needs_grad) continue;
      if (n.backward) n.backward(*this, n);
    }
  }

  bool wants_grad(int handle) const { return nodes_[std::size_t(handle)]->needs_grad; }

  Mat& grad_of(int handle) {
    Node& n = *nodes_[std::size_t(handle)];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
    return n.grad;
  }

 private:
  int make(Mat val, Param<S>* leaf, const std::vector<int>& parents,
           std::function<void(Tape&, Node&)> backward) {
    auto node = std::make_unique<Node>();
    node->val = std::move(val);
    node->leaf = leaf;
    node->needs_grad = leaf != nullptr;
    for (int p : parents)
      if (nodes_[std::size_t(p)]->needs_grad) node->needs_grad = true;
    node->backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return int(nodes_.size()) - 1;
  }

  std::vector<std::unique_ptr<Node>> nodes_;
  std::map<const Param<S>*, int> param_nodes_;
};

// Collection of parameters owned elsewhere; iteration order is registration
// order and defines checkpoint layout.
template <class S>
struct ParamSet {
  std::vector<Param<S>*> items;

  Param<S>* add(Param<S>* p) {
    items.push_back(p);
    return p;
  }
  void zero_grad() {
    for (auto* p : items) p->zero_grad();
  }
  std::size_t total_size() const {
    std::size_t n = 0;
    for (auto* p : items) n += p->size();
    return n;
  }
};

template <class S>
struct Adam {
  S lr = S(8.61e-5);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
  long long step_count = 0;

  void step(ParamSet<S>& params) {
    ++step_count;
    const S bc1 = S(1) - std::pow(beta1, S(step_count));
    const S bc2 = S(1) - std::pow(beta2, S(step_count));
    for (auto* p : params.items) {
      p->adam_m = beta1 * p->adam_m + (S(1) - beta1) * p->grad;
      p->adam_v.array() = beta2 * p->adam_v.array() + (S(1) - beta2) * p->grad.array().square();
      p->value.array() -=
          lr * (p->adam_m.array() / bc1) / ((p->adam_v.array() / bc2).sqrt() + eps);
    }
  }
};

}  // namespace vqsign

#endif  // VQSIGN_AUTODIFF_HPP
