// Shared helpers for gradient checks against the quantized model.
//
// The training loss contains stop-gradients and a straight-through step, so
// its backward pass differentiates a surrogate: quantization indices, snapped
// values and stop-gradient targets are held at the expansion point while
// everything else varies. surrogate_loss evaluates exactly that function, so
// central differences of it must match the production gradients.
#ifndef VQSIGN_TESTS_SUPPORT_HPP
#define VQSIGN_TESTS_SUPPORT_HPP

#include <vector>

#include "vqsign/model.hpp"

namespace vqsign::testsupport {

template <class S>
struct FrozenPoint {
  std::vector<std::vector<int>> book_indices;  // per book
  std::vector<Matrix<S>> z_cat_base;           // per book: encoder outputs
  std::vector<Matrix<S>> z_q_base;             // per book: snapped values
};

// Captures the expansion point from an eval-style pass (dropout off, hard
// quantization, no forcing).
template <class S>
FrozenPoint<S> capture_point(Model<S>& model, const BatchData<S>& batch, double beta,
                             double gamma) {
  Rng rng(0);
  Tape<S> tape;
  const auto out = model_forward(model, tape, batch, RunMode::Eval, 0.0, beta, gamma, rng);
  FrozenPoint<S> point;
  const int n_books = int(model.books.size());
  point.book_indices.resize(std::size_t(n_books));
  point.z_cat_base.resize(std::size_t(n_books));
  point.z_q_base.resize(std::size_t(n_books));
  for (int b = 0; b < n_books; ++b) {
    for (int s = 0; s < model.stream_count(); ++s) {
      const int sb = model.multi_stream() ? model.book_of_stream[std::size_t(s)] : 0;
      if (sb != b) continue;
      auto& idx = point.book_indices[std::size_t(b)];
      idx.insert(idx.end(), out.stream_indices[std::size_t(s)].begin(),
                 out.stream_indices[std::size_t(s)].end());
      const Matrix<S>& zq = out.stream_zq[std::size_t(s)];
      auto& zqb = point.z_q_base[std::size_t(b)];
      const Eigen::Index old = zqb.rows();
      zqb.conservativeResize(old + zq.rows(), zq.cols());
      zqb.bottomRows(zq.rows()) = zq;
    }
    point.z_cat_base[std::size_t(b)] = out.book_encoder_sample[std::size_t(b)];
  }
  return point;
}

// The smooth function the backward pass differentiates: decoder input is
// z_e + (z_q - z_e)|base, stop-gradient targets and indices are frozen.
template <class S>
S surrogate_loss(Model<S>& model, const BatchData<S>& batch, const FrozenPoint<S>& point,
                 double beta, double gamma) {
  Rng rng(0);
  Tape<S> tape;
  const int n_nets = model.stream_count();
  std::vector<int> z_e(std::size_t(n_nets), -1);
  for (int s = 0; s < n_nets; ++s) {
    auto& net = model.nets[std::size_t(s)];
    const auto& sb = batch.streams[std::size_t(s)];
    const std::vector<std::uint8_t>* valid = sb.frame_valid.empty() ? nullptr : &sb.frame_valid;
    z_e[std::size_t(s)] =
        net.encode(tape, tape.constant(sb.input), batch.batch, valid, S(0), rng);
  }

  const int n_books = int(model.books.size());
  S total = 0;
  std::vector<int> st_nodes(std::size_t(n_nets), -1);
  for (int b = 0; b < n_books; ++b) {
    int z_cat = -1;
    std::vector<int> members;
    std::vector<int> row_offset;
    int rows = 0;
    for (int s = 0; s < n_nets; ++s) {
      const int sb = model.multi_stream() ? model.book_of_stream[std::size_t(s)] : 0;
      if (sb != b) continue;
      members.push_back(s);
      row_offset.push_back(rows);
      rows += batch.batch * model.nets[std::size_t(s)].latent_count;
      z_cat = z_cat < 0 ? z_e[std::size_t(s)] : tape.concat_rows(z_cat, z_e[std::size_t(s)]);
    }
    if (members.empty()) continue;
    auto& book = model.books[std::size_t(b)];
    const int book_node = tape.param(book.entries);

    const int cb =
        tape.mse(tape.gather_rows(book_node, point.book_indices[std::size_t(b)]),
                 point.z_cat_base[std::size_t(b)]);
    const int commit = tape.mse(z_cat, point.z_q_base[std::size_t(b)]);
    const int dist = tape.pairwise_sqdist(z_cat, book_node);
    const int div = tape.entropy_deficit(
        tape.colwise_mean(tape.softmax_rows(tape.scale(dist, S(-1)))));
    total += tape.value(cb)(0, 0) + S(beta) * tape.value(commit)(0, 0) +
             S(gamma) * tape.value(div)(0, 0);

    // Straight-through surrogate: z_e + constant offset to the snapped values.
    const Matrix<S> delta =
        point.z_q_base[std::size_t(b)] - point.z_cat_base[std::size_t(b)];
    const int st = tape.add_constant(z_cat, delta);
    for (std::size_t i = 0; i < members.size(); ++i) {
      const int s = members[i];
      const int count = batch.batch * model.nets[std::size_t(s)].latent_count;
      st_nodes[std::size_t(s)] = tape.slice_rows(st, row_offset[i], count);
    }
  }

  for (int s = 0; s < n_nets; ++s) {
    auto& net = model.nets[std::size_t(s)];
    const auto& sb = batch.streams[std::size_t(s)];
    const int recon = net.decode(tape, st_nodes[std::size_t(s)], batch.batch, S(0), rng);
    const std::vector<std::uint8_t>* valid = sb.frame_valid.empty() ? nullptr : &sb.frame_valid;
    total += tape.value(tape.mse(recon, sb.input, valid))(0, 0);
  }
  return total;
}

// Production analytic gradients at the expansion point (dropout off, hard
// quantization), left in each parameter's grad field.
template <class S>
void production_gradients(Model<S>& model, const BatchData<S>& batch, double beta,
                          double gamma) {
  Rng rng(0);
  Tape<S> tape;
  BatchData<S> unlabeled = batch;
  unlabeled.labels.clear();
  const auto out = model_forward(model, tape, unlabeled, RunMode::Train, 0.0, beta, gamma, rng);
  model.params.zero_grad();
  tape.backward(out.loss_node);
}

}  // namespace vqsign::testsupport

#endif  // VQSIGN_TESTS_SUPPORT_HPP
