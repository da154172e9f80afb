// Vector quantization: codebooks with usage statistics, hard and
// Gumbel-softmax quantization, diversity loss, perplexity and dead-code
// re-initialization.
#ifndef VQSIGN_VQ_HPP
#define VQSIGN_VQ_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqsign/autodiff.hpp"
#include "vqsign/pose.hpp"
#include "vqsign/rng.hpp"

namespace vqsign {

struct ReservedRange {
  std::string feature;
  int begin = 0;
  int size = 0;
};

template <class S>
struct Codebook {
  Param<S> entries;                   // K x L_c
  std::vector<std::int64_t> usage;    // per-code selection counts since last reset
  std::vector<StreamId> stream_tags;  // streams sharing this book
  std::vector<ReservedRange> reserved;
  std::string name;

  int size() const { return int(entries.value.rows()); }
  int dim() const { return int(entries.value.cols()); }

  void validate() const {
    if (size() < 1) throw std::invalid_argument("codebook must have at least one entry");
    if (!entries.value.allFinite())
      throw std::invalid_argument("codebook has non-finite entries");
    std::vector<char> taken(std::size_t(size()), 0);
    for (const auto& r : reserved) {
      if (r.begin < 0 || r.size < 1 || r.begin + r.size > size())
        throw std::invalid_argument("reserved range outside codebook");
      for (int i = r.begin; i < r.begin + r.size; ++i) {
        if (taken[std::size_t(i)])
          throw std::invalid_argument("reserved ranges overlap in codebook " + name);
        taken[std::size_t(i)] = 1;
      }
    }
  }

  const ReservedRange* reserved_for(const std::string& feature) const {
    for (const auto& r : reserved)
      if (r.feature == feature) return &r;
    return nullptr;
  }
};

// Entries drawn uniformly from [-1/K, 1/K].
template <class S>
Codebook<S> make_codebook(const std::string& name, int entries, int dim,
                          std::vector<StreamId> tags, Rng& rng) {
  Codebook<S> book;
  book.name = name;
  Matrix<S> init(entries, dim);
  const double bound = 1.0 / double(entries);
  for (int r = 0; r < entries; ++r)
    for (int c = 0; c < dim; ++c) init(r, c) = S(rng.uniform(-bound, bound));
  book.entries = Param<S>(name, std::move(init));
  book.usage.assign(std::size_t(entries), 0);
  book.stream_tags = std::move(tags);
  return book;
}

template <class S>
struct QuantizeOutcome {
  std::vector<int> indices;
  Matrix<S> z_q;        // rows are exact codebook entries
  S loss_codebook = 0;  // mean ||sg[z_e] - z_q||^2 per element
  S loss_commit = 0;    // mean ||z_e - sg[z_q]||^2 per element
  S loss_diversity = 0;
  S perplexity = 1;
  std::vector<std::uint8_t> forced;
};

struct GumbelSchedule {
  double start_temperature = 1.0;
  double end_temperature = 0.1;
  std::int64_t decay_steps = 4000;
  std::int64_t current_step = 0;

  double temperature() const {
    if (start_temperature < end_temperature || end_temperature <= 0)
      throw std::invalid_argument("gumbel schedule requires start >= end > 0");
    const double t = start_temperature *
                     std::exp(-double(current_step) / double(std::max<std::int64_t>(1, decay_steps)));
    return std::max(end_temperature, t);
  }
};

// exp(entropy) of a normalized usage histogram; in [1, K].
template <class S>
S perplexity(const std::vector<S>& histogram) {
  S total = 0;
  for (S v : histogram) {
    if (v < 0) throw std::invalid_argument("perplexity: negative count");
    total += v;
  }
  if (!(total > 0)) throw std::invalid_argument("perplexity: histogram sums to zero");
  S entropy = 0;
  for (S v : histogram) {
    if (v <= 0) continue;
    const S p = v / total;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

// 1 - H(mean soft assignment) / log K; rows must be probability vectors.
template <class S>
S diversity_loss(const Matrix<S>& soft_assignments) {
  const int k = int(soft_assignments.cols());
  if (k < 2) throw std::invalid_argument("diversity_loss: needs at least 2 columns");
  for (int r = 0; r < soft_assignments.rows(); ++r) {
    const S sum = soft_assignments.row(r).sum();
    if (std::abs(double(sum) - 1.0) > 1e-4 || soft_assignments.row(r).minCoeff() < S(0))
      throw std::invalid_argument("diversity_loss: rows must be probability vectors");
  }
  Matrix<S> mean = soft_assignments.colwise().mean();
  S entropy = 0;
  for (int j = 0; j < k; ++j) {
    const S p = std::max(mean(0, j), S(1e-12));
    entropy -= p * std::log(p);
  }
  return S(1) - entropy / std::log(S(k));
}

namespace detail {

template <class S>
Matrix<S> squared_distances(const Matrix<S>& z_e, const Matrix<S>& entries) {
  if (z_e.cols() != entries.cols())
    throw std::invalid_argument("quantize: latent dim does not match codebook dim");
  if (!z_e.allFinite()) throw std::invalid_argument("quantize: non-finite encoder output");
  Matrix<S> d(z_e.rows(), entries.rows());
  d.noalias() = S(-2) * (z_e * entries.transpose());
  Eigen::Matrix<S, Eigen::Dynamic, 1> zn = z_e.rowwise().squaredNorm();
  Eigen::Matrix<S, Eigen::Dynamic, 1> cn = entries.rowwise().squaredNorm();
  d.colwise() += zn;
  d.rowwise() += cn.transpose();
  return d;
}

// Fills the outcome given final indices: snapped rows, VQ losses, batch
// perplexity, and usage increments.
template <class S>
void finish_outcome(const Matrix<S>& z_e, Codebook<S>& book, S diversity_temperature,
                    QuantizeOutcome<S>& outcome) {
  const int n = int(z_e.rows());
  outcome.z_q.resize(n, book.dim());
  S cb = 0;
  for (int i = 0; i < n; ++i) {
    const int k = outcome.indices[std::size_t(i)];
    outcome.z_q.row(i) = book.entries.value.row(k);
    cb += (z_e.row(i) - outcome.z_q.row(i)).squaredNorm();
    ++book.usage[std::size_t(k)];
  }
  const S denom = S(n) * S(book.dim());
  outcome.loss_codebook = cb / denom;
  outcome.loss_commit = outcome.loss_codebook;  // same value, different gradient target

  Matrix<S> d = squared_distances(z_e, book.entries.value);
  Matrix<S> soft(n, book.size());
  for (int i = 0; i < n; ++i) {
    Eigen::Array<S, 1, Eigen::Dynamic> logits = -d.row(i).array() / diversity_temperature;
    const S mx = logits.maxCoeff();
    soft.row(i) = (logits - mx).exp();
    soft.row(i) /= soft.row(i).sum();
  }
  outcome.loss_diversity = diversity_loss(soft);

  std::vector<S> hist(std::size_t(book.size()), S(0));
  for (int idx : outcome.indices) hist[std::size_t(idx)] += S(1);
  outcome.perplexity = perplexity(hist);
  outcome.forced.assign(std::size_t(n), 0);
}

}  // namespace detail

constexpr double kDiversityTemperature = 1.0;

// Row-wise argmin over a distance matrix; ties break to the lowest index.
template <class S>
std::vector<int> nearest_indices(const Matrix<S>& distances) {
  std::vector<int> indices(static_cast<std::size_t>(distances.rows()), 0);
  for (int i = 0; i < distances.rows(); ++i) {
    int best = 0;
    S best_d = distances(i, 0);
    for (int j = 1; j < distances.cols(); ++j) {
      if (distances(i, j) < best_d) {
        best_d = distances(i, j);
        best = j;
      }
    }
    indices[std::size_t(i)] = best;
  }
  return indices;
}

// Gumbel-max sampling of softmax(-d/tau): argmax_j(-d_ij/tau + g_ij).
template <class S>
std::vector<int> gumbel_indices(const Matrix<S>& distances, double tau, Rng& rng) {
  if (tau <= 0) throw std::invalid_argument("gumbel_indices: temperature must be positive");
  std::vector<int> indices(static_cast<std::size_t>(distances.rows()), 0);
  for (int i = 0; i < distances.rows(); ++i) {
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < distances.cols(); ++j) {
      const double score = -double(distances(i, j)) / tau + rng.gumbel();
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    indices[std::size_t(i)] = best;
  }
  return indices;
}

// Nearest codebook entry by squared L2 distance; ties break to the lowest
// index. Increments the book's usage counts.
template <class S>
QuantizeOutcome<S> quantize_hard(const Matrix<S>& z_e, Codebook<S>& book) {
  Matrix<S> d = detail::squared_distances(z_e, book.entries.value);
  QuantizeOutcome<S> outcome;
  outcome.indices = nearest_indices(d);
  detail::finish_outcome(z_e, book, S(kDiversityTemperature), outcome);
  return outcome;
}

// Samples indices from softmax((-d + g)/tau) with standard Gumbel noise g.
// The emitted z_q snaps to the sampled entry; gradient contracts are
// unchanged from hard quantization. As tau -> 0 this matches quantize_hard.
template <class S>
QuantizeOutcome<S> quantize_gumbel(const Matrix<S>& z_e, Codebook<S>& book,
                                   const GumbelSchedule& schedule, Rng& rng) {
  Matrix<S> d = detail::squared_distances(z_e, book.entries.value);
  QuantizeOutcome<S> outcome;
  outcome.indices = gumbel_indices(d, schedule.temperature(), rng);
  detail::finish_outcome(z_e, book, S(kDiversityTemperature), outcome);
  return outcome;
}

// Replaces codes whose usage fell below `threshold` with the mean of
// `sample_size` rows drawn from the encoder sample; resets usage and Adam
// state of the re-initialized codes only. Returns the number replaced.
template <class S>
int reinit_dead_codes(Codebook<S>& book, const Matrix<S>& encoder_sample,
                      std::int64_t threshold, int sample_size, Rng& rng) {
  if (sample_size < 1) throw std::invalid_argument("reinit_dead_codes: sample_size must be >= 1");
  if (encoder_sample.rows() < sample_size)
    throw std::invalid_argument("reinit_dead_codes: encoder sample smaller than sample_size");
  if (encoder_sample.cols() != book.dim())
    throw std::invalid_argument("reinit_dead_codes: dim mismatch");
  int replaced = 0;
  for (int k = 0; k < book.size(); ++k) {
    if (book.usage[std::size_t(k)] >= threshold) continue;
    Eigen::Matrix<S, 1, Eigen::Dynamic> mean =
        Eigen::Matrix<S, 1, Eigen::Dynamic>::Zero(1, book.dim());
    for (int s = 0; s < sample_size; ++s) {
      const auto row = Eigen::Index(rng.uniform_int(std::uint64_t(encoder_sample.rows())));
      mean += encoder_sample.row(row);
    }
    mean /= S(sample_size);
    book.entries.value.row(k) = mean;
    book.entries.adam_m.row(k).setZero();
    book.entries.adam_v.row(k).setZero();
    book.usage[std::size_t(k)] = 0;
    ++replaced;
  }
  return replaced;
}

}  // namespace vqsign

#endif  // VQSIGN_VQ_HPP
