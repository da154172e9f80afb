// Training loop: shuffled mini-batches, Adam updates, Gumbel exploration
// during the early phase, and periodic dead-code re-initialization.
#ifndef VQSIGN_TRAIN_HPP
#define VQSIGN_TRAIN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "vqsign/data.hpp"
#include "vqsign/model.hpp"

namespace vqsign {

struct TrainConfig {
  long long steps = 20000;
  int batch = 64;
  double lr = 8.61e-5;
  double beta_commit = 3e-6;
  double gamma_diversity = 3.0;

  bool gumbel_enabled = true;
  double gumbel_fraction = 0.5;  // fraction of steps with Gumbel sampling on
  double gumbel_start = 1.0;
  double gumbel_end = 0.1;
  long long gumbel_decay_steps = 0;  // 0 -> steps / 5

  bool reinit_enabled = true;
  long long reinit_interval = 1000;
  double reinit_usage_frac = 0.01;  // threshold = max(1, frac * window / K)
  int reinit_sample_size = 8;

  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainLogEntry {
  long long step = 0;
  double total = 0;
  double recon = 0;
  double codebook = 0;
  double commit = 0;
  double diversity = 0;
  double perplexity_mean = 0;  // batch-level, averaged over books
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
  std::vector<double> final_perplexity;  // per book, over the last usage window
  long long reinitialized_codes = 0;
};

// Runs cfg.steps optimizer steps over the train-vocabulary records. When
// log_path is non-empty, appends one JSON line per step. Throws NumericError
// naming the offending loss term when a non-finite value appears.
TrainResult train_model(Model<float>& model, const PreparedCorpus& data,
                        const TrainConfig& cfg, const std::string& log_path = "");

}  // namespace vqsign

#endif  // VQSIGN_TRAIN_HPP
