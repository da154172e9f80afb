// Evaluation: channel-wise reconstruction error, frozen-encoder code
// extraction, MLP probes for sign and feature recognition, and ranking
// metrics.
#ifndef VQSIGN_EVAL_HPP
#define VQSIGN_EVAL_HPP

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vqsign/data.hpp"
#include "vqsign/model.hpp"

namespace vqsign {

struct ReconMetrics {
  double overall = 0;  // element-count weighted mean over streams
  std::array<double, kStreamCount> per_stream{};  // multi-stream models only
  bool has_streams = false;
};

// MSE in each stream's normalized coordinate frame; single-stream models
// report the overall value only.
ReconMetrics eval_reconstruction(Model<float>& model, const PreparedCorpus& data,
                                 const std::vector<int>& record_ids);

// Eval-mode encoding + hard quantization; rows are flattened quantized
// latents of length total_latents * latent_dim. Label-free by construction.
MatF extract_codes(Model<float>& model, const PreparedCorpus& data,
                   const std::vector<int>& record_ids);

struct ProbeConfig {
  int hidden = 256;
  int layers = 2;
  int epochs = 30;
  double support_frac = 0.5;  // per-gloss support/eval split for ISR probes
  double lr = 1e-3;
  int batch = 64;

  void validate() const;
};

// Two-layer MLP with one or more softmax heads (one per target column),
// trained with summed cross entropy.
struct Probe {
  std::vector<LinearLayer<float>> layers;
  std::vector<LinearLayer<float>> heads;
  std::vector<int> head_sizes;
  ParamSet<float> params;

  Probe() = default;
  Probe(const Probe&) = delete;
  Probe& operator=(const Probe&) = delete;

  // Logits for one head over all feature rows.
  MatF head_logits(const MatF& features, int head) const;
};

// targets: one column per head. Every class in [0, head_size) must appear
// at least... classes with zero support are rejected.
std::unique_ptr<Probe> train_probe(const MatF& features,
                                   const std::vector<std::vector<int>>& targets,
                                   const std::vector<int>& head_sizes,
                                   const ProbeConfig& cfg, std::uint64_t seed);

struct RankingScore {
  double mrr = 0;
  double recall_at_10 = 0;  // percent
};

// MRR and Recall@10 from per-row logits; ties rank by ascending class index.
RankingScore score_ranking(const MatF& logits, const std::vector<int>& targets);

// Convenience over a multi-head probe: unweighted mean over heads.
RankingScore score_probe(const Probe& probe, const MatF& features,
                         const std::vector<std::vector<int>>& targets);

struct OovIsrResult {
  RankingScore score;
  int glosses_used = 0;
  int glosses_excluded = 0;  // fewer than 2 instances
};

// Per-gloss support/eval split over out-of-vocabulary records: the probe
// trains on support instances and is scored on held-out instances of the
// same unseen glosses. The autoencoder never trained on these glosses.
OovIsrResult run_oov_isr_protocol(Model<float>& model, const PreparedCorpus& data,
                                  const std::vector<int>& record_ids,
                                  const ProbeConfig& cfg, std::uint64_t seed);

struct MetricsReport {
  std::string variant;
  std::uint64_t seed = 0;
  double mse_train = 0;
  double mse_test = 0;
  std::array<double, kStreamCount> mse_stream{};
  bool has_streams = false;
  double isr_mrr_iv = 0, isr_r10_iv = 0;
  double isr_mrr_oov = 0, isr_r10_oov = 0;
  double pfr_mrr_iv = 0, pfr_r10_iv = 0;
  double pfr_mrr_oov = 0, pfr_r10_oov = 0;
  std::vector<std::pair<std::string, double>> book_perplexity;
  double perplexity_mean = 0;
};

// Runs the full evaluation: reconstruction on train/test, ISR and PFR probes
// in and out of vocabulary.
MetricsReport evaluate_model(Model<float>& model, const PreparedCorpus& data,
                             const ProbeConfig& probe_cfg, std::uint64_t seed,
                             const std::vector<double>& final_perplexity);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& report);
std::string metrics_text_report(const MetricsReport& report);

}  // namespace vqsign

#endif  // VQSIGN_EVAL_HPP
