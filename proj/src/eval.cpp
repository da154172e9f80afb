#include "vqsign/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "vqsign/errors.hpp"

namespace vqsign {

namespace {

constexpr int kEvalBatch = 64;

std::vector<std::vector<int>> chunked(const std::vector<int>& ids, int chunk) {
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < ids.size(); i += std::size_t(chunk)) {
    const std::size_t end = std::min(ids.size(), i + std::size_t(chunk));
    out.emplace_back(ids.begin() + long(i), ids.begin() + long(end));
  }
  return out;
}

}  // namespace

ReconMetrics eval_reconstruction(Model<float>& model, const PreparedCorpus& data,
                                 const std::vector<int>& record_ids) {
  if (record_ids.empty()) throw std::invalid_argument("eval_reconstruction: no records");
  const int n_nets = model.stream_count();
  std::vector<double> sse(std::size_t(n_nets), 0.0);
  std::vector<long long> count(std::size_t(n_nets), 0);

  Rng rng(0);  // eval mode draws nothing
  Tape<float> tape;
  for (const auto& ids : chunked(record_ids, kEvalBatch)) {
    tape.clear();
    BatchData<float> batch = assemble_batch(data, ids, model);
    ForwardOutcome<float> out =
        model_forward(model, tape, batch, RunMode::Eval, 0.0, 0.0, 0.0, rng);
    for (int s = 0; s < n_nets; ++s) {
      const MatF& recon = tape.value(out.recon_node[std::size_t(s)]);
      const auto& sb = batch.streams[std::size_t(s)];
      const int frames = model.nets[std::size_t(s)].frames;
      for (int b = 0; b < batch.batch; ++b) {
        for (int f = 0; f < frames; ++f) {
          const std::size_t row = std::size_t(b) * std::size_t(frames) + std::size_t(f);
          if (!sb.frame_valid.empty() && !sb.frame_valid[row]) continue;
          const auto diff = recon.row(Eigen::Index(row)) - sb.input.row(Eigen::Index(row));
          sse[std::size_t(s)] += double(diff.squaredNorm());
          count[std::size_t(s)] += recon.cols();
        }
      }
    }
  }

  ReconMetrics metrics;
  metrics.has_streams = model.multi_stream();
  double total_sse = 0;
  long long total_count = 0;
  for (int s = 0; s < n_nets; ++s) {
    total_sse += sse[std::size_t(s)];
    total_count += count[std::size_t(s)];
    if (metrics.has_streams)
      metrics.per_stream[std::size_t(s)] = sse[std::size_t(s)] / double(count[std::size_t(s)]);
  }
  metrics.overall = total_sse / double(total_count);
  return metrics;
}

MatF extract_codes(Model<float>& model, const PreparedCorpus& data,
                   const std::vector<int>& record_ids) {
  const int n_nets = model.stream_count();
  const int width = model.bottleneck_size();
  MatF codes(Eigen::Index(record_ids.size()), width);

  Rng rng(0);
  Tape<float> tape;
  std::size_t row0 = 0;
  for (const auto& ids : chunked(record_ids, kEvalBatch)) {
    tape.clear();
    BatchData<float> batch = assemble_batch(data, ids, model);
    batch.labels.clear();  // quantization is label-free at eval time
    ForwardOutcome<float> out =
        model_forward(model, tape, batch, RunMode::Eval, 0.0, 0.0, 0.0, rng);
    for (int b = 0; b < batch.batch; ++b) {
      int col = 0;
      for (int s = 0; s < n_nets; ++s) {
        const auto& zq = out.stream_zq[std::size_t(s)];
        const int latents = model.nets[std::size_t(s)].latent_count;
        const int dim = int(zq.cols());
        for (int l = 0; l < latents; ++l) {
          codes.block(Eigen::Index(row0) + b, col, 1, dim) =
              zq.row(Eigen::Index(b) * latents + l);
          col += dim;
        }
      }
    }
    row0 += ids.size();
  }
  return codes;
}

void ProbeConfig::validate() const {
  if (hidden < 1 || layers < 1 || epochs < 1 || batch < 1)
    throw ConfigError("probe: sizes must be positive");
  if (support_frac <= 0 || support_frac >= 1)
    throw ConfigError("probe: support fraction must be in (0,1)");
  if (lr <= 0) throw ConfigError("probe: learning rate must be positive");
}

MatF Probe::head_logits(const MatF& features, int head) const {
  // Rebuild the forward on a throwaway tape; probes are small.
  Tape<float> tape;
  int x = tape.constant(features);
  auto* self = const_cast<Probe*>(this);
  for (auto& layer : self->layers) x = tape.relu(layer.apply(tape, x));
  return tape.value(self->heads[std::size_t(head)].apply(tape, x));
}

std::unique_ptr<Probe> train_probe(const MatF& features,
                                   const std::vector<std::vector<int>>& targets,
                                   const std::vector<int>& head_sizes,
                                   const ProbeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int n = int(features.rows());
  if (n < 1) throw std::invalid_argument("train_probe: empty feature matrix");
  if (targets.size() != head_sizes.size())
    throw std::invalid_argument("train_probe: head count mismatch");
  for (std::size_t h = 0; h < targets.size(); ++h) {
    if (targets[h].size() != std::size_t(n))
      throw std::invalid_argument("train_probe: target length mismatch");
    if (head_sizes[h] < 2) throw ConfigError("probe: every head needs >= 2 classes");
    std::vector<char> present(std::size_t(head_sizes[h]), 0);
    for (int t : targets[h]) {
      if (t < 0 || t >= head_sizes[h])
        throw std::invalid_argument("train_probe: target out of range");
      present[std::size_t(t)] = 1;
    }
    for (int c = 0; c < head_sizes[h]; ++c)
      if (!present[std::size_t(c)])
        throw ConfigError("probe: class " + std::to_string(c) + " of head " +
                          std::to_string(h) + " has no examples");
  }

  auto probe = std::make_unique<Probe>();
  probe->head_sizes = head_sizes;
  Rng init_rng = Rng::derive(seed, 0x9B0BE);
  probe->layers.resize(std::size_t(cfg.layers));
  int in = int(features.cols());
  for (int l = 0; l < cfg.layers; ++l) {
    probe->layers[std::size_t(l)].init("probe.l" + std::to_string(l), in, cfg.hidden,
                                       init_rng, probe->params);
    in = cfg.hidden;
  }
  probe->heads.resize(head_sizes.size());
  for (std::size_t h = 0; h < head_sizes.size(); ++h)
    probe->heads[h].init("probe.head" + std::to_string(h), cfg.hidden, head_sizes[h],
                         init_rng, probe->params);

  Adam<float> adam;
  adam.lr = float(cfg.lr);
  Tape<float> tape;
  std::vector<int> order(static_cast<std::size_t>(n), 0);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = Rng::derive(seed, 0xE90C00ULL + std::uint64_t(epoch));
    shuffle_rng.shuffle(order);
    for (int start = 0; start < n; start += cfg.batch) {
      const int size = std::min(cfg.batch, n - start);
      MatF x_batch(size, features.cols());
      std::vector<std::vector<int>> t_batch(targets.size());
      for (int i = 0; i < size; ++i) {
        const int src = order[std::size_t(start + i)];
        x_batch.row(i) = features.row(src);
        for (std::size_t h = 0; h < targets.size(); ++h)
          t_batch[h].push_back(targets[h][std::size_t(src)]);
      }
      tape.clear();
      int x = tape.constant(x_batch);
      for (auto& layer : probe->layers) x = tape.relu(layer.apply(tape, x));
      std::vector<std::pair<float, int>> terms;
      for (std::size_t h = 0; h < probe->heads.size(); ++h)
        terms.emplace_back(1.f,
                           tape.cross_entropy(probe->heads[h].apply(tape, x), t_batch[h]));
      const int loss = tape.weighted_sum(terms);
      if (!std::isfinite(tape.value(loss)(0, 0)))
        throw NumericError("non-finite probe loss");
      probe->params.zero_grad();
      tape.backward(loss);
      adam.step(probe->params);
    }
  }
  return probe;
}

RankingScore score_ranking(const MatF& logits, const std::vector<int>& targets) {
  if (targets.size() != std::size_t(logits.rows()))
    throw std::invalid_argument("score_ranking: target count mismatch");
  double mrr = 0;
  long long hits = 0;
  for (int r = 0; r < logits.rows(); ++r) {
    const int target = targets[std::size_t(r)];
    if (target < 0 || target >= logits.cols())
      throw std::invalid_argument("score_ranking: target out of range");
    const float score = logits(r, target);
    long long rank = 1;
    for (int c = 0; c < logits.cols(); ++c) {
      if (c == target) continue;
      if (logits(r, c) > score || (logits(r, c) == score && c < target)) ++rank;
    }
    mrr += 1.0 / double(rank);
    if (rank <= 10) ++hits;
  }
  RankingScore s;
  s.mrr = mrr / double(logits.rows());
  s.recall_at_10 = 100.0 * double(hits) / double(logits.rows());
  return s;
}

RankingScore score_probe(const Probe& probe, const MatF& features,
                         const std::vector<std::vector<int>>& targets) {
  RankingScore total;
  for (std::size_t h = 0; h < probe.head_sizes.size(); ++h) {
    const RankingScore s = score_ranking(probe.head_logits(features, int(h)), targets[h]);
    total.mrr += s.mrr;
    total.recall_at_10 += s.recall_at_10;
  }
  total.mrr /= double(probe.head_sizes.size());
  total.recall_at_10 /= double(probe.head_sizes.size());
  return total;
}

namespace {

// Instance indices per gloss, in record order.
std::map<int, std::vector<int>> by_gloss(const PreparedCorpus& data,
                                         const std::vector<int>& record_ids) {
  std::map<int, std::vector<int>> groups;
  for (int rid : record_ids) groups[data.records[std::size_t(rid)].gloss_id].push_back(rid);
  return groups;
}

struct SupportSplit {
  std::vector<int> support;
  std::vector<int> eval;
  int excluded = 0;
};

SupportSplit split_support(const std::map<int, std::vector<int>>& groups, double frac,
                           std::uint64_t seed) {
  SupportSplit out;
  for (const auto& [gloss, ids] : groups) {
    if (ids.size() < 2) {
      ++out.excluded;
      continue;
    }
    std::vector<int> shuffled = ids;
    Rng rng = Rng::derive(seed, 0x5B117ULL + std::uint64_t(gloss));
    rng.shuffle(shuffled);
    const int n_support = std::clamp(int(std::lround(frac * double(shuffled.size()))), 1,
                                     int(shuffled.size()) - 1);
    out.support.insert(out.support.end(), shuffled.begin(), shuffled.begin() + n_support);
    out.eval.insert(out.eval.end(), shuffled.begin() + n_support, shuffled.end());
  }
  return out;
}

// Dense class mapping for a set of gloss ids.
std::map<int, int> gloss_classes(const std::map<int, std::vector<int>>& groups) {
  std::map<int, int> classes;
  for (const auto& [gloss, ids] : groups) {
    (void)ids;
    const int next = int(classes.size());
    classes.emplace(gloss, next);
  }
  return classes;
}

RankingScore isr_probe_on(Model<float>& model, const PreparedCorpus& data,
                          const std::vector<int>& record_ids, const ProbeConfig& cfg,
                          std::uint64_t seed, int* glosses_used, int* glosses_excluded) {
  auto groups = by_gloss(data, record_ids);
  // Drop single-instance glosses, then require at least two classes.
  SupportSplit split = split_support(groups, cfg.support_frac, seed);
  const int usable = int(groups.size()) - split.excluded;
  if (glosses_used) *glosses_used = usable;
  if (glosses_excluded) *glosses_excluded = split.excluded;
  if (usable < 2)
    throw ConfigError("isr probe: need at least 2 glosses with >= 2 instances each");

  std::map<int, std::vector<int>> used_groups = by_gloss(data, split.support);
  auto classes = gloss_classes(used_groups);

  const MatF support_codes = extract_codes(model, data, split.support);
  const MatF eval_codes = extract_codes(model, data, split.eval);
  std::vector<int> support_targets, eval_targets;
  for (int rid : split.support)
    support_targets.push_back(classes.at(data.records[std::size_t(rid)].gloss_id));
  for (int rid : split.eval)
    eval_targets.push_back(classes.at(data.records[std::size_t(rid)].gloss_id));

  auto probe = train_probe(support_codes, {support_targets}, {int(classes.size())}, cfg,
                           hash_combine(seed, 0x15A));
  return score_ranking(probe->head_logits(eval_codes, 0), eval_targets);
}

}  // namespace

OovIsrResult run_oov_isr_protocol(Model<float>& model, const PreparedCorpus& data,
                                  const std::vector<int>& record_ids, const ProbeConfig& cfg,
                                  std::uint64_t seed) {
  OovIsrResult result;
  result.score = isr_probe_on(model, data, record_ids, cfg, seed, &result.glosses_used,
                              &result.glosses_excluded);
  return result;
}

MetricsReport evaluate_model(Model<float>& model, const PreparedCorpus& data,
                             const ProbeConfig& probe_cfg, std::uint64_t seed,
                             const std::vector<double>& final_perplexity) {
  MetricsReport report;
  report.variant = to_string(model.variant);
  report.seed = seed;

  const ReconMetrics train_m = eval_reconstruction(model, data, data.train_idx);
  const ReconMetrics test_m = eval_reconstruction(model, data, data.test_idx);
  report.mse_train = train_m.overall;
  report.mse_test = test_m.overall;
  report.has_streams = test_m.has_streams;
  report.mse_stream = test_m.per_stream;

  // ISR in vocabulary: per-gloss support/eval split over training records.
  report.isr_mrr_iv = 0;
  {
    const RankingScore s = isr_probe_on(model, data, data.train_idx, probe_cfg,
                                        hash_combine(seed, 0x151), nullptr, nullptr);
    report.isr_mrr_iv = s.mrr;
    report.isr_r10_iv = s.recall_at_10;
  }
  {
    const OovIsrResult s =
        run_oov_isr_protocol(model, data, data.test_idx, probe_cfg, hash_combine(seed, 0x152));
    report.isr_mrr_oov = s.score.mrr;
    report.isr_r10_oov = s.score.recall_at_10;
  }

  // PFR: one multi-head probe trained on in-vocabulary support codes,
  // evaluated on held-out in-vocabulary instances and on all test records.
  {
    auto groups = by_gloss(data, data.train_idx);
    SupportSplit split = split_support(groups, probe_cfg.support_frac,
                                       hash_combine(seed, 0x153));
    const MatF support_codes = extract_codes(model, data, split.support);
    const MatF iv_eval_codes = extract_codes(model, data, split.eval);
    const MatF oov_codes = extract_codes(model, data, data.test_idx);

    const int n_features = data.schema.feature_count();
    std::vector<int> head_sizes;
    for (const auto& f : data.schema.features) head_sizes.push_back(f.classes);
    auto targets_of = [&](const std::vector<int>& ids) {
      std::vector<std::vector<int>> targets(static_cast<std::size_t>(n_features));
      for (int rid : ids)
        for (int f = 0; f < n_features; ++f)
          targets[std::size_t(f)].push_back(
              (*data.records[std::size_t(rid)].labels)[std::size_t(f)]);
      return targets;
    };
    auto probe = train_probe(support_codes, targets_of(split.support), head_sizes, probe_cfg,
                             hash_combine(seed, 0x154));
    const RankingScore iv = score_probe(*probe, iv_eval_codes, targets_of(split.eval));
    const RankingScore oov = score_probe(*probe, oov_codes, targets_of(data.test_idx));
    report.pfr_mrr_iv = iv.mrr;
    report.pfr_r10_iv = iv.recall_at_10;
    report.pfr_mrr_oov = oov.mrr;
    report.pfr_r10_oov = oov.recall_at_10;
  }

  double perp_sum = 0;
  for (std::size_t b = 0; b < model.books.size(); ++b) {
    const double p = b < final_perplexity.size() ? final_perplexity[b] : 1.0;
    report.book_perplexity.emplace_back(model.books[b].name, p);
    perp_sum += p;
  }
  report.perplexity_mean = perp_sum / double(model.books.size());
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string metrics_csv_header() {
  return "variant,seed,mse_train,mse_test,mse_rh,mse_lh,mse_nmm,mse_body,mse_movr,mse_movl,"
         "isr_mrr_iv,isr_r10_iv,isr_mrr_oov,isr_r10_oov,pfr_mrr_iv,pfr_r10_iv,pfr_mrr_oov,"
         "pfr_r10_oov,perplexity_mean";
}

std::string metrics_csv_row(const MetricsReport& r) {
  std::string row = r.variant + "," + std::to_string(r.seed) + "," + fmt(r.mse_train) + "," +
                    fmt(r.mse_test);
  for (int s = 0; s < kStreamCount; ++s)
    row += "," + (r.has_streams ? fmt(r.mse_stream[std::size_t(s)]) : std::string());
  for (double v : {r.isr_mrr_iv, r.isr_r10_iv, r.isr_mrr_oov, r.isr_r10_oov, r.pfr_mrr_iv,
                   r.pfr_r10_iv, r.pfr_mrr_oov, r.pfr_r10_oov, r.perplexity_mean})
    row += "," + fmt(v);
  return row;
}

std::string metrics_text_report(const MetricsReport& r) {
  std::string text;
  text += "variant: " + r.variant + "\n";
  text += "seed: " + std::to_string(r.seed) + "\n";
  text += "reconstruction mse (train vocabulary): " + fmt(r.mse_train) + "\n";
  text += "reconstruction mse (test vocabulary):  " + fmt(r.mse_test) + "\n";
  if (r.has_streams) {
    text += "channel-wise test mse:\n";
    for (StreamId s : kAllStreams)
      text += std::string("  ") + to_string(s) + ": " +
              fmt(r.mse_stream[std::size_t(int(s))]) + "\n";
  }
  text += "isr probe (in vocab):  mrr " + fmt(r.isr_mrr_iv) + ", recall@10 " +
          fmt(r.isr_r10_iv) + "%\n";
  text += "isr probe (oov):       mrr " + fmt(r.isr_mrr_oov) + ", recall@10 " +
          fmt(r.isr_r10_oov) + "%\n";
  text += "pfr probe (in vocab):  mrr " + fmt(r.pfr_mrr_iv) + ", recall@10 " +
          fmt(r.pfr_r10_iv) + "%\n";
  text += "pfr probe (oov):       mrr " + fmt(r.pfr_mrr_oov) + ", recall@10 " +
          fmt(r.pfr_r10_oov) + "%\n";
  text += "final codebook perplexity:\n";
  for (const auto& [name, p] : r.book_perplexity)
    text += "  " + name + ": " + fmt(p) + "\n";
  text += "perplexity mean: " + fmt(r.perplexity_mean) + "\n";
  text +=
      "note: the oov isr probe trains on a per-gloss support split of unseen-gloss "
      "instances and is scored on the held-out instances; the autoencoder never trained "
      "on these glosses.\n";
  return text;
}

}  // namespace vqsign
