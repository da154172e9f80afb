#include "vqsign/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "vqsign/errors.hpp"

namespace vqsign {

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("train: steps must be >= 0");
  if (batch < 1) throw ConfigError("train: batch must be >= 1");
  if (lr <= 0) throw ConfigError("train: learning rate must be positive");
  if (beta_commit < 0 || gamma_diversity < 0)
    throw ConfigError("train: loss weights must be non-negative");
  if (gumbel_fraction < 0 || gumbel_fraction > 1)
    throw ConfigError("train: gumbel_fraction must be in [0,1]");
  if (gumbel_start < gumbel_end || gumbel_end <= 0)
    throw ConfigError("train: gumbel temperatures need start >= end > 0");
  if (reinit_enabled && steps > 0 && steps < reinit_interval)
    throw ConfigError("train: steps must be >= the dead-code interval (" +
                      std::to_string(reinit_interval) + ")");
  if (reinit_interval < 1) throw ConfigError("train: reinit interval must be >= 1");
  if (reinit_sample_size < 1) throw ConfigError("train: reinit sample size must be >= 1");
  if (reinit_usage_frac < 0) throw ConfigError("train: reinit usage fraction must be >= 0");
}

namespace {

// Batch order is a pure function of (seed, epoch), so a resumed run draws
// the same batches an uninterrupted run would.
std::vector<int> epoch_order(const std::vector<int>& pool, std::uint64_t seed,
                             long long epoch) {
  std::vector<int> order = pool;
  Rng rng = Rng::derive(seed, 0xE90C00ULL + std::uint64_t(epoch));
  rng.shuffle(order);
  return order;
}

void check_finite(const ForwardOutcome<float>& out, long long step) {
  auto bad = [](float v) { return !std::isfinite(v); };
  const char* term = nullptr;
  if (bad(out.total_loss)) term = "total";
  for (float v : out.recon_stream)
    if (bad(v)) term = "reconstruction";
  for (float v : out.book_codebook)
    if (bad(v)) term = "codebook";
  for (float v : out.book_commit)
    if (bad(v)) term = "commitment";
  for (float v : out.book_diversity)
    if (bad(v)) term = "diversity";
  if (term)
    throw NumericError(std::string("non-finite ") + term + " loss at step " +
                       std::to_string(step));
}

}  // namespace

TrainResult train_model(Model<float>& model, const PreparedCorpus& data,
                        const TrainConfig& cfg, const std::string& log_path) {
  cfg.validate();
  if (data.train_idx.empty()) throw ConfigError("train: no records in the training split");

  std::ofstream log_file;
  if (!log_path.empty()) {
    log_file.open(log_path, std::ios::app);
    if (!log_file) throw IoError("cannot open training log: " + log_path);
  }

  Adam<float> adam;
  adam.lr = float(cfg.lr);
  adam.step_count = model.trained_steps;

  const long long gumbel_steps =
      cfg.gumbel_enabled ? (long long)std::llround(cfg.gumbel_fraction * double(cfg.steps))
                         : 0;
  GumbelSchedule schedule;
  schedule.start_temperature = cfg.gumbel_start;
  schedule.end_temperature = cfg.gumbel_end;
  schedule.decay_steps = cfg.gumbel_decay_steps > 0 ? cfg.gumbel_decay_steps
                                                    : std::max<long long>(1, cfg.steps / 5);

  TrainResult result;
  result.log.reserve(std::size_t(cfg.steps));

  const long long n_train = (long long)data.train_idx.size();
  Tape<float> tape;
  long long cached_epoch = -1;
  std::vector<int> cached_order;

  const long long first_step = model.trained_steps + 1;
  const long long last_step = model.trained_steps + cfg.steps;
  for (long long step = first_step; step <= last_step; ++step) {
    // Consume the shuffled pool in order, reshuffling at epoch boundaries.
    std::vector<int> batch_ids(static_cast<std::size_t>(cfg.batch), 0);
    {
      long long cursor = (step - 1) * cfg.batch;
      for (int i = 0; i < cfg.batch; ++i, ++cursor) {
        const long long epoch = cursor / n_train;
        const long long pos = cursor % n_train;
        if (cached_epoch != epoch) {
          cached_order = epoch_order(data.train_idx, cfg.seed, epoch);
          cached_epoch = epoch;
        }
        batch_ids[std::size_t(i)] = cached_order[std::size_t(pos)];
      }
    }

    schedule.current_step = step - 1;
    const double tau = (step <= gumbel_steps) ? schedule.temperature() : 0.0;

    Rng step_rng = Rng::derive(cfg.seed, 0x57E900ULL + std::uint64_t(step));
    tape.clear();
    BatchData<float> batch = assemble_batch(data, batch_ids, model);
    ForwardOutcome<float> out = model_forward(model, tape, batch, RunMode::Train, tau,
                                              cfg.beta_commit, cfg.gamma_diversity, step_rng);
    check_finite(out, step);

    model.params.zero_grad();
    tape.backward(out.loss_node);
    adam.step(model.params);

    TrainLogEntry entry;
    entry.step = step;
    entry.total = out.total_loss;
    entry.recon = out.recon_total;
    for (std::size_t b = 0; b < out.book_codebook.size(); ++b) {
      entry.codebook += out.book_codebook[b];
      entry.commit += out.book_commit[b];
      entry.diversity += out.book_diversity[b];
      entry.perplexity_mean += out.book_perplexity[b];
    }
    entry.perplexity_mean /= double(out.book_perplexity.size());
    result.log.push_back(entry);
    if (log_file) {
      char buf[256];
      std::snprintf(buf, sizeof buf,
                    "{\"step\":%lld,\"total\":%.6g,\"recon\":%.6g,\"codebook\":%.6g,"
                    "\"commit\":%.6g,\"diversity\":%.6g,\"perplexity\":%.6g}",
                    entry.step, entry.total, entry.recon, entry.codebook, entry.commit,
                    entry.diversity, entry.perplexity_mean);
      log_file << buf << '\n';
    }

    // Usage-window bookkeeping: every interval, re-initialize dead codes
    // from the current batch's encoder outputs, then reset all usage counts
    // so each window is independent.
    const bool window_end = step % cfg.reinit_interval == 0 || step == last_step;
    if (window_end) {
      result.final_perplexity.clear();
      for (std::size_t b = 0; b < model.books.size(); ++b) {
        auto& book = model.books[b];
        std::vector<double> hist(book.usage.begin(), book.usage.end());
        result.final_perplexity.push_back(perplexity(hist));
      }
    }
    if (step % cfg.reinit_interval == 0) {
      for (std::size_t b = 0; b < model.books.size(); ++b) {
        auto& book = model.books[b];
        if (cfg.reinit_enabled) {
          long long window = 0;
          for (auto u : book.usage) window += u;
          const long long threshold = std::max<long long>(
              1, (long long)std::floor(cfg.reinit_usage_frac * double(window) /
                                       double(book.size())));
          result.reinitialized_codes +=
              reinit_dead_codes(book, out.book_encoder_sample[b], threshold,
                                cfg.reinit_sample_size, step_rng);
        }
        std::fill(book.usage.begin(), book.usage.end(), 0);
      }
    }
  }

  model.trained_steps = last_step;
  if (result.final_perplexity.empty())
    result.final_perplexity.assign(model.books.size(), 1.0);
  return result;
}

}  // namespace vqsign
