#include "vqsign/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace vqsign {

const char* to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::Baseline: return "baseline";
    case ModelVariant::PD: return "pd";
    case ModelVariant::PSS: return "pss";
    case ModelVariant::Full: return "full";
  }
  return "?";
}

ModelVariant variant_from_string(const std::string& name) {
  for (ModelVariant v : {ModelVariant::Baseline, ModelVariant::PD, ModelVariant::PSS,
                         ModelVariant::Full})
    if (name == to_string(v)) return v;
  throw ConfigError("unknown model variant: " + name +
                    " (expected baseline, pd, pss or full)");
}

void CapacityPlan::validate() const {
  for (int c : latent_counts)
    if (c < 1) throw ConfigError("capacity plan: every stream needs >= 1 latent");
  if (baseline_latent_count < 1) throw ConfigError("capacity plan: baseline latents < 1");
  if (hand_book < 1 || movement_book < 1 || nmm_book < 1 || body_book < 1 ||
      baseline_book < 1)
    throw ConfigError("capacity plan: codebook sizes must be positive");
  if (total_stream_latents() != baseline_latent_count)
    throw ConfigError("capacity plan: stream latent counts sum to " +
                      std::to_string(total_stream_latents()) + ", expected " +
                      std::to_string(baseline_latent_count));
  if (total_stream_book_entries() != baseline_book)
    throw ConfigError("capacity plan: stream codebook sizes sum to " +
                      std::to_string(total_stream_book_entries()) + ", expected " +
                      std::to_string(baseline_book));
}

void ModelConfig::validate() const {
  if (model_dim < 1 || layers < 1 || heads < 1 || latent_dim < 1 || ffn_mult < 1)
    throw ConfigError("model config: dimensions must be positive");
  if (model_dim % heads != 0)
    throw ConfigError("model config: model_dim must be divisible by heads");
  if (dropout < 0 || dropout >= 1) throw ConfigError("model config: dropout must be in [0,1)");
  if (sampled_frames < 1 || max_frames < sampled_frames)
    throw ConfigError("model config: need 1 <= sampled_frames <= max_frames");
}

std::vector<FeatureSlot> assign_feature_slots(const PhonoFeatureSchema& schema,
                                              const CapacityPlan& plan, bool multi_stream) {
  schema.validate();
  plan.validate();

  std::vector<int> order(static_cast<std::size_t>(schema.feature_count()), 0);
  for (int i = 0; i < schema.feature_count(); ++i) order[std::size_t(i)] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return schema.features[std::size_t(a)].name < schema.features[std::size_t(b)].name;
  });

  // Book layout mirrors build_model: multi-stream books are
  // [hand, movement, nmm, body], baseline has the single book 0.
  auto book_of = [&](StreamId s) {
    if (!multi_stream) return 0;
    switch (s) {
      case StreamId::RH:
      case StreamId::LH: return 0;
      case StreamId::MOVR:
      case StreamId::MOVL: return 1;
      case StreamId::NMM: return 2;
      case StreamId::BODY: return 3;
      default: throw std::invalid_argument("assign_feature_slots: bad stream");
    }
  };
  const std::array<int, 4> book_sizes = multi_stream
                                            ? std::array<int, 4>{plan.hand_book, plan.movement_book,
                                                                 plan.nmm_book, plan.body_book}
                                            : std::array<int, 4>{plan.baseline_book, 0, 0, 0};
  auto latents_of = [&](StreamId s) {
    return multi_stream ? plan.latent_counts[std::size_t(int(s))] : plan.baseline_latent_count;
  };

  std::array<int, 4> book_cursor = {0, 0, 0, 0};
  std::map<int, int> stream_cursor;  // int(StreamId) or -1 for baseline

  std::vector<FeatureSlot> result;
  for (int fi : order) {
    const PhonoFeature& feature = schema.features[std::size_t(fi)];

    // One reserved range per (feature, codebook); features spanning two
    // streams of a shared book get a single range.
    std::map<int, int> range_begin;
    std::vector<StreamId> targets;
    if (multi_stream) {
      targets = feature.streams;
      std::sort(targets.begin(), targets.end(),
                [](StreamId a, StreamId b) { return int(a) < int(b); });
    } else {
      targets = {StreamId::All};
    }
    for (StreamId target : targets) {
      const int book = multi_stream ? book_of(target) : 0;
      if (range_begin.find(book) == range_begin.end()) {
        if (book_cursor[std::size_t(book)] + feature.classes > book_sizes[std::size_t(book)])
          throw ConfigError("codebook " + std::to_string(book) +
                            " has no room for reserved codes of feature " + feature.name);
        range_begin[book] = book_cursor[std::size_t(book)];
        book_cursor[std::size_t(book)] += feature.classes;
      }
      int& cursor = stream_cursor[int(target)];
      FeatureSlot fs;
      fs.feature = fi;
      fs.feature_name = feature.name;
      fs.stream = target;
      fs.slot = cursor % latents_of(target);
      ++cursor;
      fs.book = book;
      fs.reserved_begin = range_begin[book];
      fs.reserved_size = feature.classes;
      result.push_back(fs);
    }
  }

  // Mark slot owners: the last feature (in name order) writing a slot wins.
  std::map<std::pair<int, int>, std::size_t> last_writer;
  for (std::size_t i = 0; i < result.size(); ++i)
    last_writer[{int(result[i].stream), result[i].slot}] = i;
  for (std::size_t i = 0; i < result.size(); ++i)
    result[i].slot_owner = last_writer[{int(result[i].stream), result[i].slot}] == i;
  return result;
}

long long stream_net_param_count(int features, int latents, int dim, int ffn, int layers,
                                 int latent_dim) {
  auto linear = [](long long in, long long out) { return in * out + out; };
  const long long block = 2 * (2 * dim) + 4 * linear(dim, dim) + linear(dim, ffn) +
                          linear(ffn, dim);
  long long total = 0;
  total += linear(features, dim);            // embed
  total += (long long)latents * dim;         // encoder queries
  total += (long long)layers * block;        // encoder blocks
  total += 2 * dim;                          // encoder final norm
  total += linear(dim, latent_dim);          // latent projection
  total += linear(latent_dim, dim);          // decoder input projection
  total += (long long)latents * dim + dim;   // slot embedding + query base
  total += (long long)layers * block;        // decoder blocks
  total += 2 * dim;                          // decoder final norm
  total += linear(dim, features);            // output head
  return total;
}

namespace {

struct StreamSpec {
  StreamId id;
  int features;
  int frames;
  int latents;
};

std::vector<StreamSpec> stream_specs(const SkeletonLayout& layout, const ModelConfig& cfg,
                                     const CapacityPlan& plan) {
  return {
      {StreamId::RH, layout.right_hand.size() * 3, cfg.sampled_frames,
       plan.latent_counts[0]},
      {StreamId::LH, layout.left_hand.size() * 3, cfg.sampled_frames, plan.latent_counts[1]},
      {StreamId::NMM, layout.face.size() * 3, cfg.sampled_frames, plan.latent_counts[2]},
      {StreamId::BODY, layout.body.size() * 3, cfg.sampled_frames, plan.latent_counts[3]},
      {StreamId::MOVR, 3, cfg.max_frames, plan.latent_counts[4]},
      {StreamId::MOVL, 3, cfg.max_frames, plan.latent_counts[5]},
  };
}

}  // namespace

StreamArch derive_stream_arch(const ModelConfig& cfg, const CapacityPlan& plan,
                              const SkeletonLayout& layout) {
  cfg.validate();
  plan.validate();
  const long long baseline = stream_net_param_count(
      layout.joint_count() * 3, plan.baseline_latent_count, cfg.model_dim,
      cfg.model_dim * cfg.ffn_mult, cfg.layers, cfg.latent_dim);

  const auto specs = stream_specs(layout, cfg, plan);
  StreamArch best;
  long long best_gap = -1;
  for (int dim = 4; dim <= cfg.model_dim; dim += 2) {
    int heads = 1;
    for (int h : {4, 2, 1}) {
      if (h <= cfg.heads && dim % h == 0) {
        heads = h;
        break;
      }
    }
    for (int mult = 1; mult <= 4; ++mult) {
      long long total = 0;
      for (const auto& s : specs)
        total += stream_net_param_count(s.features, s.latents, dim, dim * mult, cfg.layers,
                                        cfg.latent_dim);
      const long long gap = std::llabs(total - baseline);
      if (best_gap < 0 || gap < best_gap) {
        best_gap = gap;
        best = {dim, heads, dim * mult};
      }
    }
  }
  return best;
}

template <class S>
std::unique_ptr<Model<S>> build_model(ModelVariant variant, const CapacityPlan& plan,
                                      const std::optional<PssConfig>& pss,
                                      const ModelConfig& cfg, const PhonoFeatureSchema& schema,
                                      const SkeletonLayout& layout, std::uint64_t seed) {
  cfg.validate();
  plan.validate();
  schema.validate();
  layout.validate();
  if (variant_pss(variant) != pss.has_value())
    throw ConfigError(std::string("variant ") + to_string(variant) +
                      (pss ? " does not take a PSS config" : " requires a PSS config"));
  if (pss && (pss->p_force < 0 || pss->p_force > 1))
    throw ConfigError("pss: p_force must be in [0,1]");

  auto model = std::make_unique<Model<S>>();
  model->variant = variant;
  model->cfg = cfg;
  model->plan = plan;
  model->schema = schema;
  model->layout = layout;
  model->init_seed = seed;
  if (pss) {
    model->pss = *pss;
    model->pss_enabled = true;
  }

  Rng rng = Rng::derive(seed, 0x111117);

  if (variant_multi_stream(variant)) {
    const StreamArch arch = derive_stream_arch(cfg, plan, layout);
    model->stream_dim = arch.dim;
    model->stream_heads = arch.heads;
    model->stream_ffn = arch.ffn;
    const auto specs = stream_specs(layout, cfg, plan);
    model->nets.resize(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto& s = specs[i];
      model->nets[i].init(std::string("net.") + to_string(s.id), s.id, s.features, s.frames,
                          s.latents, arch.dim, arch.heads, arch.ffn, cfg.layers,
                          cfg.latent_dim, rng, model->params);
    }
    model->books.push_back(make_codebook<S>("book.hand", plan.hand_book, cfg.latent_dim,
                                            {StreamId::RH, StreamId::LH}, rng));
    model->books.push_back(make_codebook<S>("book.movement", plan.movement_book,
                                            cfg.latent_dim, {StreamId::MOVR, StreamId::MOVL},
                                            rng));
    model->books.push_back(
        make_codebook<S>("book.nmm", plan.nmm_book, cfg.latent_dim, {StreamId::NMM}, rng));
    model->books.push_back(
        make_codebook<S>("book.body", plan.body_book, cfg.latent_dim, {StreamId::BODY}, rng));
    model->book_of_stream = {0, 0, 2, 3, 1, 1};
  } else {
    model->stream_dim = cfg.model_dim;
    model->stream_heads = cfg.heads;
    model->stream_ffn = cfg.model_dim * cfg.ffn_mult;
    model->nets.resize(1);
    model->nets[0].init("net.all", StreamId::All, layout.joint_count() * 3,
                        cfg.sampled_frames, plan.baseline_latent_count, cfg.model_dim,
                        cfg.heads, cfg.model_dim * cfg.ffn_mult, cfg.layers, cfg.latent_dim,
                        rng, model->params);
    model->books.push_back(make_codebook<S>("book.all", plan.baseline_book, cfg.latent_dim,
                                            {StreamId::All}, rng));
    model->book_of_stream = {0, 0, 0, 0, 0, 0};
  }

  if (model->pss_enabled) {
    model->slots = assign_feature_slots(schema, plan, variant_multi_stream(variant));
    for (const auto& fs : model->slots) {
      auto& reserved = model->books[std::size_t(fs.book)].reserved;
      const bool present = std::any_of(reserved.begin(), reserved.end(), [&](const auto& r) {
        return r.feature == fs.feature_name;
      });
      if (!present)
        reserved.push_back({fs.feature_name, fs.reserved_begin, fs.reserved_size});
    }
  }

  for (auto& book : model->books) {
    book.validate();
    model->params.add(&book.entries);
  }
  return model;
}

template std::unique_ptr<Model<float>> build_model<float>(ModelVariant, const CapacityPlan&,
                                                          const std::optional<PssConfig>&,
                                                          const ModelConfig&,
                                                          const PhonoFeatureSchema&,
                                                          const SkeletonLayout&, std::uint64_t);
template std::unique_ptr<Model<double>> build_model<double>(
    ModelVariant, const CapacityPlan&, const std::optional<PssConfig>&, const ModelConfig&,
    const PhonoFeatureSchema&, const SkeletonLayout&, std::uint64_t);

// ---------------------------------------------------------------------------

template <class S>
ForwardOutcome<S> model_forward(Model<S>& model, Tape<S>& tape, const BatchData<S>& batch,
                                RunMode mode, double gumbel_tau, double beta_commit,
                                double gamma_diversity, Rng& rng) {
  const int n_nets = model.stream_count();
  if (int(batch.streams.size()) != n_nets)
    throw std::invalid_argument("model_forward: batch has wrong stream count");
  if (batch.batch < 1) throw std::invalid_argument("model_forward: empty batch");
  const bool train = mode == RunMode::Train;
  const S dropout = train ? S(model.cfg.dropout) : S(0);
  const bool force = train && model.pss_enabled && model.pss.p_force > 0;
  if (force && batch.labels.size() != std::size_t(batch.batch))
    throw std::invalid_argument(
        "model_forward: training a PSS model requires labels for every sample");

  ForwardOutcome<S> out;
  out.recon_stream.assign(std::size_t(n_nets), S(0));
  out.recon_count.assign(std::size_t(n_nets), 0);
  out.recon_node.assign(std::size_t(n_nets), -1);
  out.stream_indices.resize(std::size_t(n_nets));
  out.stream_zq.resize(std::size_t(n_nets));

  // Encode every stream.
  std::vector<int> z_e(static_cast<std::size_t>(n_nets), -1);
  std::vector<int> input_nodes(static_cast<std::size_t>(n_nets), -1);
  for (int s = 0; s < n_nets; ++s) {
    const auto& sb = batch.streams[std::size_t(s)];
    auto& net = model.nets[std::size_t(s)];
    if (sb.input.rows() != Eigen::Index(batch.batch) * net.frames ||
        sb.input.cols() != net.in_features)
      throw std::invalid_argument("model_forward: stream input shape mismatch");
    input_nodes[std::size_t(s)] = tape.constant(sb.input);
    const std::vector<std::uint8_t>* valid =
        sb.frame_valid.empty() ? nullptr : &sb.frame_valid;
    z_e[std::size_t(s)] = net.encode(tape, input_nodes[std::size_t(s)], batch.batch, valid,
                                     dropout, rng);
  }

  // Group encoder outputs per codebook, preserving stream order.
  const int n_books = int(model.books.size());
  std::vector<std::vector<int>> book_streams(static_cast<std::size_t>(n_books));
  for (int s = 0; s < n_nets; ++s) {
    const int b = model.multi_stream() ? model.book_of_stream[std::size_t(s)] : 0;
    book_streams[std::size_t(b)].push_back(s);
  }

  std::vector<std::pair<S, int>> loss_terms;
  std::vector<int> st_nodes(std::size_t(n_nets), -1);
  out.book_codebook.assign(std::size_t(n_books), S(0));
  out.book_commit.assign(std::size_t(n_books), S(0));
  out.book_diversity.assign(std::size_t(n_books), S(0));
  out.book_perplexity.assign(std::size_t(n_books), S(1));
  out.book_encoder_sample.resize(std::size_t(n_books));

  for (int b = 0; b < n_books; ++b) {
    if (book_streams[std::size_t(b)].empty()) continue;
    auto& book = model.books[std::size_t(b)];

    int z_cat = -1;
    std::vector<int> row_offset;  // per stream in this book
    int rows = 0;
    for (int s : book_streams[std::size_t(b)]) {
      row_offset.push_back(rows);
      rows += batch.batch * model.nets[std::size_t(s)].latent_count;
      z_cat = z_cat < 0 ? z_e[std::size_t(s)] : tape.concat_rows(z_cat, z_e[std::size_t(s)]);
    }

    const int book_node = tape.param(book.entries);
    const int dist = tape.pairwise_sqdist(z_cat, book_node);

    std::vector<int> indices;
    if (train && gumbel_tau > 0)
      indices = gumbel_indices(tape.value(dist), gumbel_tau, rng);
    else
      indices = nearest_indices(tape.value(dist));

    std::vector<std::uint8_t> forced(indices.size(), 0);
    if (force) {
      // One coin per (sample, feature); a fired coin forces the feature's
      // designated slot in every stream it maps to. Later features in name
      // order overwrite earlier ones on a shared slot.
      std::map<int, std::vector<std::uint8_t>> coins;
      for (const auto& fs : model.slots) {
        if (fs.book != b) continue;
        auto it = coins.find(fs.feature);
        if (it == coins.end()) {
          std::vector<std::uint8_t> draw(static_cast<std::size_t>(batch.batch), 0);
          for (int sample = 0; sample < batch.batch; ++sample)
            draw[std::size_t(sample)] = rng.uniform() < model.pss.p_force ? 1 : 0;
          it = coins.emplace(fs.feature, std::move(draw)).first;
        }
        // Locate this slot's stream within the book's row blocks.
        int local = -1;
        for (std::size_t i = 0; i < book_streams[std::size_t(b)].size(); ++i) {
          const auto& net = model.nets[std::size_t(book_streams[std::size_t(b)][i])];
          if (net.id == fs.stream) local = int(i);
        }
        if (local < 0) continue;
        const int latents =
            model.nets[std::size_t(book_streams[std::size_t(b)][std::size_t(local)])]
                .latent_count;
        for (int sample = 0; sample < batch.batch; ++sample) {
          ++out.designated_slots;
          if (!it->second[std::size_t(sample)]) continue;
          const int row = row_offset[std::size_t(local)] + sample * latents + fs.slot;
          const int cls = (*batch.labels[std::size_t(sample)])[std::size_t(fs.feature)];
          if (cls >= fs.reserved_size)
            throw ConfigError("pss: class index outside reserved range for feature " +
                              fs.feature_name);
          indices[std::size_t(row)] = fs.reserved_begin + cls;
          forced[std::size_t(row)] = 1;
          ++out.forced_slots;
        }
      }
    }

    for (int idx : indices) ++book.usage[std::size_t(idx)];

    // Snapped values.
    Matrix<S> q_values(Eigen::Index(indices.size()), book.dim());
    for (std::size_t i = 0; i < indices.size(); ++i)
      q_values.row(Eigen::Index(i)) = book.entries.value.row(indices[i]);

    // Codebook loss pulls selected entries toward sg[z_e]; commitment loss
    // pulls z_e toward sg[z_q]; both computed against the final (possibly
    // forced) codes.
    const int gathered = tape.gather_rows(book_node, indices);
    const int cb_loss = tape.mse(gathered, tape.value(z_cat));
    const int commit_loss = tape.mse(z_cat, q_values);
    const int soft = tape.softmax_rows(tape.scale(dist, S(-1.0 / kDiversityTemperature)));
    const int div_loss = tape.entropy_deficit(tape.colwise_mean(soft));
    loss_terms.emplace_back(S(1), cb_loss);
    loss_terms.emplace_back(S(beta_commit), commit_loss);
    loss_terms.emplace_back(S(gamma_diversity), div_loss);

    out.book_codebook[std::size_t(b)] = tape.value(cb_loss)(0, 0);
    out.book_commit[std::size_t(b)] = tape.value(commit_loss)(0, 0);
    out.book_diversity[std::size_t(b)] = tape.value(div_loss)(0, 0);
    {
      std::vector<S> hist(std::size_t(book.size()), S(0));
      for (int idx : indices) hist[std::size_t(idx)] += S(1);
      out.book_perplexity[std::size_t(b)] = perplexity(hist);
    }
    out.book_encoder_sample[std::size_t(b)] = tape.value(z_cat);

    const int st = tape.straight_through(z_cat, q_values);
    for (std::size_t i = 0; i < book_streams[std::size_t(b)].size(); ++i) {
      const int s = book_streams[std::size_t(b)][i];
      const int count = batch.batch * model.nets[std::size_t(s)].latent_count;
      st_nodes[std::size_t(s)] = tape.slice_rows(st, row_offset[i], count);
      out.stream_indices[std::size_t(s)] =
          std::vector<int>(indices.begin() + row_offset[i],
                           indices.begin() + row_offset[i] + count);
      out.stream_zq[std::size_t(s)] = q_values.middleRows(row_offset[i], count);
    }
  }

  // Decode each stream and accumulate reconstruction losses.
  for (int s = 0; s < n_nets; ++s) {
    auto& net = model.nets[std::size_t(s)];
    const auto& sb = batch.streams[std::size_t(s)];
    const int recon = net.decode(tape, st_nodes[std::size_t(s)], batch.batch, dropout, rng);
    const std::vector<std::uint8_t>* valid =
        sb.frame_valid.empty() ? nullptr : &sb.frame_valid;
    const int loss = tape.mse(recon, sb.input, valid);
    loss_terms.emplace_back(S(1), loss);
    out.recon_node[std::size_t(s)] = recon;
    out.recon_stream[std::size_t(s)] = tape.value(loss)(0, 0);
    long long count = 0;
    if (valid) {
      for (auto v : *valid) count += v ? net.in_features : 0;
    } else {
      count = (long long)batch.batch * net.frames * net.in_features;
    }
    out.recon_count[std::size_t(s)] = count;
    out.recon_total += out.recon_stream[std::size_t(s)];
  }

  out.loss_node = tape.weighted_sum(loss_terms);
  out.total_loss = tape.value(out.loss_node)(0, 0);
  return out;
}

template ForwardOutcome<float> model_forward<float>(Model<float>&, Tape<float>&,
                                                    const BatchData<float>&, RunMode, double,
                                                    double, double, Rng&);
template ForwardOutcome<double> model_forward<double>(Model<double>&, Tape<double>&,
                                                      const BatchData<double>&, RunMode,
                                                      double, double, double, Rng&);

}  // namespace vqsign
