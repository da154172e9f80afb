// The four ablation configurations: baseline VQ autoencoder, the
// multi-stream parameter-disentangled variant, phonological semi-supervision
// via forced codes, and their combination.
#ifndef VQSIGN_MODEL_HPP
#define VQSIGN_MODEL_HPP

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vqsign/autodiff.hpp"
#include "vqsign/errors.hpp"
#include "vqsign/phono.hpp"
#include "vqsign/pose.hpp"
#include "vqsign/vq.hpp"

namespace vqsign {

enum class ModelVariant { Baseline, PD, PSS, Full };

const char* to_string(ModelVariant v);
ModelVariant variant_from_string(const std::string& name);

inline bool variant_multi_stream(ModelVariant v) {
  return v == ModelVariant::PD || v == ModelVariant::Full;
}
inline bool variant_pss(ModelVariant v) {
  return v == ModelVariant::PSS || v == ModelVariant::Full;
}

// Latent and codebook capacity. Hand streams share one codebook, movement
// streams another; totals match the baseline budget.
struct CapacityPlan {
  std::array<int, kStreamCount> latent_counts = {8, 8, 4, 4, 3, 3};  // RH LH NMM BODY MOVR MOVL
  int baseline_latent_count = 30;
  int hand_book = 80;
  int movement_book = 40;
  int nmm_book = 40;
  int body_book = 40;
  int baseline_book = 200;

  int total_stream_latents() const {
    int n = 0;
    for (int c : latent_counts) n += c;
    return n;
  }
  int total_stream_book_entries() const {
    return hand_book + movement_book + nmm_book + body_book;
  }
  void validate() const;
};

struct PssConfig {
  double p_force = 0.5;
};

// Transformer dimensions. Defaults are the reference configuration; the CLI
// desk profile overrides model_dim/layers to fit a CPU budget.
struct ModelConfig {
  int model_dim = 256;
  int layers = 5;
  int heads = 4;
  int latent_dim = 32;  // L_c
  int ffn_mult = 2;
  double dropout = 0.2;
  int sampled_frames = 16;  // S
  int max_frames = 48;

  void validate() const;
};

// Where one phonological feature is supervised: the latent slot whose
// quantization is forced, and the reserved index range in the codebook.
struct FeatureSlot {
  int feature = 0;
  std::string feature_name;
  StreamId stream = StreamId::All;
  int slot = 0;
  int book = 0;
  int reserved_begin = 0;
  int reserved_size = 0;
  // When several features round-robin onto one slot, the last one in name
  // order wins a simultaneous force; only the winner is checked for
  // forcing/learning consistency.
  bool slot_owner = true;
};

// Deterministic assignment: features sorted by name; reserved ranges packed
// from index 0 in each codebook; slots assigned 0,1,2,... per stream in the
// same order, wrapping round-robin when a stream hosts more features than
// latent slots.
std::vector<FeatureSlot> assign_feature_slots(const PhonoFeatureSchema& schema,
                                              const CapacityPlan& plan, bool multi_stream);

// ---------------------------------------------------------------------------

template <class S>
struct LinearLayer {
  Param<S> w;
  Param<S> b;

  void init(const std::string& name, int in, int out, Rng& rng, ParamSet<S>& set) {
    const double bound = std::sqrt(6.0 / double(in + out));
    Matrix<S> wv(in, out);
    for (int r = 0; r < in; ++r)
      for (int c = 0; c < out; ++c) wv(r, c) = S(rng.uniform(-bound, bound));
    w = Param<S>(name + ".w", std::move(wv));
    b = Param<S>(name + ".b", Matrix<S>::Zero(1, out));
    set.add(&w);
    set.add(&b);
  }

  int apply(Tape<S>& t, int x) { return t.add_bias(t.matmul(x, t.param(w)), t.param(b)); }
};

template <class S>
struct LayerNormLayer {
  Param<S> gamma;
  Param<S> beta;

  void init(const std::string& name, int dim, ParamSet<S>& set) {
    gamma = Param<S>(name + ".g", Matrix<S>::Ones(1, dim));
    beta = Param<S>(name + ".b", Matrix<S>::Zero(1, dim));
    set.add(&gamma);
    set.add(&beta);
  }

  int apply(Tape<S>& t, int x) { return t.layer_norm(x, t.param(gamma), t.param(beta)); }
};

// Pre-norm self-attention + feed-forward block.
template <class S>
struct EncoderBlock {
  LayerNormLayer<S> ln1, ln2;
  LinearLayer<S> wq, wk, wv, wo, ff1, ff2;

  void init(const std::string& name, int dim, int ffn, Rng& rng, ParamSet<S>& set) {
    ln1.init(name + ".ln1", dim, set);
    wq.init(name + ".wq", dim, dim, rng, set);
    wk.init(name + ".wk", dim, dim, rng, set);
    wv.init(name + ".wv", dim, dim, rng, set);
    wo.init(name + ".wo", dim, dim, rng, set);
    ln2.init(name + ".ln2", dim, set);
    ff1.init(name + ".ff1", dim, ffn, rng, set);
    ff2.init(name + ".ff2", ffn, dim, rng, set);
  }

  int apply(Tape<S>& t, int x, int heads, int batch, int tokens,
            const std::vector<std::uint8_t>* key_valid, S dropout, Rng& rng) {
    int a = ln1.apply(t, x);
    int att = t.attention(wq.apply(t, a), wk.apply(t, a), wv.apply(t, a), heads, batch,
                          tokens, tokens, key_valid);
    att = t.dropout(wo.apply(t, att), dropout, rng);
    x = t.add(x, att);
    int f = ln2.apply(t, x);
    f = t.dropout(t.relu(ff1.apply(t, f)), dropout, rng);
    f = ff2.apply(t, f);
    return t.add(x, f);
  }
};

// Pre-norm cross-attention + feed-forward block; queries attend over a
// latent memory.
template <class S>
struct DecoderBlock {
  LayerNormLayer<S> ln1, ln2;
  LinearLayer<S> wq, wk, wv, wo, ff1, ff2;

  void init(const std::string& name, int dim, int ffn, Rng& rng, ParamSet<S>& set) {
    ln1.init(name + ".ln1", dim, set);
    wq.init(name + ".wq", dim, dim, rng, set);
    wk.init(name + ".wk", dim, dim, rng, set);
    wv.init(name + ".wv", dim, dim, rng, set);
    wo.init(name + ".wo", dim, dim, rng, set);
    ln2.init(name + ".ln2", dim, set);
    ff1.init(name + ".ff1", dim, ffn, rng, set);
    ff2.init(name + ".ff2", ffn, dim, rng, set);
  }

  int apply(Tape<S>& t, int x, int memory, int heads, int batch, int out_tokens,
            int mem_tokens, S dropout, Rng& rng) {
    int a = ln1.apply(t, x);
    int att = t.attention(wq.apply(t, a), wk.apply(t, memory), wv.apply(t, memory), heads,
                          batch, out_tokens, mem_tokens, nullptr);
    att = t.dropout(wo.apply(t, att), dropout, rng);
    x = t.add(x, att);
    int f = ln2.apply(t, x);
    f = t.dropout(t.relu(ff1.apply(t, f)), dropout, rng);
    f = ff2.apply(t, f);
    return t.add(x, f);
  }
};

// Encoder/decoder pair for one stream (or the whole flattened pose).
template <class S>
struct StreamNet {
  StreamId id = StreamId::All;
  int in_features = 0;
  int frames = 0;  // tokens fed to the encoder and produced by the decoder
  int latent_count = 0;
  int dim = 0;
  int heads = 1;
  int ffn = 0;

  LinearLayer<S> embed;
  Param<S> enc_queries;
  std::vector<EncoderBlock<S>> enc_blocks;
  LayerNormLayer<S> enc_final;
  LinearLayer<S> lat_proj;

  LinearLayer<S> dec_in;
  Param<S> dec_slot_emb;
  Param<S> dec_query_base;
  std::vector<DecoderBlock<S>> dec_blocks;
  LayerNormLayer<S> dec_final;
  LinearLayer<S> head;

  Matrix<S> pos_enc;  // frames x dim, fixed sinusoidal

  void init(const std::string& name, StreamId sid, int features, int n_frames, int latents,
            int d, int n_heads, int ffn_dim, int layers, int latent_dim, Rng& rng,
            ParamSet<S>& set) {
    id = sid;
    in_features = features;
    frames = n_frames;
    latent_count = latents;
    dim = d;
    heads = n_heads;
    ffn = ffn_dim;

    embed.init(name + ".embed", features, d, rng, set);
    Matrix<S> q(latents, d);
    for (int r = 0; r < latents; ++r)
      for (int c = 0; c < d; ++c) q(r, c) = S(rng.uniform(-0.1, 0.1));
    enc_queries = Param<S>(name + ".enc_queries", std::move(q));
    set.add(&enc_queries);
    enc_blocks.resize(std::size_t(layers));
    for (int l = 0; l < layers; ++l)
      enc_blocks[std::size_t(l)].init(name + ".enc" + std::to_string(l), d, ffn_dim, rng, set);
    enc_final.init(name + ".enc_final", d, set);
    lat_proj.init(name + ".lat_proj", d, latent_dim, rng, set);

    dec_in.init(name + ".dec_in", latent_dim, d, rng, set);
    Matrix<S> slot(latents, d);
    for (int r = 0; r < latents; ++r)
      for (int c = 0; c < d; ++c) slot(r, c) = S(rng.uniform(-0.1, 0.1));
    dec_slot_emb = Param<S>(name + ".dec_slot_emb", std::move(slot));
    set.add(&dec_slot_emb);
    dec_query_base = Param<S>(name + ".dec_query_base", Matrix<S>::Zero(1, d));
    set.add(&dec_query_base);
    dec_blocks.resize(std::size_t(layers));
    for (int l = 0; l < layers; ++l)
      dec_blocks[std::size_t(l)].init(name + ".dec" + std::to_string(l), d, ffn_dim, rng, set);
    dec_final.init(name + ".dec_final", d, set);
    head.init(name + ".head", d, features, rng, set);

    pos_enc.resize(n_frames, d);
    for (int t = 0; t < n_frames; ++t) {
      for (int c = 0; c < d; ++c) {
        const double rate = std::pow(10000.0, -double(c / 2 * 2) / double(d));
        pos_enc(t, c) = S(c % 2 == 0 ? std::sin(double(t) * rate) : std::cos(double(t) * rate));
      }
    }
  }

  // input: (batch*frames) x in_features constant node.
  int encode(Tape<S>& t, int input, int batch, const std::vector<std::uint8_t>* frame_valid,
             S dropout, Rng& rng) {
    int x = embed.apply(t, input);
    Matrix<S> pe(Eigen::Index(batch) * frames, dim);
    for (int b = 0; b < batch; ++b) pe.middleRows(Eigen::Index(b) * frames, frames) = pos_enc;
    x = t.add_constant(x, pe);
    x = t.dropout(x, dropout, rng);
    int seq = t.pack_sequences(x, t.param(enc_queries), batch, frames);
    const int tokens = frames + latent_count;

    // Query tokens are always valid attention keys.
    std::vector<std::uint8_t> mask;
    const std::vector<std::uint8_t>* mask_ptr = nullptr;
    if (frame_valid) {
      mask.resize(std::size_t(batch) * std::size_t(tokens), 1);
      for (int b = 0; b < batch; ++b)
        for (int f = 0; f < frames; ++f)
          mask[std::size_t(b) * std::size_t(tokens) + std::size_t(f)] =
              (*frame_valid)[std::size_t(b) * std::size_t(frames) + std::size_t(f)];
      mask_ptr = &mask;
    }
    for (auto& block : enc_blocks)
      seq = block.apply(t, seq, heads, batch, tokens, mask_ptr, dropout, rng);
    seq = enc_final.apply(t, seq);
    int lat = t.slice_blocks(seq, batch, tokens, frames, latent_count);
    return lat_proj.apply(t, lat);  // (batch*latent_count) x latent_dim
  }

  // latents: (batch*latent_count) x latent_dim node; returns
  // (batch*frames) x in_features.
  int decode(Tape<S>& t, int latents, int batch, S dropout, Rng& rng) {
    int mem = t.add(dec_in.apply(t, latents), t.tile_rows(t.param(dec_slot_emb), batch));
    Matrix<S> pe(Eigen::Index(batch) * frames, dim);
    for (int b = 0; b < batch; ++b) pe.middleRows(Eigen::Index(b) * frames, frames) = pos_enc;
    int queries = t.add_bias(t.constant(std::move(pe)), t.param(dec_query_base));
    for (auto& block : dec_blocks)
      queries = block.apply(t, queries, mem, heads, batch, frames, latent_count, dropout, rng);
    queries = dec_final.apply(t, queries);
    return head.apply(t, queries);
  }
};

// ---------------------------------------------------------------------------

template <class S>
struct Model {
  ModelVariant variant = ModelVariant::Baseline;
  ModelConfig cfg;
  CapacityPlan plan;
  PssConfig pss;
  bool pss_enabled = false;
  PhonoFeatureSchema schema;
  SkeletonLayout layout;
  std::uint64_t init_seed = 0;
  long long trained_steps = 0;

  std::vector<StreamNet<S>> nets;    // one per stream, or one for the whole pose
  std::vector<Codebook<S>> books;    // hand, movement, nmm, body -- or one
  std::array<int, kStreamCount> book_of_stream = {0, 0, 2, 3, 1, 1};
  std::vector<FeatureSlot> slots;
  ParamSet<S> params;

  int stream_dim = 0;  // derived width of the per-stream nets (multi-stream)
  int stream_ffn = 0;
  int stream_heads = 0;

  Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  bool multi_stream() const { return variant_multi_stream(variant); }
  int stream_count() const { return multi_stream() ? kStreamCount : 1; }
  int total_latents() const {
    return multi_stream() ? plan.total_stream_latents() : plan.baseline_latent_count;
  }
  int bottleneck_size() const { return total_latents() * cfg.latent_dim; }
};

// Closed-form parameter count of one StreamNet, used to derive per-stream
// widths that keep multi-stream variants within the baseline budget.
long long stream_net_param_count(int features, int latents, int dim, int ffn, int layers,
                                 int latent_dim);

struct StreamArch {
  int dim = 0;
  int heads = 0;
  int ffn = 0;
};

// Smallest (dim, ffn) grid point whose multi-stream total parameter count is
// closest to the baseline total.
StreamArch derive_stream_arch(const ModelConfig& cfg, const CapacityPlan& plan,
                              const SkeletonLayout& layout);

template <class S>
std::unique_ptr<Model<S>> build_model(ModelVariant variant, const CapacityPlan& plan,
                                      const std::optional<PssConfig>& pss,
                                      const ModelConfig& cfg, const PhonoFeatureSchema& schema,
                                      const SkeletonLayout& layout, std::uint64_t seed);

// What forward() needs per stream: stacked frame-major inputs and validity
// flags for padded movement frames.
template <class S>
struct StreamBatch {
  Matrix<S> input;                        // (batch*frames) x features
  std::vector<std::uint8_t> frame_valid;  // batch*frames; empty = all valid
};

template <class S>
struct BatchData {
  int batch = 0;
  std::vector<StreamBatch<S>> streams;        // size = model.stream_count()
  std::vector<const PhonoLabels*> labels;     // may be empty in eval mode
};

enum class RunMode { Train, Eval };

template <class S>
struct ForwardOutcome {
  int loss_node = -1;
  S total_loss = 0;
  S recon_total = 0;
  std::vector<S> recon_stream;          // per net
  std::vector<long long> recon_count;   // valid elements per net
  std::vector<int> recon_node;          // tape handles per net
  std::vector<S> book_codebook, book_commit, book_diversity, book_perplexity;
  std::vector<std::vector<int>> stream_indices;  // final indices per net
  std::vector<Matrix<S>> stream_zq;              // snapped vectors per net
  std::vector<Matrix<S>> book_encoder_sample;    // z_e rows per book
  long long forced_slots = 0;
  long long designated_slots = 0;
};

// Runs the full pass: encode -> quantize (+ optional forcing) -> straight
// through -> decode -> losses. In eval mode no Gumbel sampling, no forcing
// and no dropout are applied. gumbel_tau <= 0 selects hard quantization.
template <class S>
ForwardOutcome<S> model_forward(Model<S>& model, Tape<S>& tape, const BatchData<S>& batch,
                                RunMode mode, double gumbel_tau, double beta_commit,
                                double gamma_diversity, Rng& rng);

}  // namespace vqsign

#endif  // VQSIGN_MODEL_HPP
