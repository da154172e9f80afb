// Compositional synthetic sign corpus: vocabulary sampling, pose rendering
// and split construction.
#ifndef VQSIGN_CORPUS_HPP
#define VQSIGN_CORPUS_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "vqsign/phono.hpp"
#include "vqsign/pose.hpp"

namespace vqsign {

// n_signs distinct label combinations, sampled without replacement.
std::vector<std::pair<int, PhonoLabels>> build_vocabulary(const PhonoFeatureSchema& schema,
                                                          int n_signs, std::uint64_t seed);

// Renders one instance of a sign. Deterministic in all arguments; each
// feature class drives only keypoints read by the streams it is assigned to,
// so at noise_scale 0 changing a class leaves every other stream bit-equal.
PoseSequence render_sign(const PhonoFeatureSchema& schema, const PhonoLabels& labels,
                         int signer_id, double noise_scale, int frame_count,
                         std::uint64_t seed);

struct CorpusConfig {
  int n_signs = 600;
  int instances_per_sign = 10;
  int n_signers = 8;
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;
  double noise_scale = 0.01;
  int min_frames = 24;
  int max_frames = 48;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Corpus {
  SkeletonLayout layout;
  PhonoFeatureSchema schema;
  std::vector<SignRecord> records;
  SplitSpec split;
};

Corpus generate_corpus(const CorpusConfig& config);

}  // namespace vqsign

#endif  // VQSIGN_CORPUS_HPP
