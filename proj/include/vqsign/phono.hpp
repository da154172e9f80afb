// The 16 phonological features, their class counts and articulator stream
// assignments, plus per-sign label sets.
#ifndef VQSIGN_PHONO_HPP
#define VQSIGN_PHONO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "vqsign/pose.hpp"

namespace vqsign {

struct PhonoFeature {
  std::string name;
  int classes = 2;
  std::vector<StreamId> streams;

  bool operator==(const PhonoFeature&) const = default;
};

struct PhonoFeatureSchema {
  std::vector<PhonoFeature> features;

  int feature_count() const { return int(features.size()); }
  int index_of(const std::string& name) const;  // -1 when absent

  // Product of class counts, saturating at uint64 max.
  std::uint64_t vocabulary_capacity() const;

  void validate() const;  // 16 features, classes >= 2, >= 1 stream each

  static PhonoFeatureSchema default_schema();

  bool operator==(const PhonoFeatureSchema&) const = default;
};

// Class index per feature, in schema order.
using PhonoLabels = std::vector<int>;

struct SignRecord {
  PoseSequence pose;
  int gloss_id = 0;
  PhonoLabels labels;
  int signer_id = 0;
};

struct SplitSpec {
  std::vector<int> train;  // gloss ids, ascending
  std::vector<int> val;
  std::vector<int> test;

  void validate() const;  // pairwise disjoint
  bool operator==(const SplitSpec&) const = default;
};

// Feature name indices into the default schema, in declaration order.
namespace feat {
constexpr int kMajorLocation = 0;
constexpr int kMinorLocation = 1;
constexpr int kSelectedFingers = 2;
constexpr int kFlexion = 3;
constexpr int kFlexionChange = 4;
constexpr int kSpread = 5;
constexpr int kSpreadChange = 6;
constexpr int kThumbPosition = 7;
constexpr int kThumbContact = 8;
constexpr int kSignType = 9;
constexpr int kMovement = 10;
constexpr int kRepeatedMovement = 11;
constexpr int kWristTwist = 12;
constexpr int kNonManualSignal = 13;
constexpr int kMouthMorpheme = 14;
constexpr int kHeadMovement = 15;
}  // namespace feat

}  // namespace vqsign

#endif  // VQSIGN_PHONO_HPP
