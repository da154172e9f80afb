#include "vqsign/phono.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace vqsign {

int PhonoFeatureSchema::index_of(const std::string& name) const {
  for (int i = 0; i < feature_count(); ++i)
    if (features[std::size_t(i)].name == name) return i;
  return -1;
}

std::uint64_t PhonoFeatureSchema::vocabulary_capacity() const {
  std::uint64_t capacity = 1;
  for (const auto& f : features) {
    const std::uint64_t c = std::uint64_t(f.classes);
    if (capacity > std::numeric_limits<std::uint64_t>::max() / c)
      return std::numeric_limits<std::uint64_t>::max();
    capacity *= c;
  }
  return capacity;
}

void PhonoFeatureSchema::validate() const {
  if (features.size() != 16)
    throw std::invalid_argument("phonological schema must have exactly 16 features");
  for (const auto& f : features) {
    if (f.classes < 2)
      throw std::invalid_argument("feature " + f.name + " needs at least 2 classes");
    if (f.streams.empty())
      throw std::invalid_argument("feature " + f.name + " is not assigned to any stream");
    for (StreamId s : f.streams)
      if (s == StreamId::All)
        throw std::invalid_argument("feature " + f.name + " assigned to sentinel stream");
  }
  for (std::size_t i = 0; i < features.size(); ++i)
    for (std::size_t j = i + 1; j < features.size(); ++j)
      if (features[i].name == features[j].name)
        throw std::invalid_argument("duplicate feature name " + features[i].name);
}

PhonoFeatureSchema PhonoFeatureSchema::default_schema() {
  using S = StreamId;
  PhonoFeatureSchema schema;
  schema.features = {
      {"Major Location", 5, {S::BODY}},
      {"Minor Location", 4, {S::BODY}},
      {"Selected Fingers", 8, {S::LH, S::RH}},
      {"Flexion", 4, {S::LH, S::RH}},
      {"Flexion Change", 2, {S::MOVL, S::MOVR}},
      {"Spread", 2, {S::LH, S::RH}},
      {"Spread Change", 2, {S::MOVL, S::MOVR}},
      {"Thumb Position", 2, {S::LH, S::RH}},
      {"Thumb Contact", 2, {S::LH, S::RH}},
      {"Sign Type", 4, {S::LH, S::RH}},
      {"Movement", 6, {S::MOVL, S::MOVR}},
      {"Repeated Movement", 2, {S::MOVL, S::MOVR}},
      {"Wrist Twist", 2, {S::MOVL, S::MOVR}},
      {"Non-Manual Signal", 3, {S::NMM}},
      {"Mouth Morpheme", 3, {S::NMM}},
      {"Head Movement", 3, {S::NMM}},
  };
  schema.validate();
  return schema;
}

void SplitSpec::validate() const {
  auto sorted = [](std::vector<int> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  const std::vector<int> a = sorted(train), b = sorted(val), c = sorted(test);
  auto disjoint = [](const std::vector<int>& x, const std::vector<int>& y) {
    std::vector<int> inter;
    std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(inter));
    return inter.empty();
  };
  if (!disjoint(a, b) || !disjoint(a, c) || !disjoint(b, c))
    throw std::invalid_argument("split gloss sets are not pairwise disjoint");
}

}  // namespace vqsign
