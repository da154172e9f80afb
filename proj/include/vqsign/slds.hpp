// The .slds dataset file format: one JSON header line (format version,
// skeleton layout, feature schema, split), then one record per line with
// coordinates printed in shortest round-trip form.
#ifndef VQSIGN_SLDS_HPP
#define VQSIGN_SLDS_HPP

#include <string>

#include "vqsign/corpus.hpp"

namespace vqsign {

constexpr int kSldsFormatVersion = 1;

void write_dataset(const Corpus& corpus, const std::string& path);
Corpus read_dataset(const std::string& path);

}  // namespace vqsign

#endif  // VQSIGN_SLDS_HPP
