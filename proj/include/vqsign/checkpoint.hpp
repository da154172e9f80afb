// Model checkpoints: one archive holding every weight matrix, the codebooks
// with usage counts, the capacity plan, PSS assignment, variant tag and the
// config snapshot. Serialization is deterministic, so equal models produce
// byte-identical files.
#ifndef VQSIGN_CHECKPOINT_HPP
#define VQSIGN_CHECKPOINT_HPP

#include <memory>
#include <string>

#include "vqsign/model.hpp"

namespace vqsign {

constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::unique_ptr<Model<float>> model;
  long long adam_step = 0;
};

void save_checkpoint(const Model<float>& model, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace vqsign

#endif  // VQSIGN_CHECKPOINT_HPP
