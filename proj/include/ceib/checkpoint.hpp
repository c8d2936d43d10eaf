#ifndef CEIB_CHECKPOINT_HPP
#define CEIB_CHECKPOINT_HPP

#include <cstdint>
#include <memory>
#include <string>

#include "ceib/model.hpp"

namespace ceib {

// Checkpoints are a single JSON document: a format-version field, the model
// config, the outcome rescaling factors, the training seed, the hash of the
// experiment config that produced the model, and every parameter tensor as a
// named row-major array with its explicit shape. Loading reconstructs the
// model without any side information.
inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  std::unique_ptr<CEIBModel> model;
  std::uint64_t train_seed = 0;
  std::string config_hash;
};

void save_checkpoint(const std::string& path, const CEIBModel& model,
                     std::uint64_t train_seed, const std::string& config_hash);

// Throws ConfigError on version mismatch, missing tensors, or shape
// disagreement with the embedded config.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ceib

#endif
