#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mcevit/data.hpp"
#include "mcevit/fusion.hpp"

namespace mcevit {

struct TrainConfig {
  int batch_size = 16;
  int epochs = 50;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::string checkpoint_dir;  // best checkpoint written here when non-empty
  bool verbose = true;

  void validate() const;
};

struct EpochStats {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;  // 0-based, first epoch attaining the best val accuracy
};

// Seeded per-epoch shuffling, mean-per-batch crossentropy, Adam updates.
// In frozen mode branch features are extracted once and only the head
// trains; in end_to_end mode gradients flow through both encoders. The
// model state returned is the best-validation-accuracy checkpoint.
// Throws DivergenceError when the loss turns non-finite.
std::pair<FusionModel, TrainLog> train(FusionModel model, const std::vector<LabeledImage>& items,
                                       const DatasetSplit& split, const TrainConfig& cfg);

void write_train_log_csv(const TrainLog& log, const std::string& path);

}  // namespace mcevit
