#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "cmpnet/model.hpp"
#include "cmpnet/optimizer.hpp"
#include "cmpnet/preprocess.hpp"

namespace cmpnet {

enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 150;
  std::size_t patience = 20;  // epochs without test improvement before stopping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;  // minibatch order
  OptimizerKind optimizer = OptimizerKind::kAdam;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // sample-weighted mean of minibatch MSE
  double test_loss = 0.0;   // MSE over every test pixel
};

struct TrainResult {
  ModelState best;  // weights of the epoch with the lowest test loss
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

/// One minibatch update: zero gradients, forward, MSE, backward, optimizer
/// step. Returns the batch loss before the update.
double train_step(ModelState& model, const Tensor<float>& inputs, const Tensor<float>& targets,
                  const TrainConfig& cfg);

/// Called after each epoch; useful for progress logging.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch training with MSE loss and early stopping on test loss. The
/// result is a pure function of the arguments.
TrainResult train(const DataSet& data, const ModelState& initial, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Builds an [N,1,S,S] batch from the selected samples' inputs or targets.
Tensor<float> stack_inputs(const DataSet& data, std::span<const std::size_t> idx);
Tensor<float> stack_targets(const DataSet& data, std::span<const std::size_t> idx);

/// MSE over every pixel of the selected samples, evaluated in batches.
double evaluate_loss(const UNet<float>& net, const DataSet& data,
                     std::span<const std::size_t> idx, std::size_t batch_size);

/// CSV with header "epoch,train_loss,test_loss", 17 significant digits.
std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace cmpnet
