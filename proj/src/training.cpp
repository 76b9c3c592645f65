#include "cmpnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cmpnet/error.hpp"
#include "cmpnet/random.hpp"

namespace cmpnet {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning rate must be a finite non-negative number");
  }
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  if (max_epochs == 0) throw ValidationError("max epochs must be positive");
  if (patience == 0) throw ValidationError("patience must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ValidationError("Adam betas must lie strictly between 0 and 1");
  }
  if (!(epsilon > 0.0)) throw ValidationError("Adam epsilon must be positive");
}

namespace {

Tensor<float> stack(const DataSet& data, std::span<const std::size_t> idx, bool targets) {
  const std::size_t s = data.config.frame_size;
  Tensor<float> out(Shape4{idx.size(), 1, s, s});
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const Grid2D& g = targets ? data.samples.at(idx[k]).target : data.samples.at(idx[k]).input;
    if (g.height != s || g.width != s) throw FormatError("sample frame size mismatch");
    std::copy(g.values.begin(), g.values.end(), out.data() + k * s * s);
  }
  return out;
}

}  // namespace

Tensor<float> stack_inputs(const DataSet& data, std::span<const std::size_t> idx) {
  return stack(data, idx, false);
}

Tensor<float> stack_targets(const DataSet& data, std::span<const std::size_t> idx) {
  return stack(data, idx, true);
}

double evaluate_loss(const UNet<float>& net, const DataSet& data,
                     std::span<const std::size_t> idx, std::size_t batch_size) {
  if (idx.empty()) throw ValidationError("cannot evaluate loss on an empty sample set");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    auto batch = idx.subspan(start, std::min(batch_size, idx.size() - start));
    const Tensor<float> pred = net.predict(stack_inputs(data, batch));
    const Tensor<float> truth = stack_targets(data, batch);
    for (std::size_t i = 0; i < pred.numel(); ++i) {
      const double d = static_cast<double>(pred[i]) - static_cast<double>(truth[i]);
      sum += d * d;
    }
    count += pred.numel();
  }
  return sum / static_cast<double>(count);
}

double train_step(ModelState& model, const Tensor<float>& inputs, const Tensor<float>& targets,
                  const TrainConfig& cfg) {
  model.net.zero_grad();
  Tape<float> tape;
  const Var x = tape.constant_ref(inputs);
  const Var y = tape.constant_ref(targets);
  const Var loss = tape.mse_loss(model.net.forward(tape, x), y);
  const double value = tape.value(loss)[0];
  if (!std::isfinite(value)) throw NumericalError("non-finite training loss");
  tape.backward(loss);
  if (cfg.optimizer == OptimizerKind::kAdam) {
    if (!model.adam) model.adam = make_adam_state(model.net.parameters());
    adam_step(model.net.parameters(), *model.adam,
              AdamConfig{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon});
  } else {
    sgd_step(model.net.parameters(), cfg.learning_rate);
  }
  return value;
}

TrainResult train(const DataSet& data, const ModelState& initial, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.config.frame_size % (std::size_t{1} << initial.config().depth) != 0) {
    throw ValidationError("dataset frame size is not divisible by 2^depth");
  }
  const std::vector<std::size_t> train_idx = data.indices(Split::kTrain);
  const std::vector<std::size_t> test_idx = data.indices(Split::kTest);
  if (train_idx.empty() || test_idx.empty()) {
    throw ValidationError("training needs at least one train and one test sample");
  }

  ModelState model = initial;
  model.norm = data.norm;
  if (cfg.optimizer == OptimizerKind::kAdam && !model.adam) {
    model.adam = make_adam_state(model.net.parameters());
  }
  TrainResult result{model, {}, 0};
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order = train_idx;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::span<const std::size_t> batch(order.data() + start,
                                               std::min(cfg.batch_size, order.size() - start));
      double value = 0.0;
      try {
        value = train_step(model, stack_inputs(data, batch), stack_targets(data, batch), cfg);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                             ", batch starting at " + std::to_string(start));
      }
      weighted += value * static_cast<double>(batch.size());
    }

    EpochRecord rec{epoch, weighted / static_cast<double>(order.size()),
                    evaluate_loss(model.net, data, test_idx, cfg.batch_size)};
    if (!std::isfinite(rec.test_loss)) {
      throw NumericalError("non-finite test loss at epoch " + std::to_string(epoch));
    }
    model.epoch = static_cast<std::uint32_t>(epoch);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.test_loss < best_loss) {
      best_loss = rec.test_loss;
      result.best = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  for (auto& p : result.best.net.parameters()) p.grad = Tensor<float>();
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_loss,test_loss\n";
  for (const EpochRecord& r : history) {
    out << r.epoch << ',' << r.train_loss << ',' << r.test_loss << '\n';
  }
  return out.str();
}

}  // namespace cmpnet
