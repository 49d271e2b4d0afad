#include "mfhg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "mfhg/errors.hpp"

namespace mfhg {

namespace {

void validate_combination(Head head, LossKind loss) {
  const bool seg = head == Head::Seg;
  const bool seg_loss = loss == LossKind::Bce;
  if (seg != seg_loss)
    throw std::invalid_argument(
        "train: loss '" + loss_kind_name(loss) + "' is incompatible with the " +
        (seg ? "seg" : "reg") + " head");
}

}  // namespace

LossValue example_loss(const Parameters& params, const TrainingExample& ex,
                       LossKind loss, double alpha, ActivationCache* cache) {
  const Tensor out = forward(params, ex.pair, cache);
  switch (loss) {
    case LossKind::Bce: return bce_loss(out, ex.target);
    case LossKind::Nps: return regression_loss(out, ex.truth, alpha);
    case LossKind::L1: return l1_loss(out, ex.truth);
    case LossKind::Mse: return mse_loss(out, ex.truth);
  }
  throw std::invalid_argument("example_loss: unknown loss kind");
}

TrainingReport train(Parameters& params,
                     const std::vector<SegmentedSample>& samples,
                     const SynthesisConfig& synth, LossKind loss,
                     const TrainSchedule& schedule) {
  if (samples.empty()) throw std::invalid_argument("train: empty dataset");
  if (schedule.batch_size < 1)
    throw std::invalid_argument("train: batch_size must be positive");
  validate_combination(params.config.head, loss);

  const int n_threads =
      schedule.threads > 0
          ? schedule.threads
          : std::max(1u, std::thread::hardware_concurrency());

  TrainingReport report;
  AdamState adam = AdamState::create(params, schedule.lr);
  Rng shuffle_rng(schedule.seed);
  std::uint64_t example_counter = 0;
  bool stopped = false;

  auto save = [&](const std::string& name) {
    if (schedule.checkpoint_dir.empty()) return;
    std::filesystem::create_directories(schedule.checkpoint_dir);
    const std::string path = schedule.checkpoint_dir + "/" + name;
    save_checkpoint(params, path);
    report.checkpoints.push_back(path);
  };

  for (int epoch = 0; epoch < schedule.epochs && !stopped; ++epoch) {
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_sum = 0.0;
    long epoch_batches = 0;
    for (std::size_t start = 0; start < order.size() && !stopped;
         start += schedule.batch_size) {
      const std::size_t stop =
          std::min(order.size(), start + schedule.batch_size);
      std::vector<TrainingExample> drawn;
      drawn.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        // Independent stream per example keeps synthesis order-free.
        Rng ex_rng(synth.seed ^ example_counter);
        ++example_counter;
        TrainingExample ex =
            synthesize_example(samples[order[i]], synth, ex_rng);
        drawn.push_back(augment(ex, synth, ex_rng));
      }
      const std::vector<TrainingExample> batch =
          schedule.commutative ? make_commutative_batch(drawn)
                               : std::move(drawn);

      std::vector<Gradients> entry_grads(batch.size());
      std::vector<double> entry_loss(batch.size(), 0.0);
      auto worker = [&](std::size_t begin, std::size_t end) {
        for (std::size_t e = begin; e < end; ++e) {
          ActivationCache cache;
          const LossValue lv =
              example_loss(params, batch[e], loss, schedule.alpha, &cache);
          entry_loss[e] = lv.value;
          entry_grads[e] = backward(params, cache, lv.gradient);
        }
      };
      const std::size_t workers =
          std::min<std::size_t>(n_threads, batch.size());
      if (workers <= 1) {
        worker(0, batch.size());
      } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (batch.size() + workers - 1) / workers;
        for (std::size_t t = 0; t < workers; ++t) {
          const std::size_t begin = t * chunk;
          const std::size_t end = std::min(batch.size(), begin + chunk);
          if (begin < end) pool.emplace_back(worker, begin, end);
        }
        for (std::thread& t : pool) t.join();
      }

      // Reduce in batch order so results do not depend on thread timing.
      Gradients total = zero_gradients(params);
      double mean_loss = 0.0;
      const double scale = 1.0 / static_cast<double>(batch.size());
      for (std::size_t e = 0; e < batch.size(); ++e) {
        mean_loss += entry_loss[e] * scale;
        for (std::size_t l = 0; l < total.weights.size(); ++l) {
          const auto& gw = entry_grads[e].weights[l];
          const auto& gb = entry_grads[e].biases[l];
          for (std::size_t i = 0; i < gw.size(); ++i)
            total.weights[l][i] += gw[i] * scale;
          for (std::size_t i = 0; i < gb.size(); ++i)
            total.biases[l][i] += gb[i] * scale;
        }
      }
      if (!std::isfinite(mean_loss))
        throw NumericalError("training aborted: non-finite loss at epoch " +
                             std::to_string(epoch) + ", batch " +
                             std::to_string(epoch_batches));

      adam_step(params, total, adam);
      report.iteration_loss.push_back(mean_loss);
      report.iterations += 1;
      epoch_sum += mean_loss;
      epoch_batches += 1;
      if (schedule.max_iterations > 0 &&
          report.iterations >= schedule.max_iterations)
        stopped = true;
    }
    if (epoch_batches > 0)
      report.epoch_loss.push_back(epoch_sum / epoch_batches);
    if (schedule.checkpoint_every > 0 &&
        (epoch + 1) % schedule.checkpoint_every == 0 && !stopped) {
      char name[64];
      std::snprintf(name, sizeof(name), "epoch_%04d.mfhg", epoch + 1);
      save(name);
    }
  }
  return report;
}

}  // namespace mfhg
