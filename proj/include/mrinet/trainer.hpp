#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mrinet/dataset.hpp"
#include "mrinet/model_zoo.hpp"
#include "mrinet/network.hpp"

namespace mrinet {

enum class Arm { PN, PM, MN, PMN };
enum class ModelKind { alexnet, alexnet_opt_lrn, alexnet_opt_bn };

std::string_view to_string(Arm arm);
std::string_view to_string(ModelKind model);
std::optional<Arm> parse_arm(std::string_view s);
std::optional<ModelKind> parse_model(std::string_view s);

// Classes of an arm in logit order (PN -> {PD, Normal}, PMN -> {PD, MSA, Normal}).
std::vector<ClassLabel> arm_classes(Arm arm);

struct TrainConfig {
  // 0.01 let the un-normalized baseline diverge on some seeds.
  double learning_rate = 0.0075;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 32;
  int epochs = 30;
  std::uint64_t seed = 0;
  Arm arm = Arm::PMN;
  ModelKind model = ModelKind::alexnet;
  Scale scale = Scale::mini;

  void check() const;
  bool operator==(const TrainConfig&) const = default;
};

// key=value lines; stable across runs, used for the checkpoint hash.
std::string describe(const TrainConfig& cfg);
// Hash of everything except the epoch count, so a run can be extended.
std::uint64_t config_hash(const TrainConfig& cfg);

NetworkSpec build_model(const TrainConfig& cfg);

struct MetricsRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;  // percent
  bool operator==(const MetricsRecord&) const = default;
};

// Highest val_acc, then lower val_loss, then earlier epoch.
std::optional<std::size_t> best_index(const std::vector<MetricsRecord>& history);

// Header, one row per epoch (6 significant digits) and a footer row
// "best,<train_loss>,<val_loss>,<val_acc>" holding the best epoch's values
// (fields empty when the history is empty).
void export_metrics_csv(const std::vector<MetricsRecord>& history,
                        const std::filesystem::path& path);
struct MetricsCsv {
  std::vector<MetricsRecord> history;
  std::optional<MetricsRecord> best;  // epoch field is -1
};
MetricsCsv read_metrics_csv(const std::filesystem::path& path);

// Images as [N, 1, H, W] scaled to [0, 1]; labels are arm-class indices.
struct LabeledSet {
  Tensor images;
  std::vector<int> labels;
  std::vector<std::string> paths;
  std::size_t size() const { return labels.size(); }
};

// Throws DataError naming the first manifest row whose label is outside the arm.
void check_arm_closure(const DatasetManifest& manifest, Arm arm);

// Rows of one split, in manifest order. Image size must match input_shape.
LabeledSet load_split(const DatasetManifest& manifest, Split split, Arm arm,
                      const Shape& input_shape);

// Zero tensors for every trainable parameter.
WeightStore zero_velocity(const NetworkSpec& spec);

// v <- momentum * v - lr * (g + weight_decay * w); w <- w + v, for every
// tensor present in grads.
void sgd_step(WeightStore& params, const GradStore& grads, WeightStore& velocity,
              const TrainConfig& cfg);

// Batch index lists for one epoch: seeded shuffle of [0, n), chunks of
// batch_size, a trailing chunk of one sample merged into the previous chunk.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size,
                                                    std::uint64_t seed, int epoch);

Tensor gather(const Tensor& images, const std::vector<std::size_t>& idx);

// One pass over `train`. Returns the mean of the batch losses.
double train_epoch(const NetworkSpec& spec, WeightStore& weights, WeightStore& velocity,
                   const LabeledSet& train, const TrainConfig& cfg, int epoch);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;  // percent
};

// Infer-mode pass in fixed-size chunks; loss is the mean cross-entropy.
EvalResult evaluate(const NetworkSpec& spec, const WeightStore& weights, const LabeledSet& data);

struct Checkpoint {
  TrainConfig config;
  std::uint64_t hash = 0;
  int epoch = 0;
  WeightStore weights;
  WeightStore velocity;
  std::vector<MetricsRecord> history;
  // Best-epoch weights seen so far; lets a resumed run keep its selection.
  // Shuffle order derives from (seed, epoch), so no generator state is stored.
  WeightStore best_weights;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct FitOptions {
  // Continue from this state (epochs after ckpt.epoch are run).
  const Checkpoint* resume = nullptr;
  // Stop after this epoch, as if interrupted (0 = run to cfg.epochs).
  int stop_after = 0;
  std::function<void(const MetricsRecord&)> on_epoch;
};

struct FitResult {
  std::vector<MetricsRecord> history;
  Checkpoint best;  // weights of the best epoch (initial weights when no epochs ran)
  Checkpoint last;  // state after the final epoch that ran, usable for resume
};

FitResult fit(const TrainConfig& cfg, const LabeledSet& train, const LabeledSet& val,
              const FitOptions& options = {});
// Loads the train and val splits after checking arm closure over all rows.
FitResult fit(const TrainConfig& cfg, const DatasetManifest& manifest,
              const FitOptions& options = {});

}  // namespace mrinet
