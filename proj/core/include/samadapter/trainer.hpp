#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "samadapter/data.hpp"
#include "samadapter/losses.hpp"
#include "samadapter/metrics.hpp"
#include "samadapter/model.hpp"
#include "samadapter/optimizer.hpp"

namespace samadapter {

struct TrainConfig {
  Task task = Task::camouflage;
  int epochs = 20;
  double lr0 = 2e-4;
  AdamWConfig optimizer;
  int batch_size = 2;
  std::uint64_t seed = 0;
  bool deterministic = true;
  LossConfig loss;
  bool hflip = false;
  /// Stops after this many steps when > 0; the schedule then spans
  /// min(max_steps, epochs * steps_per_epoch).
  long long max_steps = 0;

  /// Task defaults: 20 / 90 / 120 epochs, loss per task.
  static TrainConfig for_task(Task task);
  void validate() const;
};

/// lr0 * (1 + cos(pi * step / total)) / 2 for 0 <= step <= total.
double cosine_lr(long long step, long long total_steps, double lr0);

long long steps_per_epoch(std::size_t num_samples, int batch_size);

/// Throws unless the optimizer holds exactly the model's trainable set and
/// nothing from the encoder.
void audit_parameters(SamAdapterModel& model, const AdamW& optimizer);

/// Predicts every record and scores it against its mask at the mask's
/// native size.
MetricReport evaluate_records(const SamAdapterModel& model, const std::vector<SampleRecord>& records, Task task,
                              int resize_to);

struct CheckpointInfo {
  long long step = 0;
  long long total_steps = 0;
  double best_metric = 0.0;
  bool has_best = false;
  std::string encoder_checksum;
  /// Effective run config the checkpoint was produced with (JSON text).
  std::string config_snapshot;
};

class Trainer {
 public:
  Trainer(SamAdapterModel& model, TrainConfig config, long long total_steps);

  /// One optimizer step on the batch; returns the batch-mean loss measured
  /// before the update.
  double train_step(const std::vector<Sample>& batch);
  double current_lr() const { return cosine_lr(step_, total_steps_, config_.lr0); }

  long long step() const { return step_; }
  long long total_steps() const { return total_steps_; }
  const TrainConfig& config() const { return config_; }
  SamAdapterModel& model() { return model_; }
  AdamW& optimizer() { return optimizer_; }

  /// Trainable params (f64), optimizer moments and metadata. No encoder
  /// weights, only the encoder checksum.
  void save_checkpoint(const std::filesystem::path& path, const CheckpointInfo& extra) const;
  /// Restores params, optimizer state and step counter.
  CheckpointInfo load_checkpoint(const std::filesystem::path& path);

 private:
  SamAdapterModel& model_;
  TrainConfig config_;
  AdamW optimizer_;
  long long step_ = 0;
  long long total_steps_ = 0;
};

/// Reads the metadata of a checkpoint without touching a model.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);
/// Copies trainable tensors from a checkpoint into the model. Throws
/// LoadError when the checkpoint's encoder checksum does not match.
CheckpointInfo load_model_checkpoint(SamAdapterModel& model, const std::filesystem::path& path);

struct FitOptions {
  std::filesystem::path output_dir;
  std::string config_snapshot;
  std::optional<std::filesystem::path> resume_from;
  bool force = false;
  int resize_to = 64;
  /// Pause once the step counter reaches this value (0 = run to the end).
  /// The schedule length is unaffected, so a later resume continues it.
  long long stop_after = 0;
};

struct FitResult {
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  std::filesystem::path log_path;
  std::vector<double> step_losses;
  std::vector<MetricReport> history;
  std::string encoder_checksum_before;
  std::string encoder_checksum_after;
};

/// Runs the training loop, evaluating on eval_records after every epoch and
/// writing last.ckpt, best.ckpt and train_log.jsonl under output_dir.
FitResult fit(const TrainConfig& config, const DatasetManifest& train, const std::vector<SampleRecord>& eval_records,
              SamAdapterModel& model, const FitOptions& options);

}  // namespace samadapter
