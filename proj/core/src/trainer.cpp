#include "samadapter/trainer.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <numeric>
#include <set>

#include "samadapter/error.hpp"

namespace samadapter {

using json = nlohmann::ordered_json;

TrainConfig TrainConfig::for_task(Task task) {
  TrainConfig c;
  c.task = task;
  switch (task) {
    case Task::camouflage: c.epochs = 20; break;
    case Task::shadow: c.epochs = 90; break;
    case Task::polyp: c.epochs = 120; break;
  }
  c.loss = LossConfig::for_task(task);
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs", "must be >= 1, got " + std::to_string(epochs));
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ConfigError("train.lr0", "must be a finite value > 0");
  if (batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
  if (max_steps < 0) throw ConfigError("train.max_steps", "must be >= 0");
  optimizer.validate();
  loss.validate();
}

double cosine_lr(long long step, long long total_steps, double lr0) {
  if (total_steps < 1) throw ValidationError("cosine_lr: total_steps must be >= 1");
  if (step < 0 || step > total_steps) {
    throw ValidationError("cosine_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) +
                          "]");
  }
  if (step == 0) return lr0;
  if (step == total_steps) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

long long steps_per_epoch(std::size_t num_samples, int batch_size) {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  return static_cast<long long>((num_samples + static_cast<std::size_t>(batch_size) - 1) /
                                static_cast<std::size_t>(batch_size));
}

void audit_parameters(SamAdapterModel& model, const AdamW& optimizer) {
  std::set<const Param*> encoder_params;
  model.encoder().visit([&](Param& p) {
    if (p.trainable) throw TrainingError("encoder parameter marked trainable: " + p.name, {});
    encoder_params.insert(&p);
  });
  std::set<const Param*> expected;
  for (Param* p : model.trainable_parameters()) expected.insert(p);
  std::set<const Param*> actual(optimizer.params().begin(), optimizer.params().end());
  for (const Param* p : actual) {
    if (encoder_params.contains(p)) throw TrainingError("optimizer holds encoder parameter " + p->name, {});
  }
  if (actual != expected || actual.size() != optimizer.params().size()) {
    throw TrainingError("optimizer parameter set differs from the model's trainable set", {});
  }
}

MetricReport evaluate_records(const SamAdapterModel& model, const std::vector<SampleRecord>& records, Task task,
                              int resize_to) {
  std::vector<ImageMetrics> per_image;
  per_image.reserve(records.size());
  for (const SampleRecord& r : records) {
    const Sample s = load_sample(r, resize_to);
    const BinaryMask gt = read_mask(r.mask_path);
    SoftPrediction pred = model.forward(s.image);
    if (pred.values.rows() != gt.values.rows() || pred.values.cols() != gt.values.cols()) {
      pred.values = resize_bilinear(pred.values, static_cast<int>(gt.values.rows()), static_cast<int>(gt.values.cols()));
    }
    per_image.push_back(evaluate_image(r.stem, pred, gt));
  }
  return aggregate_metrics(to_string(task), std::move(per_image));
}

Trainer::Trainer(SamAdapterModel& model, TrainConfig config, long long total_steps)
    : model_(model),
      config_(std::move(config)),
      optimizer_(model.trainable_parameters(), config_.optimizer),
      total_steps_(total_steps) {
  config_.validate();
  if (total_steps_ < 1) throw ValidationError("total_steps must be >= 1");
  audit_parameters(model_, optimizer_);
}

double Trainer::train_step(const std::vector<Sample>& batch) {
  if (batch.empty()) throw ValidationError("empty batch");
  if (step_ >= total_steps_) throw TrainingError("schedule exhausted at step " + std::to_string(step_), {});
  model_.zero_grad();
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  ForwardCache cache;
  for (const Sample& s : batch) {
    const SoftPrediction pred = model_.forward(s.image, &cache);
    LossValue lv = task_loss_grad(config_.loss, pred, s.mask);
    if (!std::isfinite(lv.value) || !lv.grad.allFinite()) {
      std::vector<std::string> stems;
      for (const Sample& b : batch) stems.push_back(b.stem);
      std::string msg = "non-finite loss at step " + std::to_string(step_) + " on batch [";
      for (std::size_t i = 0; i < stems.size(); ++i) msg += (i ? ", " : "") + stems[i];
      throw TrainingError(msg + "]", stems);
    }
    total += lv.value;
    lv.grad *= scale;
    model_.backward(lv.grad, cache);
  }
  optimizer_.step(current_lr());
  ++step_;
  return total * scale;
}

namespace {

std::string metadata_json(const CheckpointInfo& info, bool adapters_enabled) {
  json j;
  j["format"] = "samadapter-checkpoint";
  j["step"] = info.step;
  j["total_steps"] = info.total_steps;
  j["has_best"] = info.has_best;
  j["best_metric"] = info.best_metric;
  j["adapters_enabled"] = adapters_enabled;
  j["encoder_checksum"] = info.encoder_checksum;
  j["config"] = info.config_snapshot;
  return j.dump(2);
}

CheckpointInfo parse_metadata(const TensorArchive& archive, const std::filesystem::path& path) {
  CheckpointInfo info;
  try {
    const json j = json::parse(archive.metadata);
    if (j.value("format", "") != "samadapter-checkpoint") throw IoError(path, "not a training checkpoint");
    info.step = j.at("step").get<long long>();
    info.total_steps = j.at("total_steps").get<long long>();
    info.has_best = j.at("has_best").get<bool>();
    info.best_metric = j.at("best_metric").get<double>();
    info.encoder_checksum = j.at("encoder_checksum").get<std::string>();
    info.config_snapshot = j.at("config").get<std::string>();
  } catch (const json::exception& e) {
    throw IoError(path, std::string("bad checkpoint metadata: ") + e.what());
  }
  return info;
}

void restore_params(const std::vector<Param*>& params, const TensorArchive& archive) {
  std::vector<std::string> missing, mismatched;
  for (Param* p : params) {
    if (!archive.contains(p->name)) {
      missing.push_back(p->name);
      continue;
    }
    if (!assign_param(*p, archive.get(p->name))) mismatched.push_back(p->name);
  }
  if (!mismatched.empty()) throw LoadError("checkpoint tensor shape mismatch", mismatched);
  if (!missing.empty()) throw LoadError("checkpoint is missing trainable tensors", missing);
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& path, const CheckpointInfo& extra) const {
  TensorArchive archive;
  for (Param* p : const_cast<SamAdapterModel&>(model_).trainable_parameters()) archive.put(*p, DType::f64);
  optimizer_.save_state(archive);
  CheckpointInfo info = extra;
  info.step = step_;
  info.total_steps = total_steps_;
  info.encoder_checksum = model_.encoder().checksum();
  archive.metadata = metadata_json(info, model_.adapters_enabled());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  archive.save(tmp);
  std::filesystem::rename(tmp, path);
}

CheckpointInfo Trainer::load_checkpoint(const std::filesystem::path& path) {
  const TensorArchive archive = TensorArchive::load(path);
  CheckpointInfo info = parse_metadata(archive, path);
  if (info.encoder_checksum != model_.encoder().checksum()) {
    throw LoadError("frozen encoder checksum mismatch: checkpoint " + info.encoder_checksum + ", model " +
                        model_.encoder().checksum(),
                    {});
  }
  if (info.total_steps != total_steps_) {
    throw TrainingError("checkpoint schedule spans " + std::to_string(info.total_steps) + " steps, run spans " +
                            std::to_string(total_steps_),
                        {});
  }
  restore_params(model_.trainable_parameters(), archive);
  optimizer_.load_state(archive, info.step);
  step_ = info.step;
  return info;
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  return parse_metadata(TensorArchive::load(path), path);
}

CheckpointInfo load_model_checkpoint(SamAdapterModel& model, const std::filesystem::path& path) {
  const TensorArchive archive = TensorArchive::load(path);
  CheckpointInfo info = parse_metadata(archive, path);
  if (info.encoder_checksum != model.encoder().checksum()) {
    throw LoadError("frozen encoder checksum mismatch: checkpoint " + info.encoder_checksum + ", model " +
                        model.encoder().checksum(),
                    {});
  }
  restore_params(model.trainable_parameters(), archive);
  return info;
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, long long epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed * 1000003ull + static_cast<std::uint64_t>(epoch) + 1);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

json report_record(const MetricReport& r, long long epoch, long long step, double primary) {
  json j;
  j["type"] = "eval";
  j["epoch"] = epoch;
  j["step"] = step;
  j["s_alpha"] = r.s_alpha;
  j["e_phi"] = r.e_phi;
  j["f_beta_w"] = r.f_beta_w;
  j["mae"] = r.mae;
  j["ber"] = r.ber;
  j["mdice"] = r.mdice;
  j["miou"] = r.miou;
  j["primary"] = primary;
  return j;
}

}  // namespace

FitResult fit(const TrainConfig& config, const DatasetManifest& train, const std::vector<SampleRecord>& eval_records,
              SamAdapterModel& model, const FitOptions& options) {
  config.validate();
  if (train.records.empty()) throw ValidationError("training manifest is empty");
  const long long per_epoch = steps_per_epoch(train.records.size(), config.batch_size);
  long long total = per_epoch * config.epochs;
  if (config.max_steps > 0) total = std::min(total, config.max_steps);

  std::filesystem::create_directories(options.output_dir);
  FitResult result;
  result.last_checkpoint = options.output_dir / "last.ckpt";
  result.best_checkpoint = options.output_dir / "best.ckpt";
  result.log_path = options.output_dir / "train_log.jsonl";
  result.encoder_checksum_before = model.encoder().checksum();

  Trainer trainer(model, config, total);
  CheckpointInfo best;
  std::ios::openmode mode = std::ios::out | std::ios::trunc;
  if (options.resume_from) {
    const CheckpointInfo prior = read_checkpoint_info(*options.resume_from);
    if (prior.config_snapshot != options.config_snapshot) {
      if (!options.force) {
        throw TrainingError("config snapshot of " + options.resume_from->string() +
                                " differs from the current run; pass --force to resume anyway",
                            {});
      }
      spdlog::warn("resuming with a different config snapshot (--force)");
    }
    best = trainer.load_checkpoint(*options.resume_from);
    best.config_snapshot = options.config_snapshot;
    mode = std::ios::out | std::ios::app;
    spdlog::info("resumed at step {} (lr {:.6g})", trainer.step(), trainer.current_lr());
  }
  best.config_snapshot = options.config_snapshot;

  std::ofstream log(result.log_path, mode);
  if (!log) throw IoError(result.log_path, "cannot open training log");

  const bool do_eval = !eval_records.empty();
  const long long stop = options.stop_after > 0 ? std::min(options.stop_after, total) : total;
  while (trainer.step() < stop) {
    const long long epoch = trainer.step() / per_epoch;
    const auto order = epoch_order(train.records.size(), config.seed, epoch);
    for (long long b = trainer.step() % per_epoch; b < per_epoch && trainer.step() < stop; ++b) {
      std::vector<Sample> batch;
      const std::size_t begin = static_cast<std::size_t>(b) * static_cast<std::size_t>(config.batch_size);
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      for (std::size_t i = begin; i < end; ++i) {
        Sample s = load_sample(train.records[order[i]], options.resize_to);
        if (config.hflip) {
          Rng flip(config.seed ^ (static_cast<std::uint64_t>(trainer.step()) * 0x9E37ull + i));
          if (flip.uniform() < 0.5) s = hflip(s);
        }
        batch.push_back(std::move(s));
      }
      const double lr = trainer.current_lr();
      const double loss = trainer.train_step(batch);
      result.step_losses.push_back(loss);
      json rec;
      rec["type"] = "step";
      rec["step"] = trainer.step();
      rec["epoch"] = epoch;
      rec["lr"] = lr;
      rec["loss"] = loss;
      log << rec.dump() << '\n';
    }
    const bool epoch_done = trainer.step() % per_epoch == 0 || trainer.step() == total;
    if (epoch_done && do_eval) {
      const MetricReport report = evaluate_records(model, eval_records, config.task, options.resize_to);
      const double primary = report.primary_metric(config.task);
      log << report_record(report, epoch, trainer.step(), primary).dump() << '\n';
      result.history.push_back(report);
      if (!best.has_best || primary > best.best_metric) {
        best.has_best = true;
        best.best_metric = primary;
        trainer.save_checkpoint(result.best_checkpoint, best);
      }
      spdlog::info("epoch {} step {} primary {:.4f}", epoch, trainer.step(), primary);
    }
    log.flush();
    trainer.save_checkpoint(result.last_checkpoint, best);
  }
  if (!do_eval && trainer.step() == total) trainer.save_checkpoint(result.best_checkpoint, best);

  result.encoder_checksum_after = model.encoder().checksum();
  if (result.encoder_checksum_after != result.encoder_checksum_before) {
    throw TrainingError("frozen encoder changed during training", {});
  }
  return result;
}

}  // namespace samadapter
