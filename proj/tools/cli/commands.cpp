#include "cli/commands.hpp"

#include <Eigen/Core>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "samadapter/archive.hpp"
#include "samadapter/config.hpp"
#include "samadapter/error.hpp"
#include "samadapter/files.hpp"
#include "samadapter/metrics.hpp"
#include "samadapter/trainer.hpp"

namespace samadapter::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot write");
  out << text;
}

void ensure_writable(const fs::path& path, bool overwrite) {
  if (fs::exists(path) && !overwrite) throw IoError(path, "output exists; pass --overwrite to replace it");
}

void set_deterministic() { Eigen::setNbThreads(1); }

/// Runs a command body and maps exceptions onto exit codes.
template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const UnmatchedFilesError& e) {
    std::cerr << "error: " << e.what() << '\n';
    for (const auto& s : e.stems()) std::cerr << "  " << s << '\n';
    return kRuntimeError;
  } catch (const LoadError& e) {
    std::cerr << "error: " << e.what() << '\n';
    for (const auto& t : e.tensors()) std::cerr << "  " << t << '\n';
    return kRuntimeError;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << '\n';
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

std::vector<std::pair<std::string, fs::path>> list_inputs(const fs::path& input) {
  std::vector<std::pair<std::string, fs::path>> out;
  if (fs::is_directory(input)) {
    for (const auto& [stem, path] : images_by_stem(input)) out.emplace_back(stem, path);
    if (out.empty()) throw IoError(input, "no images found");
  } else if (fs::is_regular_file(input)) {
    out.emplace_back(input.stem().string(), input);
  } else {
    throw IoError(input, "no such file or directory");
  }
  return out;
}

RunConfig config_for_checkpoint(const fs::path& checkpoint, const fs::path& config_path) {
  if (!config_path.empty()) return RunConfig::load(config_path);
  const CheckpointInfo info = read_checkpoint_info(checkpoint);
  return RunConfig::from_json(info.config_snapshot);
}

}  // namespace

int cmd_train(const TrainArgs& args) {
  return guarded([&] {
    RunConfig config = RunConfig::load(args.config);
    if (args.deterministic) config.train.deterministic = true;
    if (args.has_seed) config.train.seed = args.seed;
    config.validate();
    if (config.train.deterministic) set_deterministic();

    const std::string snapshot = config.to_json();
    std::cout << "# effective config\n" << snapshot << std::flush;

    const fs::path out = config.output_dir;
    if (args.resume.empty()) ensure_writable(out / "last.ckpt", args.overwrite);
    fs::create_directories(out);
    write_text(out / "effective_config.json", snapshot);

    const DatasetManifest train =
        build_manifest(config.train_roots, config.task, Split::train, config.resize_to, config.layout);
    for (const auto& w : train.warnings) spdlog::warn("{}", w);
    std::vector<SampleRecord> eval_records = train.records;
    if (!config.test_roots.empty()) {
      const DatasetManifest test =
          build_manifest(config.test_roots, config.task, Split::test, config.resize_to, config.layout);
      for (const auto& w : test.warnings) spdlog::warn("{}", w);
      eval_records = test.records;
    }
    write_text(out / "manifest.json", train.to_json());

    SamAdapterModel model = build_model(config);
    FitOptions options;
    options.output_dir = out;
    options.config_snapshot = snapshot;
    options.force = args.force;
    options.resize_to = config.resize_to;
    if (!args.resume.empty()) options.resume_from = args.resume;
    const FitResult result = fit(config.train, train, eval_records, model, options);

    const MetricReport final_report = evaluate_records(model, eval_records, config.task, config.resize_to);
    write_text(out / "metrics_report.json", final_report.to_json());
    std::cout << "steps " << result.step_losses.size() << ", final loss "
              << (result.step_losses.empty() ? 0.0 : result.step_losses.back()) << ", primary metric "
              << final_report.primary_metric(config.task) << "\n";
    std::cout << "wrote " << result.last_checkpoint.string() << "\n";
    return kOk;
  });
}

int cmd_eval(const EvalArgs& args) {
  return guarded([&] {
    Task task;
    try {
      task = parse_task(args.task);
    } catch (const std::exception&) {
      throw ConfigError("--task", "unknown task '" + args.task + "'");
    }
    const fs::path out = args.out.empty() ? args.pred_dir / "metrics_report.json" : args.out;
    ensure_writable(out, args.overwrite);
    EvalOptions options;
    options.allow_missing = args.allow_missing;
    const MetricReport report = evaluate_dataset(args.pred_dir, args.gt_dir, task, options);
    const std::string text = report.to_json();
    write_text(out, text);
    fs::path csv = out;
    csv.replace_extension(".csv");
    write_text(csv, report.to_csv());
    std::cout << text;
    return kOk;
  });
}

int cmd_predict(const PredictArgs& args) {
  return guarded([&] {
    if (args.deterministic) set_deterministic();
    const RunConfig config = config_for_checkpoint(args.checkpoint, args.config);
    SamAdapterModel model = build_model(config);
    load_model_checkpoint(model, args.checkpoint);
    const auto inputs = list_inputs(args.input);
    fs::create_directories(args.out_dir);
    for (const auto& [stem, path] : inputs) ensure_writable(args.out_dir / (stem + ".png"), args.overwrite);
    const int size = config.encoder_config().image_size;
    for (const auto& [stem, path] : inputs) {
      const ImageTensor image = read_image_rgb(path);
      const SoftPrediction pred = model.forward(resize_bilinear(image, size, size));
      write_gray_png(args.out_dir / (stem + ".png"), resize_bilinear(pred.values, image.height(), image.width()));
    }
    std::cout << "wrote " << inputs.size() << " prediction(s) to " << args.out_dir.string() << "\n";
    return kOk;
  });
}

int cmd_extract_prompts(const ExtractArgs& args) {
  return guarded([&] {
    const RunConfig config = RunConfig::load(args.config);
    SamAdapterModel model = build_model(config);
    if (!args.checkpoint.empty()) load_model_checkpoint(model, args.checkpoint);
    const auto inputs = list_inputs(args.input);
    fs::create_directories(args.out_dir);
    const EncoderConfig enc = config.encoder_config();
    for (const auto& [stem, path] : inputs) {
      ensure_writable(args.out_dir / (stem + "_hfc.png"), args.overwrite);
      const ImageTensor image = resize_bilinear(read_image_rgb(path), enc.image_size, enc.image_size);
      write_rgb_png(args.out_dir / (stem + "_hfc.png"), extract_hfc(image, config.prompt.hfc));
      const PromptFeature f = model.composed_prompt(image);
      const Shape fshape{static_cast<std::uint32_t>(f.num_tokens()), static_cast<std::uint32_t>(f.dim())};
      write_tensor_file(args.out_dir / (stem + "_features.tensor"), fshape,
                        {f.tokens.data(), static_cast<std::size_t>(f.tokens.size())});
      const auto prompts = model.prompts(image);
      std::vector<double> stacked;
      for (const auto& p : prompts) stacked.insert(stacked.end(), p.tokens.data(), p.tokens.data() + p.tokens.size());
      write_tensor_file(args.out_dir / (stem + "_prompts.tensor"),
                        {static_cast<std::uint32_t>(prompts.size()), fshape[0], fshape[1]}, stacked);
    }
    std::cout << "wrote prompts for " << inputs.size() << " image(s) to " << args.out_dir.string() << "\n";
    return kOk;
  });
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"SAM adapter training and evaluation", "sam-adapter"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train adapters, prompt projection and decoder");
  t->add_option("--config", train.config, "run config (JSON)")->required();
  t->add_flag("--deterministic", train.deterministic, "single-threaded, reproducible run");
  t->add_option("--seed", train.seed, "override train.seed")->each([&](const std::string&) { train.has_seed = true; });
  t->add_flag("--overwrite", train.overwrite, "replace existing outputs");
  t->add_flag("--force", train.force, "resume even if the config snapshot differs");
  t->add_option("--resume", train.resume, "checkpoint to resume from");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "score a prediction folder against ground truth");
  e->add_option("--pred", eval.pred_dir, "prediction folder")->required();
  e->add_option("--gt", eval.gt_dir, "ground-truth mask folder")->required();
  e->add_option("--task", eval.task, "camouflage | shadow | polyp")->required();
  e->add_option("--out", eval.out, "report path (JSON; a CSV is written next to it)");
  e->add_flag("--allow-missing", eval.allow_missing, "score only the stems present in both folders");
  e->add_flag("--overwrite", eval.overwrite, "replace an existing report");
  e->add_flag("--deterministic", "accepted for symmetry; evaluation is always deterministic");

  PredictArgs predict;
  auto* p = app.add_subcommand("predict", "write probability maps for images");
  p->add_option("--checkpoint", predict.checkpoint, "training checkpoint")->required();
  p->add_option("--input", predict.input, "image file or folder")->required();
  p->add_option("--out", predict.out_dir, "output folder")->required();
  p->add_option("--config", predict.config, "run config; defaults to the checkpoint's snapshot");
  p->add_flag("--deterministic", predict.deterministic, "single-threaded, reproducible run");
  p->add_flag("--overwrite", predict.overwrite, "replace existing PNGs");

  ExtractArgs extract;
  auto* x = app.add_subcommand("extract-prompts", "dump HFC images, composed features and per-layer prompts");
  x->add_option("--config", extract.config, "run config (JSON)")->required();
  x->add_option("--input", extract.input, "image file or folder")->required();
  x->add_option("--out", extract.out_dir, "output folder")->required();
  x->add_option("--checkpoint", extract.checkpoint, "use trained adapter weights");
  x->add_flag("--overwrite", extract.overwrite, "replace existing outputs");
  x->add_flag("--deterministic", "accepted for symmetry");

  ReportArgs report;
  auto* r = app.add_subcommand("report", "plot a training log and summarise it");
  r->add_option("--log", report.log, "JSON-lines training log")->required();
  r->add_option("--out", report.out_dir, "output folder")->required();
  r->add_flag("--overwrite", report.overwrite, "replace existing outputs");
  r->add_flag("--deterministic", "accepted for symmetry");

  std::vector<std::string> rev(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rev.begin(), rev.end());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kConfigError;
  }

  if (t->parsed()) return cmd_train(train);
  if (e->parsed()) return cmd_eval(eval);
  if (p->parsed()) return cmd_predict(predict);
  if (x->parsed()) return cmd_extract_prompts(extract);
  return cmd_report(report);
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args);
}

}  // namespace samadapter::cli
