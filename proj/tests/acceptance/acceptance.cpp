// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <Eigen/Core>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <json.hpp>
#include <map>
#include <sstream>

#include "oracles/dense_oracles.hpp"
#include "oracles/metric_oracles.hpp"
#include "samadapter/config.hpp"
#include "samadapter/data.hpp"
#include "samadapter/losses.hpp"
#include "samadapter/metrics.hpp"
#include "samadapter/prompt.hpp"
#include "samadapter/trainer.hpp"
#include "support.hpp"

#ifdef SAMADAPTER_WITH_CLI
#include <iostream>

#include "cli/commands.hpp"
#endif

using namespace samadapter;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// -- 1: metric oracles ------------------------------------------------------------

Outcome metric_oracles() {
  const auto t0 = Clock::now();
  Rng rng(20240601);
  const int pairs = 10000;
  double worst_exact = 0, worst_struct = 0;
  std::string worst_name;
  for (int n = 0; n < pairs; ++n) {
    const int h = 1 + static_cast<int>(rng.below(8)), w = 1 + static_cast<int>(rng.below(8));
    Mat p(h, w), g(h, w);
    const bool quantised = rng.uniform() < 0.3;
    const double fg = rng.below(6) == 0 ? static_cast<double>(rng.below(2)) : rng.uniform();
    for (int i = 0; i < p.size(); ++i) {
      p.data()[i] = quantised ? static_cast<double>(rng.below(256)) / 255.0 : rng.uniform();
      g.data()[i] = rng.uniform() < fg ? 1.0 : 0.0;
    }
    const SoftPrediction pred(p);
    const BinaryMask gt(g);
    const oracle::Grid op = testsupport::to_grid(p), og = testsupport::to_grid(g);
    const DiceIou di = dice_iou(pred, gt);
    const std::pair<const char*, double> exact[] = {
        {"mae", std::abs(mae(pred, gt) - oracle::mae(op, og))},
        {"ber", std::abs(ber(pred, gt) - oracle::ber(oracle::counts(op, og)))},
        {"dice", std::abs(di.dice - oracle::dice(op, og))},
        {"iou", std::abs(di.iou - oracle::iou(op, og))},
    };
    const std::pair<const char*, double> structural[] = {
        {"s_measure", std::abs(s_measure(pred, gt) - oracle::s_measure(op, og))},
        {"e_measure", std::abs(e_measure_mean(pred, gt) - oracle::e_measure_mean(op, og))},
        {"weighted_fbeta", std::abs(weighted_fbeta(pred, gt) - oracle::weighted_fbeta(op, og))},
    };
    for (const auto& [name, d] : exact)
      if (!(d <= worst_exact)) worst_exact = d, worst_name = name;
    for (const auto& [name, d] : structural)
      if (!(d <= worst_struct)) worst_struct = d, worst_name = name;
  }
  const double secs = seconds_since(t0);
  const bool pass = worst_exact <= 1e-9 && worst_struct <= 1e-6 && secs < 120;
  return {pass, fmt("%d pairs, max |diff| %.2e (mae/ber/dice/iou) %.2e (S/E/Fw), worst %s, %.1fs", pairs,
                    worst_exact, worst_struct, worst_name.c_str(), secs)};
}

// -- 2: gradient checks -----------------------------------------------------------

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  const EncoderConfig enc = testsupport::micro_encoder();
  SamAdapterModel model = testsupport::make_model(enc, AdapterInit::small_random, 3, 4);
  Rng rng(17);
  const ImageTensor image = testsupport::random_image(rng, enc.image_size);
  const BinaryMask gt = testsupport::random_mask(rng, enc.image_size, enc.image_size);
  const LossConfig loss_cfg;

  model.zero_grad();
  ForwardCache cache;
  const SoftPrediction out = model.forward(image, &cache);
  model.backward(task_loss_grad(loss_cfg, out, gt).grad, cache);
  const auto loss = [&] { return task_loss(loss_cfg, model.forward(image), gt); };

  std::map<std::string, double> worst{{"adapter", 0}, {"decoder", 0}, {"hfc_projection", 0}, {"losses", 0}};
  auto group_of = [](const std::string& name) -> std::string {
    if (name.starts_with("adapter")) return "adapter";
    if (name.starts_with("decoder")) return "decoder";
    return "hfc_projection";
  };
  std::size_t checked = 0;
  for (Param* p : model.trainable_parameters()) {
    const auto r = testsupport::finite_difference(*p, loss);
    double& w = worst[group_of(p->name)];
    if (!(r.rel_error <= w)) w = r.rel_error;
    checked += r.checked;
  }

  Param pred("pred", {6, 6});
  for (int i = 0; i < pred.value.size(); ++i) pred.value.data()[i] = rng.uniform(0.05, 0.95);
  const BinaryMask small_gt = testsupport::random_mask(rng, 6, 6);
  const std::vector<std::function<LossValue(const SoftPrediction&)>> losses{
      [&](const SoftPrediction& p) { return bce_loss_grad(p, small_gt); },
      [&](const SoftPrediction& p) { return balanced_bce_loss_grad(p, small_gt); },
      [&](const SoftPrediction& p) { return iou_loss_grad(p, small_gt); },
      [&](const SoftPrediction& p) { return task_loss_grad(LossConfig::for_task(Task::camouflage), p, small_gt); },
      [&](const SoftPrediction& p) { return task_loss_grad(LossConfig::for_task(Task::shadow), p, small_gt); },
  };
  for (const auto& fn : losses) {
    pred.grad = fn(SoftPrediction(pred.value)).grad;
    const auto r = testsupport::finite_difference(pred, [&] { return fn(SoftPrediction(pred.value)).value; });
    if (!(r.rel_error <= worst["losses"])) worst["losses"] = r.rel_error;
    checked += r.checked;
  }

  bool pass = seconds_since(t0) < 60;
  std::string detail;
  for (const auto& [name, e] : worst) {
    pass = pass && e < 1e-4;
    detail += fmt("%s %.1e, ", name.c_str(), e);
  }
  return {pass, detail + fmt("%zu entries, %.1fs", checked, seconds_since(t0))};
}

// -- 3: zero-init equivalence -----------------------------------------------------

RunConfig toy_config() {
  RunConfig c = RunConfig::load(testsupport::fixture_dir() / "toy_config.json");
  c.output_dir = testsupport::scratch("acceptance_run");
  return c;
}

ImageTensor flipped(const ImageTensor& img) {
  ImageTensor out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(y, img.width() - 1 - x, c);
  return out;
}

Outcome zero_init_equivalence() {
  RunConfig cfg = toy_config();
  cfg.adapter_init = AdapterInit::zero_up;
  const SamAdapterModel model = build_model(cfg);
  const DatasetManifest m = build_manifest(cfg.train_roots, cfg.task, Split::train, cfg.resize_to);
  std::vector<ImageTensor> images;
  for (const auto& r : m.records) images.push_back(load_sample(r, cfg.resize_to).image);
  for (std::size_t i = 0; images.size() < 10; ++i) images.push_back(flipped(images[i]));
  int identical = 0;
  for (const ImageTensor& img : images) {
    const Mat a = model.forward(img).values, b = model.forward_baseline(img).values;
    if (a.rows() == b.rows() && a.cols() == b.cols() &&
        std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0)
      ++identical;
  }
  return {identical == 10, fmt("%d/%zu outputs bit-identical to the adapter-free backbone", identical, images.size())};
}

// -- 4 and 5: training on the fixture ----------------------------------------------

struct ToyRun {
  FitResult result;
  double final_mdice = 0;
  std::string enc_before, enc_after, adapters_before, adapters_after, decoder_before, decoder_after;
  double seconds = 0;
};

double last_epoch_mean(const FitResult& r, long long per_epoch) {
  const auto& l = r.step_losses;
  double s = 0;
  for (std::size_t i = l.size() - per_epoch; i < l.size(); ++i) s += l[i];
  return s / static_cast<double>(per_epoch);
}

ToyRun train_toy(bool adapters_enabled) {
  const auto t0 = Clock::now();
  RunConfig cfg = toy_config();
  cfg.adapters_enabled = adapters_enabled;
  const DatasetManifest m = build_manifest(cfg.train_roots, cfg.task, Split::train, cfg.resize_to);
  SamAdapterModel model = build_model(cfg);
  ToyRun run;
  run.enc_before = model.encoder().checksum();
  run.adapters_before = model.adapters().checksum();
  run.decoder_before = model.decoder().checksum();
  FitOptions opts;
  opts.output_dir = testsupport::scratch(adapters_enabled ? "acceptance_toy" : "acceptance_toy_ablation");
  opts.config_snapshot = cfg.to_json();
  opts.resize_to = cfg.resize_to;
  run.result = fit(cfg.train, m, m.records, model, opts);
  run.final_mdice = evaluate_records(model, m.records, cfg.task, cfg.resize_to).mdice;
  run.enc_after = model.encoder().checksum();
  run.adapters_after = model.adapters().checksum();
  run.decoder_after = model.decoder().checksum();
  run.seconds = seconds_since(t0);
  return run;
}

Outcome frozen_encoder(const ToyRun& run) {
  const std::size_t steps = run.result.step_losses.size();
  const bool enc = run.enc_before == run.enc_after;
  const bool ad = run.adapters_before != run.adapters_after;
  const bool dec = run.decoder_before != run.decoder_after;
  return {steps >= 300 && enc && ad && dec,
          fmt("%zu steps, encoder %s, adapters %s, decoder %s", steps, enc ? "unchanged" : "CHANGED",
              ad ? "changed" : "UNCHANGED", dec ? "changed" : "UNCHANGED")};
}

Outcome toy_overfit(const ToyRun& run, const ToyRun& ablation) {
  const long long per_epoch = steps_per_epoch(8, 2);
  const double initial = run.result.step_losses.front();
  const double final_loss = last_epoch_mean(run.result, per_epoch);
  const double ablation_final = last_epoch_mean(ablation.result, per_epoch);
  const double secs = run.seconds + ablation.seconds;
  const bool pass = run.result.step_losses.size() == 300 && run.final_mdice > 0.9 && final_loss < 0.2 * initial &&
                    ablation_final > final_loss && secs < 300;
  return {pass, fmt("mDice %.4f, loss %.4f -> %.4f (ratio %.3f), ablation final %.4f, %.1fs", run.final_mdice,
                    initial, final_loss, final_loss / initial, ablation_final, secs)};
}

// -- 6: HFC properties --------------------------------------------------------------

double energy(const ImageTensor& img) {
  double s = 0;
  for (double v : img.values()) s += v * v;
  return s;
}

std::vector<oracle::Grid> channels_of(const ImageTensor& img) {
  std::vector<oracle::Grid> out;
  for (int c = 0; c < img.channels(); ++c) out.push_back(testsupport::to_grid(img.channel(c)));
  return out;
}

Outcome hfc_properties() {
  bool constant_zero = true;
  for (double tau : {0.1, 0.25, 0.5, 0.9}) {
    const ImageTensor out = extract_hfc(ImageTensor(16, 16, 3, 0.42), {tau});
    for (double v : out.values()) constant_zero &= v == 0.0;
  }

  Rng rng(99);
  const ImageTensor img = testsupport::random_image(rng, 16);
  const auto identity = oracle::minmax(channels_of(img));
  const ImageTensor at_zero = extract_hfc(img, {0.0});
  double identity_err = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) identity_err = std::max(identity_err, std::abs(at_zero.at(y, x, c) - identity[c](y, x)));

  bool monotone = true;
  double prev = INFINITY;
  for (int i = 0; i < 10; ++i) {
    const double e = energy(hfc_residual(img, {i / 10.0}));
    monotone &= e <= prev * (1 + 1e-12);
    prev = e;
  }

  double oracle_err = 0;
  for (int trial = 0; trial < 20; ++trial) {
    ImageTensor small(4, 4, 3);
    for (double& v : small.values()) v = rng.uniform();
    const double tau = rng.uniform(0.0, 0.9);
    const auto expected = oracle::minmax(oracle::hfc_unnormalised(channels_of(small), tau));
    const ImageTensor got = extract_hfc(small, {tau});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) oracle_err = std::max(oracle_err, std::abs(got.at(y, x, c) - expected[c](y, x)));
  }
  const bool pass = constant_zero && identity_err < 1e-12 && monotone && oracle_err < 1e-9;
  return {pass, fmt("constant->0 %s, tau=0 identity err %.1e, energy monotone %s, 4x4 DFT err %.1e",
                    constant_zero ? "yes" : "no", identity_err, monotone ? "yes" : "no", oracle_err)};
}

// -- 7: schedule --------------------------------------------------------------------

Outcome schedule() {
  const double lr0 = TrainConfig::for_task(Task::camouflage).lr0;
  const long long total = 20 * steps_per_epoch(4040, 2);
  const bool start = cosine_lr(0, total, lr0) == 2e-4;
  const bool end = cosine_lr(total, total, lr0) == 0.0;
  bool monotone = true;
  double prev = INFINITY;
  for (int i = 0; i < 1000; ++i) {
    const double lr = cosine_lr(total * i / 999, total, lr0);
    monotone &= lr <= prev;
    prev = lr;
  }
  return {start && end && monotone,
          fmt("lr(0)=%.17g, lr(T)=%.17g, T=%lld, monotone over 1000 steps %s", cosine_lr(0, total, lr0),
              cosine_lr(total, total, lr0), total, monotone ? "yes" : "no")};
}

// -- 8: protocol counts -------------------------------------------------------------

void touch(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary);
}

void populate(const fs::path& root, const std::string& prefix, int n, int nested_width = 4) {
  for (int i = 0; i < n; ++i) {
    const std::string num = std::to_string(i);
    const std::string stem = prefix + std::string(nested_width - std::min<int>(nested_width, num.size()), '0') + num;
    touch(root / "images" / (stem + ".jpg"));
    touch(root / "masks" / (stem + ".png"));
  }
}

Outcome protocol_counts() {
  const fs::path base = testsupport::scratch("acceptance_protocol");
  populate(base / "CAMO" / "train", "camourflage_", 1000);
  populate(base / "COD10K" / "train", "COD10K-CAM-", 3040);
  populate(base / "COD10K" / "train", "COD10K-NonCAM-", 1960);
  populate(base / "ISTD" / "test", "istd_", 540);
  populate(base / "CAMO" / "test", "camourflage_", 250);

  const auto cam = build_manifest({base / "CAMO" / "train", base / "COD10K" / "train"}, Task::camouflage, Split::train);
  const auto istd = build_manifest({base / "ISTD" / "test"}, Task::shadow, Split::test);
  const auto camo = build_manifest({base / "CAMO" / "test"}, Task::camouflage, Split::test);
  const bool pass = cam.records.size() == 4040 && istd.records.size() == 540 && camo.records.size() == 250 &&
                    cam.warnings.empty() && istd.warnings.empty() && camo.warnings.empty();
  return {pass, fmt("camouflage-train %zu, ISTD-test %zu, CAMO-test %zu", cam.records.size(), istd.records.size(),
                    camo.records.size())};
}

// -- 9: CLI smoke -------------------------------------------------------------------

#ifdef SAMADAPTER_WITH_CLI

std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).string()] = std::string(std::istreambuf_iterator<char>(in), {});
  }
  return out;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sam-adapter");
  std::ostringstream sink;
  auto* old = std::cout.rdbuf(sink.rdbuf());
  const int code = cli::run(args);
  std::cout.rdbuf(old);
  return code;
}

Outcome cli_smoke() {
  const auto t0 = Clock::now();
  const fs::path dir = testsupport::scratch("acceptance_cli");
  const fs::path cfg = dir / "config.json";
  {
    std::ifstream in(testsupport::fixture_dir() / "toy_config.json");
    nlohmann::json j = nlohmann::json::parse(in);
    j["data"]["train_roots"] = {testsupport::toy_dir().string()};
    j["train"]["epochs"] = 10;
    j["output_dir"] = "out/run";
    std::ofstream(cfg) << j.dump(2);
  }
  const fs::path out = dir / "out";
  const std::string run_dir = (out / "run").string(), preds = (out / "preds").string();
  const std::string masks = (testsupport::toy_dir() / "masks").string();

  std::vector<std::map<std::string, std::string>> trees;
  std::vector<int> codes;
  for (int round = 0; round < 2; ++round) {
    codes.push_back(cli({"train", "--config", cfg.string(), "--deterministic", "--overwrite"}));
    codes.push_back(cli({"predict", "--checkpoint", run_dir + "/last.ckpt", "--input",
                         (testsupport::toy_dir() / "images").string(), "--out", preds, "--deterministic",
                         "--overwrite"}));
    codes.push_back(cli({"eval", "--pred", preds, "--gt", masks, "--task", "camouflage", "--out",
                         (out / "eval" / "metrics_report.json").string(), "--overwrite", "--deterministic"}));
    codes.push_back(cli({"report", "--log", run_dir + "/train_log.jsonl", "--out", (out / "report").string(),
                         "--overwrite", "--deterministic"}));
    trees.push_back(snapshot_tree(out));
  }
  bool all_ok = true;
  for (int c : codes) all_ok &= c == 0;
  std::size_t differing = 0;
  for (const auto& [name, bytes] : trees[0]) {
    auto it = trees[1].find(name);
    if (it == trees[1].end() || it->second != bytes) ++differing;
  }
  const bool stable = trees[0].size() == trees[1].size() && differing == 0 && !trees[0].empty();
  std::string code_list;
  for (int c : codes) code_list += std::to_string(c);
  return {all_ok && stable, fmt("exit codes %s, %zu output files, %zu differ between runs, %.1fs", code_list.c_str(),
                                trees[0].size(), differing, seconds_since(t0))};
}

#else

Outcome cli_smoke() { return {false, "CLI target not built"}; }

#endif

}  // namespace

int main() {
  Eigen::setNbThreads(1);
  spdlog::set_level(spdlog::level::err);
  int failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::printf("criterion %d [PRIMARY] %s: %s (%s)\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  };
  auto guarded = [](const std::function<Outcome()>& fn) -> Outcome {
    try {
      return fn();
    } catch (const std::exception& e) {
      return {false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "metric oracle suite", guarded(metric_oracles));
  report(2, "gradient checks", guarded(gradient_checks));
  report(3, "zero-init equivalence", guarded(zero_init_equivalence));
  ToyRun run, ablation;
  const Outcome trained = guarded([&] {
    run = train_toy(true);
    ablation = train_toy(false);
    return Outcome{true, ""};
  });
  report(4, "frozen-encoder invariance", trained.pass ? frozen_encoder(run) : trained);
  report(5, "toy overfit", trained.pass ? toy_overfit(run, ablation) : trained);
  report(6, "HFC properties", guarded(hfc_properties));
  report(7, "cosine schedule", guarded(schedule));
  report(8, "protocol counts", guarded(protocol_counts));
  report(9, "end-to-end CLI smoke", guarded(cli_smoke));
  std::printf("%d/9 criteria passed\n", 9 - failures);
  return failures == 0 ? 0 : 1;
}
