#include "samadapter/config.hpp"

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "samadapter/error.hpp"
#include "samadapter/weights.hpp"

namespace samadapter {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

AdapterInit parse_adapter_init(std::string_view name) {
  if (name == "zero_up") return AdapterInit::zero_up;
  if (name == "small_random") return AdapterInit::small_random;
  throw ConfigError("adapter.init", "unknown init '" + std::string(name) + "' (zero_up, small_random)");
}

std::string to_string(AdapterInit init) { return init == AdapterInit::zero_up ? "zero_up" : "small_random"; }

namespace {

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p.lexically_normal();
  return (base / p).lexically_normal();
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

template <typename T>
void read(const json& obj, const char* key, const std::string& field, T& out) {
  if (const json* v = find(obj, key)) {
    try {
      out = v->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field, "wrong type: " + v->dump());
    }
  }
}

const json& section(const json& root, const char* key) {
  static const json empty = json::object();
  const json* s = find(root, key);
  if (!s) return empty;
  if (!s->is_object()) throw ConfigError(key, "must be an object");
  return *s;
}

std::vector<fs::path> read_paths(const json& obj, const char* key, const std::string& field, const fs::path& base) {
  std::vector<std::string> raw;
  read(obj, key, field, raw);
  std::vector<fs::path> out;
  for (const auto& r : raw) out.push_back(resolve(r, base));
  return out;
}

std::vector<std::string> strings(const std::vector<fs::path>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) out.push_back(p.string());
  return out;
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("<file>", "top level must be an object");

  RunConfig c;
  std::string task = "camouflage";
  read(root, "task", "task", task);
  try {
    c.task = parse_task(task);
  } catch (const std::exception&) {
    throw ConfigError("task", "unknown task '" + task + "' (camouflage, shadow, polyp)");
  }
  c.train = TrainConfig::for_task(c.task);

  const json& data = section(root, "data");
  c.train_roots = read_paths(data, "train_roots", "data.train_roots", base_dir);
  c.test_roots = read_paths(data, "test_roots", "data.test_roots", base_dir);
  read(data, "image_dir", "data.image_dir", c.layout.image_dir);
  read(data, "mask_dir", "data.mask_dir", c.layout.mask_dir);
  read(data, "resize_to", "data.resize_to", c.resize_to);

  const json& model = section(root, "model");
  read(model, "preset", "model.preset", c.preset);
  std::string weights;
  read(model, "weights", "model.weights", weights);
  if (!weights.empty()) c.weights = resolve(weights, base_dir);
  read(model, "seed", "model.seed", c.model_seed);
  read(model, "adapters_enabled", "model.adapters_enabled", c.adapters_enabled);
  if (!find(data, "resize_to")) {
    try {
      c.resize_to = encoder_preset(c.preset).image_size;
    } catch (const ConfigError&) {
      // reported by validate()
    }
  }

  const json& adapter = section(root, "adapter");
  read(adapter, "mid_dim", "adapter.mid_dim", c.adapter_mid_dim);
  std::string init = to_string(c.adapter_init);
  read(adapter, "init", "adapter.init", init);
  c.adapter_init = parse_adapter_init(init);
  read(adapter, "seed", "adapter.seed", c.adapter_seed);

  const json& prompt = section(root, "prompt");
  read(prompt, "mask_ratio", "prompt.mask_ratio", c.prompt.hfc.mask_ratio);
  read(prompt, "weights", "prompt.weights", c.prompt.weights.weights);

  const json& tr = section(root, "train");
  read(tr, "epochs", "train.epochs", c.train.epochs);
  read(tr, "lr0", "train.lr0", c.train.lr0);
  read(tr, "batch_size", "train.batch_size", c.train.batch_size);
  read(tr, "seed", "train.seed", c.train.seed);
  read(tr, "deterministic", "train.deterministic", c.train.deterministic);
  read(tr, "hflip", "train.hflip", c.train.hflip);
  read(tr, "max_steps", "train.max_steps", c.train.max_steps);
  const json& opt = section(tr, "optimizer");
  read(opt, "beta1", "train.optimizer.beta1", c.train.optimizer.beta1);
  read(opt, "beta2", "train.optimizer.beta2", c.train.optimizer.beta2);
  read(opt, "eps", "train.optimizer.eps", c.train.optimizer.eps);
  read(opt, "weight_decay", "train.optimizer.weight_decay", c.train.optimizer.weight_decay);
  const json& loss = section(tr, "loss");
  std::string kind = to_string(c.train.loss.kind);
  read(loss, "kind", "train.loss.kind", kind);
  c.train.loss.kind = parse_loss_kind(kind);
  read(loss, "iou_weight", "train.loss.iou_weight", c.train.loss.iou_weight);
  read(loss, "epsilon", "train.loss.epsilon", c.train.loss.epsilon);

  std::string out = c.output_dir.string();
  read(root, "output_dir", "output_dir", out);
  c.output_dir = resolve(resolve_output_dir(out), base_dir);
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str(), fs::absolute(path).parent_path());
}

std::string RunConfig::to_json() const {
  json j;
  j["task"] = to_string(task);
  j["data"] = {{"train_roots", strings(train_roots)},
               {"test_roots", strings(test_roots)},
               {"image_dir", layout.image_dir},
               {"mask_dir", layout.mask_dir},
               {"resize_to", resize_to}};
  j["model"] = {{"preset", preset},
                {"weights", weights ? weights->string() : std::string()},
                {"seed", model_seed},
                {"adapters_enabled", adapters_enabled}};
  j["adapter"] = {{"mid_dim", adapter_mid_dim}, {"init", to_string(adapter_init)}, {"seed", adapter_seed}};
  j["prompt"] = {{"mask_ratio", prompt.hfc.mask_ratio}, {"weights", prompt.weights.weights}};
  j["train"] = {{"epochs", train.epochs},
                {"lr0", train.lr0},
                {"batch_size", train.batch_size},
                {"seed", train.seed},
                {"deterministic", train.deterministic},
                {"hflip", train.hflip},
                {"max_steps", train.max_steps},
                {"optimizer",
                 {{"beta1", train.optimizer.beta1},
                  {"beta2", train.optimizer.beta2},
                  {"eps", train.optimizer.eps},
                  {"weight_decay", train.optimizer.weight_decay}}},
                {"loss",
                 {{"kind", to_string(train.loss.kind)},
                  {"iou_weight", train.loss.iou_weight},
                  {"epsilon", train.loss.epsilon}}}};
  j["output_dir"] = output_dir.string();
  return j.dump(2) + "\n";
}

void RunConfig::validate() const {
  if (train_roots.empty()) throw ConfigError("data.train_roots", "at least one dataset root is required");
  for (std::size_t i = 0; i < train_roots.size(); ++i) {
    if (!fs::is_directory(train_roots[i])) {
      throw ConfigError("data.train_roots[" + std::to_string(i) + "]", "no such directory: " + train_roots[i].string());
    }
  }
  for (std::size_t i = 0; i < test_roots.size(); ++i) {
    if (!fs::is_directory(test_roots[i])) {
      throw ConfigError("data.test_roots[" + std::to_string(i) + "]", "no such directory: " + test_roots[i].string());
    }
  }
  if (weights && !fs::is_regular_file(*weights)) {
    throw ConfigError("model.weights", "no such file: " + weights->string());
  }
  const EncoderConfig enc = encoder_config();
  try {
    enc.validate();
  } catch (const std::exception& e) {
    throw ConfigError("model.preset", e.what());
  }
  if (resize_to != enc.image_size) {
    throw ConfigError("data.resize_to", "must equal the preset input size " + std::to_string(enc.image_size));
  }
  if (adapter_mid_dim < 1) throw ConfigError("adapter.mid_dim", "must be >= 1");
  if (!(prompt.hfc.mask_ratio >= 0.0 && prompt.hfc.mask_ratio < 1.0)) {
    throw ConfigError("prompt.mask_ratio", "must lie in [0, 1)");
  }
  if (prompt.weights.weights.size() != 2) throw ConfigError("prompt.weights", "expects [w_hfc, w_pe]");
  train.validate();
}

EncoderConfig RunConfig::encoder_config() const { return encoder_preset(preset); }

DecoderConfig RunConfig::decoder_config() const { return DecoderConfig::for_encoder(encoder_config()); }

AdapterConfig RunConfig::adapter_config() const {
  const EncoderConfig enc = encoder_config();
  AdapterConfig a;
  a.num_layers = enc.depth;
  a.input_dim = enc.embed_dim;
  a.out_dim = enc.embed_dim;
  a.mid_dim = adapter_mid_dim;
  a.init_scheme = adapter_init;
  return a;
}

fs::path resolve_output_dir(const fs::path& dir) {
  if (dir.is_absolute()) return dir;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) return fs::path(root) / dir;
  return dir;
}

SamAdapterModel build_model(const RunConfig& config) {
  const EncoderConfig enc = config.encoder_config();
  const DecoderConfig dec = config.decoder_config();
  Encoder encoder;
  Decoder decoder;
  if (config.weights) {
    PretrainedBackbone pb = load_pretrained(enc, dec, *config.weights, config.model_seed + 1);
    encoder = std::move(pb.encoder);
    decoder = std::move(pb.decoder);
  } else {
    encoder = Encoder(enc);
    encoder.init_random(config.model_seed);
    decoder = Decoder(dec);
    decoder.init_random(config.model_seed + 1);
  }
  AdapterStack adapters = init_adapters(config.adapter_config(), config.adapter_seed);
  HfcProjection proj(enc.in_channels, enc.patch_size, enc.embed_dim);
  Rng rng(config.adapter_seed + 0x51ED);
  proj.init(rng);
  return SamAdapterModel(std::move(encoder), std::move(decoder), std::move(adapters), std::move(proj), config.prompt,
                         config.adapters_enabled);
}

}  // namespace samadapter
