#include "samadapter/optimizer.hpp"

#include <cmath>
#include <set>

#include "samadapter/error.hpp"

namespace samadapter {

void AdamWConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train.optimizer.betas", "betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("train.optimizer.eps", "must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.optimizer.weight_decay", "must be >= 0");
}

AdamW::AdamW(std::vector<Param*> params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  config_.validate();
  std::set<std::string> seen;
  for (Param* p : params_) {
    if (!p->trainable) throw ValidationError("optimizer given frozen parameter " + p->name);
    if (!seen.insert(p->name).second) throw ValidationError("optimizer given parameter twice: " + p->name);
    state_[p->name] = {Mat::Zero(p->value.rows(), p->value.cols()), Mat::Zero(p->value.rows(), p->value.cols())};
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (Param* p : params_) {
    Moments& s = state_.at(p->name);
    s.m = b1 * s.m + (1.0 - b1) * p->grad;
    s.v = b2 * s.v + (1.0 - b2) * p->grad.cwiseProduct(p->grad);
    if (config_.weight_decay > 0.0) p->value *= 1.0 - lr * config_.weight_decay;
    const Mat denom = (s.v / c2).cwiseSqrt().array() + config_.eps;
    p->value -= lr * ((s.m / c1).cwiseQuotient(denom));
  }
}

void AdamW::save_state(TensorArchive& archive) const {
  for (const Param* p : params_) {
    const Moments& s = state_.at(p->name);
    archive.put("optim.m." + p->name, p->shape, {s.m.data(), static_cast<std::size_t>(s.m.size())}, DType::f64);
    archive.put("optim.v." + p->name, p->shape, {s.v.data(), static_cast<std::size_t>(s.v.size())}, DType::f64);
  }
}

void AdamW::load_state(const TensorArchive& archive, long long step) {
  std::vector<std::string> missing;
  for (const Param* p : params_) {
    Moments& s = state_.at(p->name);
    for (auto [key, dst] : {std::pair{"optim.m." + p->name, &s.m}, std::pair{"optim.v." + p->name, &s.v}}) {
      if (!archive.contains(key)) {
        missing.push_back(key);
        continue;
      }
      const ArchiveTensor& t = archive.get(key);
      if (t.shape != p->shape) throw LoadError("optimizer state shape mismatch", {key});
      std::copy(t.values.begin(), t.values.end(), dst->data());
    }
  }
  if (!missing.empty()) throw LoadError("optimizer state missing", missing);
  t_ = step;
}

}  // namespace samadapter
