#include "samadapter/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace samadapter {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

Param::Param(std::string name_, Shape shape_, bool trainable_)
    : name(std::move(name_)), shape(std::move(shape_)), trainable(trainable_) {
  const auto rows = shape.size() <= 1 ? 1 : static_cast<Eigen::Index>(shape[0]);
  const auto total = static_cast<Eigen::Index>(shape_numel(shape));
  value = Mat::Zero(rows, rows == 0 ? 0 : total / rows);
  grad = Mat::Zero(value.rows(), value.cols());
}

void Param::zero_grad() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad = Mat::Zero(value.rows(), value.cols());
  } else {
    grad.setZero();
  }
}

void Checksum::add_bytes(const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    state_ ^= bytes[i];
    state_ *= 1099511628211ull;
  }
}

void Checksum::add(const Param& p) {
  add_bytes(p.name.data(), p.name.size());
  for (auto d : p.shape) add_bytes(&d, sizeof d);
  add_bytes(p.value.data(), sizeof(double) * static_cast<std::size_t>(p.value.size()));
}

std::string Checksum::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
  return buf;
}

// splitmix64
std::uint64_t Rng::next_u64() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(next_u64() % n); }

void fill_uniform(Mat& m, Rng& rng, double bound) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
}

void round_to_float(Mat& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(m.data()[i]);
}

}  // namespace samadapter
