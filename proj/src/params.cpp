#include "sredge/params.hpp"

#include <cmath>
#include <numbers>

#include "sredge/errors.hpp"

namespace sredge {
namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
  for (auto& s : s_) s = splitmix64(seed);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw UsageError("Rng::below(0)");
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::mix(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6A09E667F3BCC909ULL;
  for (std::uint64_t p : parts) {
    h ^= p + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    h = splitmix64(h);
  }
  return h;
}

template <typename T>
const Tensor<T>& ParameterSet<T>::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw AlignmentError("no parameter named '" + name + "'");
  return it->second;
}

template <typename T>
Tensor<T>& ParameterSet<T>::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw AlignmentError("no parameter named '" + name + "'");
  return it->second;
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [k, v] : tensors_) n += v.numel();
  return n;
}

ParameterSet<float> init_parameters(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
  Rng rng(seed);
  ParameterSet<float> out;
  for (const ParamSpec& spec : specs) {
    if (out.contains(spec.name)) throw UsageError("duplicate parameter name '" + spec.name + "'");
    Tensor<float> t(spec.shape);
    switch (spec.init) {
      case Init::kaiming_uniform: {
        std::size_t fan_in = 1;
        for (std::size_t i = 1; i < spec.shape.size(); ++i) fan_in *= spec.shape[i];
        // Kaiming-uniform with negative slope sqrt(5): gain^2 = 2 / (1 + 5), so
        // b = gain * sqrt(3 / fan_in) = 1 / sqrt(fan_in).
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (float& v : t.values()) v = static_cast<float>(rng.uniform(-bound, bound));
        break;
      }
      case Init::zeros:
        break;
      case Init::constant:
        for (float& v : t.values()) v = static_cast<float>(spec.fill);
        break;
      case Init::identity_first:
        if (spec.shape.size() != 4 || spec.shape[2] != 1 || spec.shape[3] != 1) {
          throw UsageError("identity_first init needs a 1x1 kernel, got " + shape_str(spec.shape));
        }
        for (std::size_t o = 0; o < spec.shape[0]; ++o) t[o * spec.shape[1]] = 1.0f;
        break;
    }
    out.set(spec.name, std::move(t));
  }
  return out;
}

std::size_t spec_scalar_count(const std::vector<ParamSpec>& specs) {
  std::size_t n = 0;
  for (const ParamSpec& s : specs) n += shape_numel(s.shape);
  return n;
}

template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace sredge
