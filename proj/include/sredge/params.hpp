#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sredge/tensor.hpp"

namespace sredge {

/// splitmix64-seeded xoshiro256** generator. Output is identical on every
/// platform, which the determinism contract relies on.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

  /// Derive an independent stream from a list of integers.
  static std::uint64_t mix(std::initializer_list<std::uint64_t> parts);

 private:
  std::uint64_t s_[4];
};

enum class Init {
  kaiming_uniform,  ///< U(-b, b), b = 1 / sqrt(fan_in) (Kaiming-uniform, a = sqrt(5))
  zeros,
  constant,
  identity_first,  ///< 1x1 kernel routing input channel 0 to every output
};

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init = Init::kaiming_uniform;
  double fill = 0.0;
};

/// Named parameter tensors, ordered by name.
template <typename T>
class ParameterSet {
 public:
  using Map = std::map<std::string, Tensor<T>>;

  const Tensor<T>& at(const std::string& name) const;
  Tensor<T>& at(const std::string& name);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  void set(const std::string& name, Tensor<T> value) { tensors_[name] = std::move(value); }

  const Map& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }
  std::size_t scalar_count() const;

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& [k, v] : tensors_) out.set(k, v.template cast<U>());
    return out;
  }

  bool operator==(const ParameterSet& other) const = default;

 private:
  Map tensors_;
};

/// Materialise specs; draws happen in spec order from one stream.
ParameterSet<float> init_parameters(const std::vector<ParamSpec>& specs, std::uint64_t seed);

std::size_t spec_scalar_count(const std::vector<ParamSpec>& specs);

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

}  // namespace sredge
