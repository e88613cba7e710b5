#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "unseg/autograd.hpp"
#include "unseg/nn_ops.hpp"
#include "unseg/rng.hpp"

namespace unseg {

// How parameters are created. Meta mode records shapes only, which lets
// the full-size presets be counted without allocating their weights.
enum class InitMode { kRandom, kMeta };

struct InitContext {
  InitMode mode = InitMode::kRandom;
  Rng rng{0};

  static InitContext random(std::uint64_t seed) { return {InitMode::kRandom, Rng(seed)}; }
  static InitContext meta() { return {InitMode::kMeta, Rng(0)}; }
};

template <typename T>
struct NamedParameter {
  std::string name;
  Parameter<T>* param;
};

template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* tensor;
};

// Owns parameters, non-trainable buffers and child modules. Names are
// dotted paths in registration order, which is also checkpoint order.
template <typename T>
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  std::vector<NamedParameter<T>> named_parameters();
  std::vector<NamedBuffer<T>> named_buffers();
  std::vector<Parameter<T>*> parameters();
  std::size_t parameter_count() const;
  void zero_grad();

  // Propagates to every batchnorm below this module.
  void set_mode(NormMode mode);
  NormMode mode() const noexcept { return mode_; }

 protected:
  enum class Fill { kZeros, kOnes, kKaimingUniform };

  Parameter<T>& add_parameter(const std::string& name, Shape shape, Fill fill, std::size_t fan_in,
                              InitContext& ctx);
  Tensor<T>& add_buffer(const std::string& name, Shape shape, T value, InitContext& ctx);
  template <typename M>
  M& add_module(const std::string& name, std::unique_ptr<M> module) {
    M& ref = *module;
    children_.emplace_back(name, std::move(module));
    return ref;
  }

 private:
  void collect(const std::string& prefix, std::vector<NamedParameter<T>>& out);
  void collect(const std::string& prefix, std::vector<NamedBuffer<T>>& out);

  std::vector<std::pair<std::string, std::unique_ptr<Parameter<T>>>> params_;
  std::vector<std::pair<std::string, std::unique_ptr<Tensor<T>>>> buffers_;
  std::vector<std::pair<std::string, std::unique_ptr<Module<T>>>> children_;
  NormMode mode_ = NormMode::kTrain;
};

template <typename T>
class Conv2d : public Module<T> {
 public:
  // Kaiming-uniform weights (fan-in, ReLU gain); zero bias.
  Conv2d(const ConvSpec& spec, InitContext& ctx);
  Var<T> operator()(const Var<T>& x);
  const ConvSpec& spec() const noexcept { return spec_; }
  Parameter<T>& weight() { return *weight_; }
  Parameter<T>* bias() { return bias_; }

 private:
  ConvSpec spec_;
  Parameter<T>* weight_;
  Parameter<T>* bias_ = nullptr;
};

template <typename T>
class BatchNorm2d : public Module<T> {
 public:
  BatchNorm2d(std::size_t channels, InitContext& ctx);
  Var<T> operator()(const Var<T>& x);
  Parameter<T>& gamma() { return *gamma_; }
  Tensor<T>& running_mean() { return *running_mean_; }
  Tensor<T>& running_var() { return *running_var_; }

 private:
  NormSpec spec_;
  Parameter<T>* gamma_;
  Parameter<T>* beta_;
  Tensor<T>* running_mean_;
  Tensor<T>* running_var_;
};

template <typename T>
class LayerNorm2d : public Module<T> {
 public:
  LayerNorm2d(std::size_t channels, InitContext& ctx);
  Var<T> operator()(const Var<T>& x);
  Parameter<T>& gamma() { return *gamma_; }

 private:
  NormSpec spec_;
  Parameter<T>* gamma_;
  Parameter<T>* beta_;
};

template <typename T>
class Grn : public Module<T> {
 public:
  // gamma = beta = 0, so a fresh layer is the identity.
  Grn(std::size_t channels, InitContext& ctx);
  Var<T> operator()(const Var<T>& x);

 private:
  Parameter<T>* gamma_;
  Parameter<T>* beta_;
};

extern template class Module<float>;
extern template class Module<double>;
extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class BatchNorm2d<float>;
extern template class BatchNorm2d<double>;
extern template class LayerNorm2d<float>;
extern template class LayerNorm2d<double>;
extern template class Grn<float>;
extern template class Grn<double>;

}  // namespace unseg
