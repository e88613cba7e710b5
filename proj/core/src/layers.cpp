#include "unseg/layers.hpp"

#include <cmath>

namespace unseg {

template <typename T>
Parameter<T>& Module<T>::add_parameter(const std::string& name, Shape shape, Fill fill, std::size_t fan_in,
                                       InitContext& ctx) {
  auto p = std::make_unique<Parameter<T>>();
  p->name = name;
  p->shape = std::move(shape);
  if (ctx.mode == InitMode::kRandom) {
    p->value = Tensor<T>(p->shape);
    switch (fill) {
      case Fill::kZeros: break;
      case Fill::kOnes: p->value.fill(T{1}); break;
      case Fill::kKaimingUniform: {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (T& v : p->value.data()) v = static_cast<T>(ctx.rng.uniform(-bound, bound));
        break;
      }
    }
  }
  Parameter<T>& ref = *p;
  params_.emplace_back(name, std::move(p));
  return ref;
}

template <typename T>
Tensor<T>& Module<T>::add_buffer(const std::string& name, Shape shape, T value, InitContext& ctx) {
  auto t = std::make_unique<Tensor<T>>();
  if (ctx.mode == InitMode::kRandom) *t = Tensor<T>(std::move(shape), value);
  Tensor<T>& ref = *t;
  buffers_.emplace_back(name, std::move(t));
  return ref;
}

template <typename T>
void Module<T>::collect(const std::string& prefix, std::vector<NamedParameter<T>>& out) {
  for (auto& [name, p] : params_) out.push_back({prefix + name, p.get()});
  for (auto& [name, child] : children_) child->collect(prefix + name + ".", out);
}

template <typename T>
void Module<T>::collect(const std::string& prefix, std::vector<NamedBuffer<T>>& out) {
  for (auto& [name, b] : buffers_) out.push_back({prefix + name, b.get()});
  for (auto& [name, child] : children_) child->collect(prefix + name + ".", out);
}

template <typename T>
std::vector<NamedParameter<T>> Module<T>::named_parameters() {
  std::vector<NamedParameter<T>> out;
  collect("", out);
  return out;
}

template <typename T>
std::vector<NamedBuffer<T>> Module<T>::named_buffers() {
  std::vector<NamedBuffer<T>> out;
  collect("", out);
  return out;
}

template <typename T>
std::vector<Parameter<T>*> Module<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& np : named_parameters()) out.push_back(np.param);
  return out;
}

template <typename T>
std::size_t Module<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p->numel();
  for (const auto& [name, child] : children_) n += child->parameter_count();
  return n;
}

template <typename T>
void Module<T>::zero_grad() {
  for (Parameter<T>* p : parameters()) p->zero_grad();
}

template <typename T>
void Module<T>::set_mode(NormMode mode) {
  mode_ = mode;
  for (auto& [name, child] : children_) child->set_mode(mode);
}

template <typename T>
Conv2d<T>::Conv2d(const ConvSpec& spec, InitContext& ctx) : spec_(spec) {
  spec_.validate();
  const std::size_t fan_in = spec.in_channels / spec.groups * spec.kernel * spec.kernel;
  weight_ = &this->add_parameter("weight", spec.weight_shape(), Module<T>::Fill::kKaimingUniform, fan_in, ctx);
  if (spec.has_bias) bias_ = &this->add_parameter("bias", Shape{spec.out_channels}, Module<T>::Fill::kZeros, 0, ctx);
}

template <typename T>
Var<T> Conv2d<T>::operator()(const Var<T>& x) {
  Tape<T>& tape = x.tape();
  return conv2d(x, tape.param(*weight_), bias_ ? tape.param(*bias_) : Var<T>(), spec_);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels, InitContext& ctx) : spec_(NormSpec::batchnorm(channels)) {
  gamma_ = &this->add_parameter("gamma", Shape{channels}, Module<T>::Fill::kOnes, 0, ctx);
  beta_ = &this->add_parameter("beta", Shape{channels}, Module<T>::Fill::kZeros, 0, ctx);
  running_mean_ = &this->add_buffer("running_mean", Shape{channels}, T{0}, ctx);
  running_var_ = &this->add_buffer("running_var", Shape{channels}, T{1}, ctx);
}

template <typename T>
Var<T> BatchNorm2d<T>::operator()(const Var<T>& x) {
  NormSpec spec = spec_;
  spec.mode = this->mode();
  Tape<T>& tape = x.tape();
  return batchnorm(x, tape.param(*gamma_), tape.param(*beta_), *running_mean_, *running_var_, spec);
}

template <typename T>
LayerNorm2d<T>::LayerNorm2d(std::size_t channels, InitContext& ctx) : spec_(NormSpec::layernorm(channels)) {
  gamma_ = &this->add_parameter("gamma", Shape{channels}, Module<T>::Fill::kOnes, 0, ctx);
  beta_ = &this->add_parameter("beta", Shape{channels}, Module<T>::Fill::kZeros, 0, ctx);
}

template <typename T>
Var<T> LayerNorm2d<T>::operator()(const Var<T>& x) {
  Tape<T>& tape = x.tape();
  return layernorm_channels(x, tape.param(*gamma_), tape.param(*beta_), spec_);
}

template <typename T>
Grn<T>::Grn(std::size_t channels, InitContext& ctx) {
  gamma_ = &this->add_parameter("gamma", Shape{channels}, Module<T>::Fill::kZeros, 0, ctx);
  beta_ = &this->add_parameter("beta", Shape{channels}, Module<T>::Fill::kZeros, 0, ctx);
}

template <typename T>
Var<T> Grn<T>::operator()(const Var<T>& x) {
  Tape<T>& tape = x.tape();
  return grn(x, tape.param(*gamma_), tape.param(*beta_));
}

template class Module<float>;
template class Module<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class LayerNorm2d<float>;
template class LayerNorm2d<double>;
template class Grn<float>;
template class Grn<double>;

}  // namespace unseg
