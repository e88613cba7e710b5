#include "unseg/tensor.hpp"

#include <cmath>
#include <sstream>

namespace unseg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNotScalar: return "NotScalar";
    case ErrorCode::kOddSpatialDim: return "OddSpatialDim";
    case ErrorCode::kUnknownPreset: return "UnknownPreset";
    case ErrorCode::kBadSpatialDims: return "BadSpatialDims";
    case ErrorCode::kBadInputSize: return "BadInputSize";
    case ErrorCode::kEmptyList: return "EmptyList";
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kDecodeError: return "DecodeError";
    case ErrorCode::kSizeMismatch: return "SizeMismatch";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kEmptySplit: return "EmptySplit";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kPresetMismatch: return "PresetMismatch";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(what) + ": " + shape_to_string(a) + " vs " + shape_to_string(b));
  }
}

void require_rank(const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + ": expected rank " +
                                               std::to_string(rank) + ", got " +
                                               shape_to_string(shape));
  }
}

namespace {
void validate_shape(const Shape& shape) {
  if (shape.empty()) throw Error(ErrorCode::kShapeMismatch, "tensor shape must be non-empty");
  for (std::size_t d : shape) {
    if (d == 0) throw Error(ErrorCode::kShapeMismatch, "zero-sized dimension in " + shape_to_string(shape));
  }
}
}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_numel(shape_)) {
    throw Error(ErrorCode::kShapeMismatch, "data length " + std::to_string(data_.size()) +
                                               " does not match shape " + shape_to_string(shape_));
  }
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "axis " + std::to_string(axis) + " out of range for " +
                                               shape_to_string(shape_));
  }
  return shape_[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) {
    throw Error(ErrorCode::kNotScalar, "item() on tensor of shape " + shape_to_string(shape_));
  }
  return data_[0];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
Tensor<T>& Tensor<T>::operator+=(const Tensor& other) {
  require_same_shape(shape_, other.shape_, "tensor +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace unseg
