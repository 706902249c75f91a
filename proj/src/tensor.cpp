#include "advner/tensor.hpp"

#include <sstream>

#include "advner/errors.hpp"

namespace advner {

std::string Shape::str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) os << " x ";
    os << dims[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape.numel() != static_cast<int64_t>(data.size())) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape.str());
  }
}

Tensor Tensor::zeros(Shape s) {
  std::vector<float> d(static_cast<size_t>(s.numel()), 0.0f);
  return Tensor(std::move(s), std::move(d));
}

Tensor Tensor::scalar(float v) { return Tensor(Shape{1}, {v}); }

}  // namespace advner
