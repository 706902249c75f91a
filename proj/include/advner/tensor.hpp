#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace advner {

// Shape of a dense row-major array, rank 1..3.
struct Shape {
  std::vector<int64_t> dims;

  Shape() = default;
  Shape(std::initializer_list<int64_t> d) : dims(d) {}
  explicit Shape(std::vector<int64_t> d) : dims(std::move(d)) {}

  int rank() const { return static_cast<int>(dims.size()); }
  int64_t dim(int i) const { return dims[static_cast<size_t>(i)]; }
  int64_t numel() const {
    if (dims.empty()) return 0;
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;  // "[2 x 3]"
};

// Plain float32 value; the autodiff tape wraps these into graph nodes.
struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<float> d);  // throws DimensionError on mismatch

  static Tensor zeros(Shape s);
  static Tensor scalar(float v);

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }
};

}  // namespace advner
