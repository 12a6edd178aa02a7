#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "htru/common.hpp"

namespace htru {

// Dense row-major double tensor. Plain container; math lives in kernels.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::initializer_list<int> dims) : shape(dims) {
    data.assign(size_from_shape(), 0.0);
  }
  explicit Tensor(const std::vector<int>& dims) : shape(dims) {
    data.assign(size_from_shape(), 0.0);
  }

  size_t size_from_shape() const {
    size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw Error("Tensor: negative dimension");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  size_t size() const { return data.size(); }
  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }
  void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

}  // namespace htru
