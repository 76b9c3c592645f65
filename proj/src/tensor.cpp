#include "cmpnet/tensor.hpp"

#include <algorithm>
#include <stdexcept>

namespace cmpnet {

std::string to_string(const Shape4& s) {
  return "[" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) +
         "," + std::to_string(s.w) + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape4 shape, std::vector<T> data)
    : shape_(shape), data_(data.begin(), data.end()) {
  if (data_.size() != shape_.numel()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + to_string(shape_));
  }
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace cmpnet
