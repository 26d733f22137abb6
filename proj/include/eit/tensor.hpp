#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace eit {

using Shape = std::vector<std::size_t>;

// Storage tag. Arithmetic always runs in double; an f32 tensor has its values
// rounded to float precision when it is created or cast.
enum class DType { kF32, kF64 };

const char* dtype_name(DType dtype);
DType dtype_from_name(const std::string& name);

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array. Every extent is >= 1 and numel() == product(shape).
// A scalar is a tensor of shape {1}.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, DType dtype = DType::kF64);
  Tensor(Shape shape, std::vector<double> data, DType dtype = DType::kF64);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value) { return full({1}, value); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data_.size(); }
  DType dtype() const { return dtype_; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Bounds-checked multi-index access.
  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;

  double item() const;

  Tensor reshaped(Shape shape) const;
  Tensor cast(DType dtype) const;

  void fill(double value);
  // this += other (same shape).
  void accumulate(const Tensor& other);

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  // Bitwise equality of shape and values.
  bool bit_equal(const Tensor& other) const;

 private:
  std::size_t flat_index(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<double> data_;
  DType dtype_ = DType::kF64;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

struct NamedTensor {
  std::string name;
  Tensor value;
};

}  // namespace eit
