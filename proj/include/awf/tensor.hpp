#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace awf {

using Dim = std::int64_t;

/// Dense row-major n-dimensional array of doubles. The universal carrier for
/// images, feature maps, heatmaps and range grids in this project.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<Dim> shape);  // zero-filled
  Tensor(std::vector<Dim> shape, std::vector<double> data);

  static Tensor zeros(std::vector<Dim> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<Dim> shape, double value);

  const std::vector<Dim>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  Dim dim(std::size_t axis) const;
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  // Flat index helpers for the common layouts.
  std::size_t index2(Dim i, Dim j) const {
    return static_cast<std::size_t>(i * shape_[1] + j);
  }
  std::size_t index3(Dim c, Dim i, Dim j) const {
    return static_cast<std::size_t>((c * shape_[1] + i) * shape_[2] + j);
  }
  double& at2(Dim i, Dim j) { return data_[index2(i, j)]; }
  double at2(Dim i, Dim j) const { return data_[index2(i, j)]; }
  double& at3(Dim c, Dim i, Dim j) { return data_[index3(c, i, j)]; }
  double at3(Dim c, Dim i, Dim j) const { return data_[index3(c, i, j)]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

 private:
  std::vector<Dim> shape_;
  std::vector<double> data_;
};

std::size_t shape_numel(const std::vector<Dim>& shape);
std::string shape_to_string(const std::vector<Dim>& shape);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
Tensor hadamard(const Tensor& a, const Tensor& b);

/// Stacks two [C,H,W] tensors along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Throws awf::NumericError if any value is non-finite.
void ensure_finite(const Tensor& t, const char* context);

/// Raised on malformed files and wire data.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a computation produces or encounters non-finite values.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace awf
