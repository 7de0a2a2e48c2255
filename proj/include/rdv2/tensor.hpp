#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace rdv2 {

using Shape = std::vector<std::size_t>;

/// Storage precision tag. Arithmetic always runs in double; an f32 tensor
/// holds values that are exactly representable as float and serializes as
/// 4-byte IEEE floats.
enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Keeps large freed buffers in the process heap instead of returning them to
/// the OS, so repeated tensor allocation does not pay page faults every time.
/// Call once at program start; a no-op outside glibc.
void retain_freed_memory();

/// Dense row-major n-dimensional array.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0, DType dtype = DType::f64);
    Tensor(Shape shape, std::vector<double> data, DType dtype = DType::f64);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, v); }
    static Tensor from(Shape shape, std::initializer_list<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t ndim() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const;
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    DType dtype() const noexcept { return dtype_; }

    std::span<double> data() & noexcept { return data_; }
    std::span<const double> data() const& noexcept { return data_; }
    // Rvalues hand over their storage so a range-for over a temporary stays valid.
    std::vector<double> data() && noexcept { return std::move(data_); }
    double* ptr() noexcept { return data_.data(); }
    const double* ptr() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Multi-index element access (bounds-checked).
    double& at(std::initializer_list<std::size_t> idx);
    double at(std::initializer_list<std::size_t> idx) const;

    double item() const;

    /// Same data, new extents; the element count must match.
    Tensor reshaped(Shape shape) const;
    /// Converts the storage tag; f32 rounds every value through float.
    Tensor cast(DType dtype) const;

    void fill(double v);
    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.dtype_ == b.dtype_ && a.data_ == b.data_;
    }

private:
    std::size_t flat_index(std::initializer_list<std::size_t> idx) const;

    Shape shape_;
    std::vector<double> data_;
    DType dtype_ = DType::f64;
};

/// Throws DimensionError naming both shapes when they differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace rdv2
