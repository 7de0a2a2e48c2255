#include "rdv2/tensor.hpp"

#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "rdv2/errors.hpp"

namespace rdv2 {

void retain_freed_memory() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

namespace {
void check_extents(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
    for (auto d : shape)
        if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
}
}  // namespace

Tensor::Tensor(Shape shape, double fill, DType dtype)
    : shape_(std::move(shape)), dtype_(dtype) {
    check_extents(shape_);
    data_.assign(shape_numel(shape_), dtype == DType::f32 ? static_cast<double>(static_cast<float>(fill)) : fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data, DType dtype)
    : shape_(std::move(shape)), data_(std::move(data)), dtype_(dtype) {
    check_extents(shape_);
    if (shape_numel(shape_) != data_.size())
        throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_str(shape_));
    if (dtype_ == DType::f32)
        for (auto& v : data_) v = static_cast<float>(v);
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values) {
    return Tensor(std::move(shape), std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= shape_.size()) throw DimensionError("axis " + std::to_string(i) + " out of range for " + shape_str(shape_));
    return shape_[i];
}

std::size_t Tensor::flat_index(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size()) throw DimensionError("index rank does not match " + shape_str(shape_));
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : idx) {
        if (i >= shape_[axis]) throw DimensionError("index out of range for " + shape_str(shape_));
        flat = flat * shape_[axis] + i;
        ++axis;
    }
    return flat;
}

double& Tensor::at(std::initializer_list<std::size_t> idx) { return data_[flat_index(idx)]; }
double Tensor::at(std::initializer_list<std::size_t> idx) const { return data_[flat_index(idx)]; }

double Tensor::item() const {
    if (data_.size() != 1) throw ContractError("item() requires a single-element tensor, got " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size())
        throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    out.dtype_ = dtype_;
    return out;
}

Tensor Tensor::cast(DType dtype) const {
    Tensor out = *this;
    out.dtype_ = dtype;
    if (dtype == DType::f32)
        for (auto& v : out.data_) v = static_cast<float>(v);
    return out;
}

void Tensor::fill(double v) {
    for (auto& x : data_) x = v;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

}  // namespace rdv2
