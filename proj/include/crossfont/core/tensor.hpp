#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace crossfont {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

inline std::string shape_str(const std::vector<long>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major tensor with shared storage. Reshapes alias the same
/// buffer; clone() makes a deep copy.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
        size_ = 1;
        for (long d : shape_) {
            require(d >= 0, "Tensor: negative dimension in " + shape_str(shape_));
            size_ *= d;
        }
        data_ = std::shared_ptr<T[]>(new T[static_cast<std::size_t>(size_)]());
    }

    Tensor(std::vector<long> shape, std::shared_ptr<T[]> data, long size)
        : shape_(std::move(shape)), size_(size), data_(std::move(data)) {}

    static Tensor zeros(std::vector<long> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<long> shape, T v) {
        Tensor t(std::move(shape));
        std::fill(t.data(), t.data() + t.size(), v);
        return t;
    }

    static Tensor ones(std::vector<long> shape) { return full(std::move(shape), T(1)); }

    static Tensor scalar(T v) { return full({1}, v); }

    static Tensor from_vector(std::vector<long> shape, const std::vector<T>& v) {
        Tensor t(std::move(shape));
        require(static_cast<long>(v.size()) == t.size(),
                "Tensor::from_vector: size mismatch, got " + std::to_string(v.size()) +
                    " values for shape " + shape_str(t.shape()));
        std::copy(v.begin(), v.end(), t.data());
        return t;
    }

    bool defined() const { return data_ != nullptr; }
    const std::vector<long>& shape() const { return shape_; }
    long size() const { return size_; }
    long rank() const { return static_cast<long>(shape_.size()); }

    long rows() const {
        require(rank() == 2, "Tensor::rows: rank-2 required, have " + shape_str(shape_));
        return shape_[0];
    }
    long cols() const {
        require(rank() == 2, "Tensor::cols: rank-2 required, have " + shape_str(shape_));
        return shape_[1];
    }

    T* data() { return data_.get(); }
    const T* data() const { return data_.get(); }

    T& operator[](long i) { return data_[i]; }
    const T& operator[](long i) const { return data_[i]; }

    T& at(long r, long c) { return data_[r * shape_[1] + c]; }
    const T& at(long r, long c) const { return data_[r * shape_[1] + c]; }

    /// Alias with a new shape; element count must match.
    Tensor reshaped(std::vector<long> shape) const {
        long n = 1;
        for (long d : shape) n *= d;
        require(n == size_, "Tensor::reshaped: cannot view " + shape_str(shape_) + " as " +
                                shape_str(shape));
        return Tensor(std::move(shape), data_, size_);
    }

    Tensor clone() const {
        Tensor t(shape_);
        std::memcpy(t.data(), data(), sizeof(T) * static_cast<std::size_t>(size_));
        return t;
    }

    void fill(T v) { std::fill(data(), data() + size_, v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        const T* p = data();
        for (long i = 0; i < size_; ++i)
            if (!std::isfinite(static_cast<double>(p[i]))) return false;
        return true;
    }

    T max_abs() const {
        T m = 0;
        const T* p = data();
        for (long i = 0; i < size_; ++i) m = std::max(m, std::abs(p[i]));
        return m;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> t(shape_);
        const T* src = data();
        U* dst = t.data();
        for (long i = 0; i < size_; ++i) dst[i] = static_cast<U>(src[i]);
        return t;
    }

private:
    std::vector<long> shape_;
    long size_ = 0;
    std::shared_ptr<T[]> data_;
};

template <typename T>
inline double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(), "max_abs_diff: shape mismatch " + shape_str(a.shape()) +
                                        " vs " + shape_str(b.shape()));
    double m = 0;
    for (long i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

template <typename T>
inline bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.data(), b.data(), sizeof(T) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace crossfont
