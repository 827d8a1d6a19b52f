#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace qnav {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + ")";
}

/// Dense row-major array of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_size(shape_))
            throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_string(shape_));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// Row-major multi-index access; the index count must equal the rank.
    template <class... Idx>
    double& at(Idx... idx) {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }
    template <class... Idx>
    double at(Idx... idx) const {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    void reshape(Shape s) {
        if (shape_size(s) != data_.size())
            throw std::invalid_argument("cannot reshape " + shape_string(shape_) + " to " + shape_string(s));
        shape_ = std::move(s);
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != shape_.size()) throw std::invalid_argument("tensor index rank mismatch");
        std::size_t off = 0, k = 0;
        for (auto i : idx) {
            if (i >= shape_[k]) throw std::out_of_range("tensor index out of range");
            off = off * shape_[k++] + i;
        }
        return off;
    }

    Shape shape_;
    std::vector<double> data_;
};

/// One named trainable array with its gradient accumulator and Adam moments.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
};

/// Ordered collection of named parameters plus optimizer step counter.
/// Iteration order is insertion order, which fixes serialization order.
class ParamSet {
public:
    Param& add(const std::string& name, Tensor value) {
        if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
        const Shape s = value.shape();
        index_.emplace(name, params_.size());
        params_.push_back({name, std::move(value), Tensor(s), Tensor(s), Tensor(s)});
        return params_.back();
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Param& get(const std::string& name) {
        const auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
        return params_[it->second];
    }
    const Param& get(const std::string& name) const {
        return const_cast<ParamSet*>(this)->get(name);
    }

    Tensor& value(const std::string& name) { return get(name).value; }
    const Tensor& value(const std::string& name) const { return get(name).value; }
    Tensor& grad(const std::string& name) { return get(name).grad; }

    std::vector<Param>& params() noexcept { return params_; }
    const std::vector<Param>& params() const noexcept { return params_; }
    std::size_t count() const noexcept { return params_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.grad.fill(0.0);
    }

    long long step = 0;

    /// Same names in the same order with the same shapes.
    bool same_layout(const ParamSet& other) const {
        if (params_.size() != other.params_.size()) return false;
        for (std::size_t i = 0; i < params_.size(); ++i)
            if (params_[i].name != other.params_[i].name ||
                params_[i].value.shape() != other.params_[i].value.shape())
                return false;
        return true;
    }

private:
    std::vector<Param> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam update; clears gradients afterwards. Throws naming the
/// first parameter whose gradient is not finite, leaving all values untouched.
inline void adam_step(ParamSet& ps, const AdamConfig& cfg) {
    for (const auto& p : ps.params())
        if (!p.grad.all_finite()) throw std::runtime_error("non-finite gradient in parameter '" + p.name + "'");
    ++ps.step;
    const double t = static_cast<double>(ps.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& p : ps.params()) {
        double* w = p.value.data();
        double* g = p.grad.data();
        double* m = p.m.data();
        double* v = p.v.data();
        const std::size_t n = p.value.size();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            g[i] = 0.0;
        }
    }
}

/// Copy parameter values only; moments and step counter are untouched.
inline void copy_values(const ParamSet& from, ParamSet& to) {
    if (!from.same_layout(to)) throw std::invalid_argument("parameter layout mismatch");
    for (std::size_t i = 0; i < from.count(); ++i) to.params()[i].value = from.params()[i].value;
}

/// FNV-1a over the raw bytes of all parameter values; cheap change detector.
inline std::uint64_t value_checksum(const ParamSet& ps) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : ps.params()) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p.value.data());
        for (std::size_t i = 0; i < p.value.size() * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    }
    return h;
}

}  // namespace qnav
