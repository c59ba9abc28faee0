#include "otrecon/fft.hpp"

#include <cmath>

namespace otrecon {

namespace {
constexpr double PI = 3.14159265358979323846;
}

int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

Fft1D::Fft1D(int n) : n_(n) {
    if (n < 1 || (n & (n - 1)) != 0)
        throw ContractError("Fft1D: size must be a power of two");
    log2n_ = 0;
    while ((1 << log2n_) < n) ++log2n_;
    bitrev_.resize(n);
    for (int i = 0; i < n; ++i) {
        int r = 0;
        for (int b = 0; b < log2n_; ++b)
            if (i & (1 << b)) r |= 1 << (log2n_ - 1 - b);
        bitrev_[i] = r;
    }
    // one table per stage, stage s has half = 2^s distinct twiddles
    twiddle_.resize(static_cast<std::size_t>(2 * (n > 1 ? n - 1 : 0)) + 2);
    std::size_t off = 0;
    for (int s = 0; s < log2n_; ++s) {
        int half = 1 << s;
        for (int k = 0; k < half; ++k) {
            double ang = -PI * static_cast<double>(k) / static_cast<double>(half);
            twiddle_[off + 2 * k] = std::cos(ang);
            twiddle_[off + 2 * k + 1] = std::sin(ang);
        }
        off += static_cast<std::size_t>(2 * half);
    }
}

void Fft1D::transform(double* a, bool inverse) const {
    const int n = n_;
    for (int i = 0; i < n; ++i) {
        int j = bitrev_[i];
        if (j > i) {
            std::swap(a[2 * i], a[2 * j]);
            std::swap(a[2 * i + 1], a[2 * j + 1]);
        }
    }
    std::size_t off = 0;
    for (int s = 0; s < log2n_; ++s) {
        int half = 1 << s;
        int step = half << 1;
        for (int base = 0; base < n; base += step) {
            for (int k = 0; k < half; ++k) {
                double wr = twiddle_[off + 2 * k];
                double wi = twiddle_[off + 2 * k + 1];
                if (inverse) wi = -wi;
                int i0 = base + k;
                int i1 = i0 + half;
                double xr = a[2 * i1], xi = a[2 * i1 + 1];
                double tr = xr * wr - xi * wi;
                double ti = xr * wi + xi * wr;
                double ur = a[2 * i0], ui = a[2 * i0 + 1];
                a[2 * i0] = ur + tr;
                a[2 * i0 + 1] = ui + ti;
                a[2 * i1] = ur - tr;
                a[2 * i1 + 1] = ui - ti;
            }
        }
        off += static_cast<std::size_t>(2 * half);
    }
}

Fft2D::Fft2D(int rows, int cols)
    : rows_(rows), cols_(cols), row_plan_(cols), col_plan_(rows) {}

void Fft2D::columns(double* data, bool inverse) const {
    std::vector<double> scratch(static_cast<std::size_t>(2 * rows_));
    for (int c = 0; c < cols_; ++c) {
        for (int r = 0; r < rows_; ++r) {
            scratch[2 * r] = data[2 * (static_cast<std::size_t>(r) * cols_ + c)];
            scratch[2 * r + 1] = data[2 * (static_cast<std::size_t>(r) * cols_ + c) + 1];
        }
        if (inverse)
            col_plan_.inverse(scratch.data());
        else
            col_plan_.forward(scratch.data());
        for (int r = 0; r < rows_; ++r) {
            data[2 * (static_cast<std::size_t>(r) * cols_ + c)] = scratch[2 * r];
            data[2 * (static_cast<std::size_t>(r) * cols_ + c) + 1] = scratch[2 * r + 1];
        }
    }
}

void Fft2D::forward(double* data) const {
    for (int r = 0; r < rows_; ++r)
        row_plan_.forward(data + 2 * static_cast<std::size_t>(r) * cols_);
    columns(data, false);
}

void Fft2D::inverse(double* data) const {
    for (int r = 0; r < rows_; ++r)
        row_plan_.inverse(data + 2 * static_cast<std::size_t>(r) * cols_);
    columns(data, true);
    double inv = 1.0 / (static_cast<double>(rows_) * static_cast<double>(cols_));
    std::size_t total = static_cast<std::size_t>(2) * rows_ * cols_;
    for (std::size_t i = 0; i < total; ++i) data[i] *= inv;
}

} // namespace otrecon
