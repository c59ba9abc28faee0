#pragma once

#include <vector>

#include "otrecon/errors.hpp"

namespace otrecon {

// Iterative radix-2 complex FFT on interleaved (re, im) double arrays.
// Sizes are powers of two; the transport stencil chooses its padding so
// this is never a restriction. Plans hold the bit-reversal permutation and
// twiddle tables and are immutable after construction.
class Fft1D {
public:
    explicit Fft1D(int n);

    int size() const { return n_; }

    // In-place transform of n interleaved complex values. The inverse is
    // unscaled; callers divide by n (the 2-D wrapper does this).
    void forward(double* data) const { transform(data, false); }
    void inverse(double* data) const { transform(data, true); }

private:
    void transform(double* data, bool inverse) const;

    int n_;
    int log2n_;
    std::vector<int> bitrev_;
    std::vector<double> twiddle_; // interleaved, per stage, forward sign
};

// Row-column 2-D FFT over a rows x cols interleaved complex array.
class Fft2D {
public:
    Fft2D(int rows, int cols);

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    void forward(double* data) const;
    void inverse(double* data) const; // scaled by 1/(rows*cols)

private:
    void columns(double* data, bool inverse) const;

    int rows_, cols_;
    Fft1D row_plan_;
    Fft1D col_plan_;
};

int next_pow2(int n);

} // namespace otrecon
