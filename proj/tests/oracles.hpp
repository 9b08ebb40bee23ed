#pragma once

// Deliberately naive reference implementations. They share nothing with the
// library kernels except the tensor container.

#include "slnscreen/ops.hpp"

#include <random>

namespace oracle {

using slns::BasicTensor;
using slns::Shape;

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const slns::ConvSpec& s, const BasicTensor<T>& k,
                      const BasicTensor<T>& b) {
    const long H = static_cast<long>(x.extent(0));
    const long W = static_cast<long>(x.extent(1));
    const long C = static_cast<long>(x.extent(2));
    const long kh = static_cast<long>(s.kernel_height);
    const long kw = static_cast<long>(s.kernel_width);
    const long st = static_cast<long>(s.stride);
    long oh = 0, ow = 0, top = 0, left = 0;
    if (s.padding == slns::Padding::valid) {
        oh = (H - kh) / st + 1;
        ow = (W - kw) / st + 1;
    } else {
        oh = (H + st - 1) / st;
        ow = (W + st - 1) / st;
        top = std::max(0L, (oh - 1) * st + kh - H) / 2;
        left = std::max(0L, (ow - 1) * st + kw - W) / 2;
    }
    const long O = static_cast<long>(s.out_channels);
    BasicTensor<T> y(Shape{static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), static_cast<std::size_t>(O)});
    for (long i = 0; i < oh; ++i)
        for (long j = 0; j < ow; ++j)
            for (long o = 0; o < O; ++o) {
                double acc = b[static_cast<std::size_t>(o)];
                for (long u = 0; u < kh; ++u)
                    for (long v = 0; v < kw; ++v) {
                        const long r = i * st + u - top;
                        const long c = j * st + v - left;
                        if (r < 0 || c < 0 || r >= H || c >= W) continue;
                        for (long ch = 0; ch < C; ++ch) {
                            acc += static_cast<double>(x.at(r, c, ch)) * k.at(u, v, ch, o);
                        }
                    }
                y.at(i, j, o) = static_cast<T>(acc);
            }
    return y;
}

template <typename T>
std::pair<BasicTensor<T>, std::vector<std::size_t>> maxpool2d(const BasicTensor<T>& x, std::size_t window,
                                                              std::size_t stride) {
    const std::size_t H = x.extent(0), W = x.extent(1), C = x.extent(2);
    const std::size_t oh = (H - window) / stride + 1, ow = (W - window) / stride + 1;
    BasicTensor<T> y(Shape{oh, ow, C});
    std::vector<std::size_t> arg(oh * ow * C);
    for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j)
            for (std::size_t c = 0; c < C; ++c) {
                bool first = true;
                T best{};
                std::size_t where = 0;
                for (std::size_t u = 0; u < window; ++u)
                    for (std::size_t v = 0; v < window; ++v) {
                        const std::size_t r = i * stride + u, q = j * stride + v;
                        const T val = x.at(r, q, c);
                        if (first || val > best) {
                            best = val;
                            where = (r * W + q) * C + c;
                            first = false;
                        }
                    }
                y.at(i, j, c) = best;
                arg[(i * ow + j) * C + c] = where;
            }
    return {y, arg};
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
    const std::size_t n = w.extent(0), m = w.extent(1);
    BasicTensor<T> y(Shape{m});
    for (std::size_t j = 0; j < m; ++j) {
        double acc = b[j];
        for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * w.at(i, j);
        y[j] = static_cast<T>(acc);
    }
    return y;
}

template <typename T>
BasicTensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    BasicTensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> d(lo, hi);
    for (T& v : t.values()) v = static_cast<T>(d(rng));
    return t;
}

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

} // namespace oracle
