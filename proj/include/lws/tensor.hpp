#pragma once

#include <cstddef>
#include <vector>

namespace lws {

// Flat row-major buffer with a shape tag. All model math works on raw
// pointers into these; the shape is carried for checkpointing and checks.
template <typename T>
struct tensor {
    std::vector<T> data;
    std::vector<int> shape;

    tensor() = default;

    static tensor zeros(std::vector<int> shape) {
        tensor t;
        long long n = 1;
        for (int d : shape) n *= d;
        t.data.assign((size_t)n, T(0));
        t.shape = std::move(shape);
        return t;
    }

    long long numel() const {
        long long n = 1;
        for (int d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }
};

} // namespace lws
