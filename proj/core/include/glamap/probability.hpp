#pragma once

#include "glamap/grid.hpp"
#include "glamap/nn/tensor.hpp"

namespace glamap {

/// Per-pixel class probabilities (class, row, col); every pixel sums to 1.
struct ProbabilityRaster {
    nn::Tensor probs;

    int num_classes() const { return probs.defined() ? probs.dim(0) : 0; }
    int rows() const { return probs.defined() ? probs.dim(1) : 0; }
    int cols() const { return probs.defined() ? probs.dim(2) : 0; }

    /// Throws if any pixel's class probabilities deviate from summing to 1.
    void validate_normalized(double tol = 1e-6) const;

    /// Per-pixel argmax (1 = glacier for the binary case).
    MaskGrid argmax_mask() const;
};

}  // namespace glamap
