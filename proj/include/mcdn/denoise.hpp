#pragma once

#include <algorithm>

#include "mcdn/datapipe.hpp"
#include "mcdn/network.hpp"

// Whole-volume denoising: every slice is restored from its 5-slice stack.
// Slices are processed in batches along the batch axis; inference is
// per-sample independent so results do not depend on the batch grouping.

namespace mcdn {

inline Volume denoise_volume(const Model& model, const Volume& noisy, int slice_batch = 8) {
    if (model.in_channels != kStackSlices)
        throw ValueError("denoise_volume requires a " + std::to_string(kStackSlices) +
                         "-channel model, got " + std::to_string(model.in_channels));
    if (model.out_channels != 1)
        throw ValueError("denoise_volume requires a single-channel residual model");
    const int X = noisy.dims[0], Y = noisy.dims[1], Z = noisy.dims[2];
    slice_batch = std::max(1, slice_batch);

    Volume out = noisy;
    for (int z0 = 0; z0 < Z; z0 += slice_batch) {
        const int nb = std::min(slice_batch, Z - z0);
        Tensor batch({nb, Y, X, kStackSlices});
        for (int b = 0; b < nb; ++b) {
            const Tensor stack = make_stack(noisy, z0 + b);
            std::copy(stack.data(), stack.data() + stack.size(),
                      batch.data() + static_cast<std::size_t>(b) * stack.size());
        }
        const Tensor pred = forward_infer(model, batch);
        for (int b = 0; b < nb; ++b)
            for (int y = 0; y < Y; ++y)
                for (int x = 0; x < X; ++x)
                    out.at(x, y, z0 + b) = noisy.at(x, y, z0 + b) - pred.at(b, y, x, 0);
    }
    return out;
}

} // namespace mcdn
