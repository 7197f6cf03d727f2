#pragma once

#include <string>

#include "eftcl/trainer.hpp"

namespace eftcl {

/// Average-accuracy-after-task curves (TIL and CIL) as a standalone SVG.
/// The raw curve values are embedded in the <desc> element.
std::string accuracy_curves_svg(const AccuracyMatrix& til, const AccuracyMatrix& cil);

/// 8-bit grayscale PGM (single channel) or PPM (three channels) image grid
/// from a batch of generator outputs in [-1, 1].
std::string sample_grid_pnm(const Tensor& images, std::int64_t columns);

}  // namespace eftcl
