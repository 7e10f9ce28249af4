#pragma once

#include "provmark/datamodel.hpp"

namespace provmark {

// Seamless cloning: inside the mask each channel solves the discrete Poisson
// equation with the source's gradient field and Dirichlet boundary taken from
// dst; outside the mask the output is bit-identical to dst. Interior result
// clamped to [0,1].
//
// Direct sparse factorization up to `direct_limit` unknowns, Jacobi-
// preconditioned conjugate gradient beyond. Throws EmptyMask,
// MaskTouchesBorder, ShapeMismatch, SolverNotConverged (residual inf-norm
// above 1e-5).
Image poisson_blend(const Image& src, const Image& dst,
                    const ManipulationMask& mask, int direct_limit = 10000);

}  // namespace provmark
