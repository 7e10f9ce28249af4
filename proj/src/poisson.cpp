#include "provmark/poisson.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <vector>

namespace provmark {

Image poisson_blend(const Image& src, const Image& dst,
                    const ManipulationMask& mask, int direct_limit) {
  const int h = dst.height, w = dst.width, C = dst.channels;
  if (src.height != h || src.width != w || src.channels != C ||
      mask.height != h || mask.width != w)
    throw Error("ShapeMismatch", "poisson_blend: src/dst/mask sizes differ");

  auto inside = [&](int y, int x) { return mask.data[y * w + x] >= 0.5; };

  // index interior unknowns in scanline order
  std::vector<int> idx(static_cast<size_t>(h) * w, -1);
  int n = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (inside(y, x)) {
        if (y == 0 || y == h - 1 || x == 0 || x == w - 1)
          throw Error("MaskTouchesBorder",
                      "blend mask reaches the image border");
        idx[static_cast<size_t>(y) * w + x] = n++;
      }
  if (n == 0) throw Error("EmptyMask", "blend mask has no interior pixels");

  const int dy[4] = {-1, 1, 0, 0};
  const int dx[4] = {0, 0, -1, 1};

  using SpMat = Eigen::SparseMatrix<Scalar>;
  SpMat A(n, n);
  {
    std::vector<Eigen::Triplet<Scalar>> trips;
    trips.reserve(static_cast<size_t>(n) * 5);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int i = idx[static_cast<size_t>(y) * w + x];
        if (i < 0) continue;
        trips.emplace_back(i, i, 4.0);
        for (int k = 0; k < 4; ++k) {
          const int j = idx[static_cast<size_t>(y + dy[k]) * w + (x + dx[k])];
          if (j >= 0) trips.emplace_back(i, j, -1.0);
        }
      }
    A.setFromTriplets(trips.begin(), trips.end());
  }

  // per-channel rhs: divergence of the source gradient field plus boundary
  Eigen::MatrixXd B(n, C);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int i = idx[static_cast<size_t>(y) * w + x];
        if (i < 0) continue;
        Scalar rhs = 0;
        for (int k = 0; k < 4; ++k) {
          const int ny = y + dy[k], nx = x + dx[k];
          rhs += src.at(c, y, x) - src.at(c, ny, nx);
          if (idx[static_cast<size_t>(ny) * w + nx] < 0) rhs += dst.at(c, ny, nx);
        }
        B(i, c) = rhs;
      }

  Eigen::MatrixXd X(n, C);
  if (n <= direct_limit) {
    Eigen::SimplicialLDLT<SpMat> solver(A);
    if (solver.info() != Eigen::Success)
      throw Error("SolverNotConverged", "sparse factorization failed");
    X = solver.solve(B);
  } else {
    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<Scalar>>
        cg(A);
    cg.setTolerance(1e-10);
    cg.setMaxIterations(10 * n);
    X = cg.solve(B);
  }
  for (int c = 0; c < C; ++c) {
    const Scalar resid = (A * X.col(c) - B.col(c)).cwiseAbs().maxCoeff();
    if (resid > 1e-5)
      throw Error("SolverNotConverged",
                  "residual " + std::to_string(resid) + " above 1e-5");
  }

  Image out = dst;
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int i = idx[static_cast<size_t>(y) * w + x];
        if (i < 0) continue;
        Scalar v = X(i, c);
        if (v < 0) v = 0;
        if (v > 1) v = 1;
        out.at(c, y, x) = v;
      }
  return out;
}

}  // namespace provmark
