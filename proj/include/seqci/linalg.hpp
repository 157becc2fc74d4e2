// Dense linear algebra and distribution samplers used by the simulator and
// the neural engine. Matrices are Eigen double matrices; everything here is
// 64-bit precision.
#pragma once

#include <Eigen/Dense>

#include "seqci/rng.hpp"

namespace seqci {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Lower-triangular Cholesky factor L with L * L^T = source matrix.
struct CholFactor {
    Matrix lower;
    Eigen::Index order() const { return lower.rows(); }
};

// Cholesky factorization of a symmetric positive-definite matrix.
// Throws ShapeError for non-square/asymmetric/non-finite input and
// NotPositiveDefiniteError when a pivot fails.
CholFactor cholesky(const Matrix& sigma);

// mean + L * z with z iid standard normal drawn from rng.
Vector sample_mvn(const Vector& mean, const CholFactor& factor, Rng& rng);

// Poisson(lambda) via Knuth inversion. Supported for lambda in [0, 30];
// larger rates are rejected (the simulator uses lambda = 2.5).
int sample_poisson(double lambda, Rng& rng);

// 1 with probability p, 0 otherwise. p must lie in [0, 1]; the endpoints
// are exact (p=0 never fires, p=1 always fires).
int sample_bernoulli(double p, Rng& rng);

}  // namespace seqci
