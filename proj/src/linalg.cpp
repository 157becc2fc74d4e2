#include "seqci/linalg.hpp"

#include <cmath>
#include <string>

#include "seqci/common.hpp"

namespace seqci {

CholFactor cholesky(const Matrix& sigma) {
    if (sigma.rows() != sigma.cols()) {
        throw ShapeError("cholesky: matrix must be square, got " + std::to_string(sigma.rows()) +
                         "x" + std::to_string(sigma.cols()));
    }
    if (!sigma.allFinite()) throw ShapeError("cholesky: matrix has non-finite entries");
    const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
    const double asym = (sigma - sigma.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale) {
        throw ShapeError("cholesky: matrix is not symmetric (max asymmetry " +
                         std::to_string(asym) + ")");
    }
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) {
        throw NotPositiveDefiniteError("cholesky: matrix is not positive-definite");
    }
    CholFactor f;
    f.lower = llt.matrixL();
    return f;
}

Vector sample_mvn(const Vector& mean, const CholFactor& factor, Rng& rng) {
    if (mean.size() != factor.order()) {
        throw ShapeError("sample_mvn: mean dimension " + std::to_string(mean.size()) +
                         " does not match factor order " + std::to_string(factor.order()));
    }
    Vector z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    Vector out = mean;
    out.noalias() += factor.lower.triangularView<Eigen::Lower>() * z;
    return out;
}

int sample_poisson(double lambda, Rng& rng) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ShapeError("sample_poisson: rate must be finite and non-negative");
    }
    if (lambda > 30.0) {
        throw ShapeError("sample_poisson: inversion sampler unsupported for lambda > 30");
    }
    if (lambda == 0.0) return 0;
    const double limit = std::exp(-lambda);
    int k = 0;
    double prod = rng.uniform();
    while (prod > limit) {
        ++k;
        prod *= rng.uniform();
    }
    return k;
}

int sample_bernoulli(double p, Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ShapeError("sample_bernoulli: p must lie in [0, 1]");
    }
    return rng.uniform() < p ? 1 : 0;
}

}  // namespace seqci
