#pragma once

#include <string>
#include <vector>

#include "sscl/matrixio.hpp"

namespace sscl {

// Fitted CCA between the waveform-branch matrix R and spectrogram-branch
// matrix Z.  W_r and W_z project centered rows onto the d retained canonical
// pairs; fusion sums the paired variates.
struct CcaFusionModel {
    std::size_t dim_r = 0;
    std::size_t dim_z = 0;
    std::size_t d = 0;
    double ridge = 0.0;
    std::vector<double> w_r;           // dim_r x d, row-major
    std::vector<double> w_z;           // dim_z x d, row-major
    std::vector<double> correlations;  // length d, non-increasing, in (0, 1]
    std::vector<double> mean_r;        // length dim_r
    std::vector<double> mean_z;        // length dim_z
};

struct Covariances {
    std::vector<double> s_rr;  // dim_r x dim_r
    std::vector<double> s_zz;  // dim_z x dim_z
    std::vector<double> s_rz;  // dim_r x dim_z
    std::vector<double> mean_r;
    std::vector<double> mean_z;
};

// Mean-centered covariances with a ridge term on the within-branch blocks:
// S_xx = X^T X / (n - 1) + ridge * I,  S_rz = R^T Z / (n - 1).
Covariances covariances(const FeatureMatrix& r, const FeatureMatrix& z, double ridge);

// ridge < 0 selects the default 1e-4 * trace/dim per branch; d == 0 retains
// every pair with squared correlation above 1e-8.
CcaFusionModel fit_cca(const FeatureMatrix& r, const FeatureMatrix& z, double ridge = -1.0,
                       std::size_t d = 0);

struct VariatePair {
    std::vector<double> a;  // n x d, row-major (waveform-branch variates)
    std::vector<double> b;  // n x d (spectrogram-branch variates)
    std::size_t rows = 0;
    std::size_t cols = 0;
};

VariatePair canonical_variates(const CcaFusionModel& model, const FeatureMatrix& r_new,
                               const FeatureMatrix& z_new);

// Summed canonical variates, T = A + B.
FeatureMatrix fuse(const CcaFusionModel& model, const FeatureMatrix& r_new, const FeatureMatrix& z_new);

// JSON report: d, ridge, lambda spectrum sorted descending.
std::string fusion_report_json(const CcaFusionModel& model);

} // namespace sscl
