#include "sscl/cca.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "sscl/errors.hpp"

namespace sscl {

namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

Matrix to_eigen(const FeatureMatrix& m) {
    Matrix out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m.at(i, j);
    }
    return out;
}

void check_alignment(const FeatureMatrix& r, const FeatureMatrix& z) {
    if (r.rows != z.rows) {
        throw AlignmentError("branch sample counts differ: " + std::to_string(r.rows) + " vs " +
                             std::to_string(z.rows));
    }
    if (!r.sample_ids.empty() && !z.sample_ids.empty()) {
        for (std::size_t i = 0; i < r.rows; ++i) {
            if (r.sample_ids[i] != z.sample_ids[i]) {
                throw AlignmentError("sample id mismatch at row " + std::to_string(i) + ": '" +
                                     r.sample_ids[i] + "' vs '" + z.sample_ids[i] + "'");
            }
        }
    }
}

// Inverse square root of a symmetric positive definite matrix via its
// eigendecomposition.
Matrix inv_sqrt(const Matrix& s) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(s);
    if (es.info() != Eigen::Success) {
        throw NumericalError("eigendecomposition failed; try a larger ridge");
    }
    const Vector vals = es.eigenvalues();
    Vector inv_root(vals.size());
    for (Eigen::Index i = 0; i < vals.size(); ++i) {
        if (!(vals(i) > 0.0) || !std::isfinite(vals(i))) {
            throw NumericalError("covariance matrix is not positive definite; try a larger ridge");
        }
        inv_root(i) = 1.0 / std::sqrt(vals(i));
    }
    return es.eigenvectors() * inv_root.asDiagonal() * es.eigenvectors().transpose();
}

double default_ridge(const Matrix& cov) {
    return 1e-4 * cov.trace() / static_cast<double>(cov.rows());
}

} // namespace

Covariances covariances(const FeatureMatrix& r, const FeatureMatrix& z, double ridge) {
    check_alignment(r, z);
    if (r.rows < 2) throw DegenerateInputError("need at least 2 samples for covariances");
    if (ridge < 0.0) throw ParameterError("ridge must be non-negative");

    Matrix rm = to_eigen(r);
    Matrix zm = to_eigen(z);
    const Vector mean_r = rm.colwise().mean();
    const Vector mean_z = zm.colwise().mean();
    rm.rowwise() -= mean_r.transpose();
    zm.rowwise() -= mean_z.transpose();

    const double inv = 1.0 / static_cast<double>(r.rows - 1);
    const Matrix s_rr = rm.transpose() * rm * inv + ridge * Matrix::Identity(rm.cols(), rm.cols());
    const Matrix s_zz = zm.transpose() * zm * inv + ridge * Matrix::Identity(zm.cols(), zm.cols());
    const Matrix s_rz = rm.transpose() * zm * inv;

    Covariances out;
    // Eigen stores column-major; the within-branch blocks are symmetric so
    // only S_rz needs an explicit transpose into row-major.
    out.s_rr.assign(s_rr.data(), s_rr.data() + s_rr.size());
    out.s_zz.assign(s_zz.data(), s_zz.data() + s_zz.size());
    const Matrix s_rz_rm = s_rz.transpose();
    out.s_rz.assign(s_rz_rm.data(), s_rz_rm.data() + s_rz_rm.size());
    out.mean_r.assign(mean_r.data(), mean_r.data() + mean_r.size());
    out.mean_z.assign(mean_z.data(), mean_z.data() + mean_z.size());
    return out;
}

CcaFusionModel fit_cca(const FeatureMatrix& r, const FeatureMatrix& z, double ridge, std::size_t d) {
    check_alignment(r, z);
    if (r.rows < 2) throw DegenerateInputError("need at least 2 samples to fit CCA");

    Matrix rm = to_eigen(r);
    Matrix zm = to_eigen(z);
    const Vector mean_r = rm.colwise().mean();
    const Vector mean_z = zm.colwise().mean();
    rm.rowwise() -= mean_r.transpose();
    zm.rowwise() -= mean_z.transpose();

    const double inv = 1.0 / static_cast<double>(r.rows - 1);
    Matrix s_rr = rm.transpose() * rm * inv;
    Matrix s_zz = zm.transpose() * zm * inv;
    const Matrix s_rz = rm.transpose() * zm * inv;

    const double ridge_r = ridge < 0.0 ? default_ridge(s_rr) : ridge;
    const double ridge_z = ridge < 0.0 ? default_ridge(s_zz) : ridge;
    s_rr += ridge_r * Matrix::Identity(s_rr.rows(), s_rr.cols());
    s_zz += ridge_z * Matrix::Identity(s_zz.rows(), s_zz.cols());

    const Matrix s_rr_inv_sqrt = inv_sqrt(s_rr);
    const Matrix s_zz_inv_sqrt = inv_sqrt(s_zz);

    // G1 = S_rr^{-1/2} S_rz S_zz^{-1} S_zr S_rr^{-1/2}; its eigenvalues are
    // the squared canonical correlations.
    const Matrix c = s_rr_inv_sqrt * s_rz * s_zz_inv_sqrt;  // whitened cross-covariance
    Matrix g1 = c * c.transpose();
    g1 = 0.5 * (g1 + g1.transpose());

    Eigen::SelfAdjointEigenSolver<Matrix> es(g1);
    if (es.info() != Eigen::Success) throw NumericalError("CCA eigendecomposition failed");
    const Vector eigvals = es.eigenvalues();   // ascending
    const Matrix eigvecs = es.eigenvectors();
    for (Eigen::Index i = 0; i < eigvals.size(); ++i) {
        if (!std::isfinite(eigvals(i))) throw NumericalError("non-finite eigenvalue; try a larger ridge");
    }

    const std::size_t max_pairs = static_cast<std::size_t>(std::min(s_rr.rows(), s_zz.rows()));
    std::vector<std::size_t> order;
    for (Eigen::Index i = eigvals.size() - 1; i >= 0; --i) {
        order.push_back(static_cast<std::size_t>(i));
    }

    std::size_t retained = 0;
    if (d == 0) {
        for (const std::size_t i : order) {
            if (eigvals(static_cast<Eigen::Index>(i)) > 1e-8) ++retained;
        }
        retained = std::min(retained, max_pairs);
    } else {
        retained = std::min(d, max_pairs);
    }
    if (retained == 0) throw NumericalError("no canonical pair above the retention threshold");

    CcaFusionModel model;
    model.dim_r = static_cast<std::size_t>(s_rr.rows());
    model.dim_z = static_cast<std::size_t>(s_zz.rows());
    model.d = retained;
    model.ridge = ridge < 0.0 ? ridge_r : ridge;
    model.mean_r.assign(mean_r.data(), mean_r.data() + mean_r.size());
    model.mean_z.assign(mean_z.data(), mean_z.data() + mean_z.size());
    model.w_r.assign(model.dim_r * retained, 0.0);
    model.w_z.assign(model.dim_z * retained, 0.0);
    model.correlations.resize(retained);

    const Matrix s_zz_inv = s_zz_inv_sqrt * s_zz_inv_sqrt;
    for (std::size_t pair = 0; pair < retained; ++pair) {
        const auto src = static_cast<Eigen::Index>(order[pair]);
        const double lambda_sq = std::max(eigvals(src), 0.0);
        const double lambda = std::sqrt(lambda_sq);
        Vector u = eigvecs.col(src);

        // Deterministic sign: largest-magnitude component of u is positive.
        Eigen::Index arg_max = 0;
        u.cwiseAbs().maxCoeff(&arg_max);
        if (u(arg_max) < 0.0) u = -u;

        Vector alpha = s_rr_inv_sqrt * u;
        // v is the paired eigenvector of G2; beta = S_zz^{-1/2} v reduces to
        // S_zz^{-1} S_zr alpha / lambda.
        Vector beta;
        if (lambda > 1e-12) {
            beta = s_zz_inv * s_rz.transpose() * alpha / lambda;
        } else {
            beta = Vector::Zero(s_zz.rows());
        }

        // Align to non-negative training correlation.
        const Vector va = rm * alpha;
        const Vector vb = zm * beta;
        const double corr_num = va.dot(vb);
        if (corr_num < 0.0) beta = -beta;

        model.correlations[pair] = lambda;
        for (std::size_t i = 0; i < model.dim_r; ++i) {
            model.w_r[i * retained + pair] = alpha(static_cast<Eigen::Index>(i));
        }
        for (std::size_t i = 0; i < model.dim_z; ++i) {
            model.w_z[i * retained + pair] = beta(static_cast<Eigen::Index>(i));
        }
    }
    return model;
}

VariatePair canonical_variates(const CcaFusionModel& model, const FeatureMatrix& r_new,
                               const FeatureMatrix& z_new) {
    check_alignment(r_new, z_new);
    if (r_new.cols != model.dim_r || z_new.cols != model.dim_z) {
        throw ShapeError("feature dimensions do not match the fitted model (" +
                         std::to_string(r_new.cols) + "/" + std::to_string(z_new.cols) + " vs " +
                         std::to_string(model.dim_r) + "/" + std::to_string(model.dim_z) + ")");
    }
    VariatePair out;
    out.rows = r_new.rows;
    out.cols = model.d;
    out.a.assign(out.rows * out.cols, 0.0);
    out.b.assign(out.rows * out.cols, 0.0);
    for (std::size_t i = 0; i < out.rows; ++i) {
        for (std::size_t p = 0; p < model.d; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < model.dim_r; ++j) {
                acc += (r_new.at(i, j) - model.mean_r[j]) * model.w_r[j * model.d + p];
            }
            out.a[i * model.d + p] = acc;
            acc = 0.0;
            for (std::size_t j = 0; j < model.dim_z; ++j) {
                acc += (z_new.at(i, j) - model.mean_z[j]) * model.w_z[j * model.d + p];
            }
            out.b[i * model.d + p] = acc;
        }
    }
    return out;
}

FeatureMatrix fuse(const CcaFusionModel& model, const FeatureMatrix& r_new, const FeatureMatrix& z_new) {
    const VariatePair pair = canonical_variates(model, r_new, z_new);
    FeatureMatrix out;
    out.rows = pair.rows;
    out.cols = pair.cols;
    out.branch = FeatureBranch::fused;
    out.sample_ids = r_new.sample_ids.empty() ? z_new.sample_ids : r_new.sample_ids;
    out.values.resize(pair.a.size());
    for (std::size_t i = 0; i < pair.a.size(); ++i) out.values[i] = pair.a[i] + pair.b[i];
    return out;
}

std::string fusion_report_json(const CcaFusionModel& model) {
    const nlohmann::json j = {
        {"format", "sscl-fusion-report-v1"},
        {"d", model.d},
        {"ridge", model.ridge},
        {"correlations", model.correlations},
    };
    return j.dump(2);
}

} // namespace sscl
