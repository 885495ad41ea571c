#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "vislip/error.hpp"
#include "vislip/text_io.hpp"

namespace vislip {

/// Observation vectors as rows: landmark x/y pairs for shape, shape-normalised
/// pixel intensities for appearance.
using ObservationMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Mean plus orthonormal modes: x = mean + sum_i modes.col(i) * params[i].
/// Serves as both the landmark shape model and the appearance model.
struct LinearModel {
    Eigen::VectorXd mean;
    Eigen::MatrixXd modes;        // dim x mode_count, orthonormal columns
    Eigen::VectorXd eigenvalues;  // per retained mode, descending
    double total_variance = 0.0;  // sum of all eigenvalues, retained or not
    double retained_fraction = 1.0;
    std::string domain_note = "raw";

    Eigen::Index dim() const { return mean.size(); }
    Eigen::Index mode_count() const { return modes.cols(); }

    double explained_fraction() const {
        return total_variance > 0.0 ? eigenvalues.sum() / total_variance : 1.0;
    }
};

namespace detail {

/// Flips each column so its largest-magnitude entry is positive (first index wins ties).
inline void orient_modes(Eigen::MatrixXd& modes) {
    for (Eigen::Index c = 0; c < modes.cols(); ++c) {
        Eigen::Index best = 0;
        double best_abs = -1.0;
        for (Eigen::Index r = 0; r < modes.rows(); ++r) {
            const double a = std::abs(modes(r, c));
            if (a > best_abs) {
                best_abs = a;
                best = r;
            }
        }
        if (modes(best, c) < 0.0) modes.col(c) = -modes.col(c);
    }
}

}  // namespace detail

/// Smallest mode count whose cumulative eigenvalue share reaches `fraction`.
/// The comparison allows 1e-12 relative slack for round-off in the sums.
inline Eigen::Index modes_for_fraction(const Eigen::VectorXd& descending_eigenvalues, double total, double fraction) {
    if (total <= 0.0) return 0;
    double cumulative = 0.0;
    for (Eigen::Index i = 0; i < descending_eigenvalues.size(); ++i) {
        if (cumulative >= fraction * total - 1e-12 * total) return i;
        cumulative += descending_eigenvalues[i];
    }
    return descending_eigenvalues.size();
}

/// PCA on the rows of `data`. Decomposes whichever of the covariance (d x d)
/// and Gram (n x n) matrices is smaller; eigenvalues use the n - 1 normaliser.
inline LinearModel train_linear_model(const ObservationMatrix& data, double retained_fraction) {
    const Eigen::Index n = data.rows();
    const Eigen::Index d = data.cols();
    if (n < 2) throw Error("linear model training needs at least two observations");
    if (!(retained_fraction > 0.0 && retained_fraction <= 1.0))
        throw Error("retained fraction must lie in (0, 1]");

    LinearModel model;
    model.retained_fraction = retained_fraction;
    model.mean = data.colwise().mean().transpose();
    const Eigen::MatrixXd centered = data.rowwise() - model.mean.transpose();
    const double denom = static_cast<double>(n - 1);

    Eigen::VectorXd evals;
    Eigen::MatrixXd evecs;
    if (d <= n) {
        const Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
        evals = solver.eigenvalues().reverse();
        evecs = solver.eigenvectors().rowwise().reverse();
    } else {
        const Eigen::MatrixXd gram = (centered * centered.transpose()) / denom;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
        evals = solver.eigenvalues().reverse();
        const Eigen::MatrixXd u = solver.eigenvectors().rowwise().reverse();
        evecs = centered.transpose() * u;
        for (Eigen::Index c = 0; c < evecs.cols(); ++c) {
            const double norm = evecs.col(c).norm();
            if (norm > 0.0) evecs.col(c) /= norm;
        }
    }

    // Eigenvalues at round-off level carry no variance; clamp them to zero.
    const double scale = evals.size() ? std::max(evals[0], 0.0) : 0.0;
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < evals.size(); ++i) {
        if (evals[i] <= 1e-12 * scale || evals[i] <= 0.0) evals[i] = 0.0;
        else ++rank;
    }
    model.total_variance = evals.head(rank).sum();

    const Eigen::Index m = std::min(modes_for_fraction(evals.head(rank), model.total_variance, retained_fraction), rank);
    model.eigenvalues = evals.head(m);
    model.modes = evecs.leftCols(m);
    if (m > 0 && d > n) {
        // Gram-route modes lose orthogonality to round-off; re-orthonormalise.
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(model.modes);
        Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, m);
        for (Eigen::Index c = 0; c < m; ++c)
            if (q.col(c).dot(model.modes.col(c)) < 0.0) q.col(c) = -q.col(c);
        model.modes = q;
    }
    detail::orient_modes(model.modes);
    return model;
}

inline Eigen::VectorXd project(const LinearModel& model, const Eigen::VectorXd& x) {
    if (x.size() != model.dim())
        throw DimensionError("observation has dimension " + std::to_string(x.size()) + ", model expects " +
                             std::to_string(model.dim()));
    return model.modes.transpose() * (x - model.mean);
}

inline Eigen::VectorXd reconstruct(const LinearModel& model, const Eigen::VectorXd& params) {
    if (params.size() != model.mode_count())
        throw DimensionError("parameter vector has length " + std::to_string(params.size()) + ", model has " +
                             std::to_string(model.mode_count()) + " modes");
    return model.mean + model.modes * params;
}

/// Projects every row; the result has one parameter vector per row.
inline ObservationMatrix project_rows(const LinearModel& model, const ObservationMatrix& data) {
    if (data.cols() != model.dim()) throw DimensionError("observation matrix dimension does not match the model");
    ObservationMatrix out = (data.rowwise() - model.mean.transpose()) * model.modes;
    return out;
}

/// Similarity (Procrustes) normalisation of x/y landmark rows: each shape is
/// centred, scaled to unit norm and rotated onto the first shape.
inline ObservationMatrix procrustes_normalize(const ObservationMatrix& shapes) {
    if (shapes.cols() % 2 != 0) throw DimensionError("shape vectors must hold x/y pairs");
    const Eigen::Index pts = shapes.cols() / 2;
    auto as_points = [&](Eigen::Index r) {
        Eigen::MatrixXd p(pts, 2);
        for (Eigen::Index i = 0; i < pts; ++i) p.row(i) << shapes(r, 2 * i), shapes(r, 2 * i + 1);
        p.rowwise() -= p.colwise().mean();
        const double norm = p.norm();
        if (norm > 0.0) p /= norm;
        return p;
    };
    ObservationMatrix out(shapes.rows(), shapes.cols());
    if (shapes.rows() == 0) return out;
    const Eigen::MatrixXd ref = as_points(0);
    for (Eigen::Index r = 0; r < shapes.rows(); ++r) {
        Eigen::MatrixXd p = as_points(r);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(p.transpose() * ref, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Eigen::Matrix2d rot = svd.matrixU() * svd.matrixV().transpose();
        if (rot.determinant() < 0.0) {
            Eigen::Matrix2d fix = Eigen::Matrix2d::Identity();
            fix(1, 1) = -1.0;
            rot = svd.matrixU() * fix * svd.matrixV().transpose();
        }
        p = p * rot;
        for (Eigen::Index i = 0; i < pts; ++i) {
            out(r, 2 * i) = p(i, 0);
            out(r, 2 * i + 1) = p(i, 1);
        }
    }
    return out;
}

namespace detail {

inline std::string join_vector(const Eigen::VectorXd& v) {
    std::string out;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += text::format_g17(v[i]);
    }
    return out;
}

inline Eigen::VectorXd parse_vector(std::string_view line, Eigen::Index expected, std::size_t line_no) {
    auto toks = text::split_ws(line);
    if (static_cast<Eigen::Index>(toks.size()) != expected)
        throw ParseError("expected " + std::to_string(expected) + " values, found " + std::to_string(toks.size()),
                         line_no);
    Eigen::VectorXd v(expected);
    for (Eigen::Index i = 0; i < expected; ++i) v[i] = text::parse_double(toks[i], line_no);
    return v;
}

}  // namespace detail

/// Header lines, then the mean, then one mode per line.
inline std::string save_linear_model(const LinearModel& model) {
    std::string out;
    out += "dim " + std::to_string(model.dim()) + "\n";
    out += "modes " + std::to_string(model.mode_count()) + "\n";
    out += "retained_fraction " + text::format_g17(model.retained_fraction) + "\n";
    out += "total_variance " + text::format_g17(model.total_variance) + "\n";
    out += "domain " + (model.domain_note.empty() ? std::string("raw") : model.domain_note) + "\n";
    out += "eigenvalues";
    for (Eigen::Index i = 0; i < model.eigenvalues.size(); ++i) out += " " + text::format_g17(model.eigenvalues[i]);
    out += "\n";
    out += detail::join_vector(model.mean) + "\n";
    for (Eigen::Index c = 0; c < model.mode_count(); ++c)
        out += detail::join_vector(model.modes.col(c)) + "\n";
    return out;
}

inline LinearModel load_linear_model(std::string_view text_in) {
    const auto ls = text::lines(text_in);
    auto header = [&](std::size_t i, std::string_view key) {
        if (i >= ls.size()) throw ParseError("truncated linear model file", i + 1);
        auto toks = text::split_ws(ls[i]);
        if (toks.empty() || toks[0] != key) throw ParseError("expected '" + std::string(key) + "'", i + 1);
        return toks;
    };
    LinearModel m;
    const auto dim = text::parse_int(header(0, "dim").at(1), 1);
    const auto modes = text::parse_int(header(1, "modes").at(1), 2);
    m.retained_fraction = text::parse_double(header(2, "retained_fraction").at(1), 3);
    m.total_variance = text::parse_double(header(3, "total_variance").at(1), 4);
    m.domain_note = header(4, "domain").at(1);
    auto ev = header(5, "eigenvalues");
    if (static_cast<long long>(ev.size()) != modes + 1) throw ParseError("eigenvalue count mismatch", 6);
    m.eigenvalues.resize(modes);
    for (long long i = 0; i < modes; ++i) m.eigenvalues[i] = text::parse_double(ev[i + 1], 6);
    if (ls.size() < static_cast<std::size_t>(7 + modes)) throw ParseError("truncated linear model file");
    m.mean = detail::parse_vector(ls[6], dim, 7);
    m.modes.resize(dim, modes);
    for (long long c = 0; c < modes; ++c) m.modes.col(c) = detail::parse_vector(ls[7 + c], dim, 8 + c);
    return m;
}

}  // namespace vislip
