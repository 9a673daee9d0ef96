#pragma once

#include "chainfit/fitter.hpp"
#include "chainfit/rigid.hpp"
#include "chainfit/structure.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chainfit {

/// Root-mean-square atom distance of two same-order structures, no
/// superposition. Throws DimensionError on a size mismatch.
double rmsd(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);
double rmsd(const AtomicStructure& a, const AtomicStructure& b);

struct ErrorMap {
    Eigen::VectorXd per_atom;  // Å, distance between the two mean conformations
    Eigen::VectorXd mean_gt;
    Eigen::VectorXd mean_fitted;
    double bin_width = 0.5;
    std::vector<std::size_t> histogram;  // bin b counts errors in [b w, (b + 1) w)
};

/// Columns are conformations (3N each). Throws EmptyInputError when either
/// set is empty, DimensionError when shapes disagree.
ErrorMap error_map(const Eigen::MatrixXd& gt, const Eigen::MatrixXd& fitted, double bin_width = 0.5);

enum class LatentBlockKind { Alpha, Rigid };

/// A latent block of one chain: its mode weights, or its rigid transform
/// vectorized as the row-major rotation followed by the translation (12).
struct LatentBlock {
    LatentBlockKind kind = LatentBlockKind::Rigid;
    std::size_t chain = 0;
};

/// "alpha:<chain>" or "rigid:<chain>", chain as a 0-based index.
LatentBlock parse_latent_block(std::string_view text);
std::string to_string(const LatentBlock& block);

Eigen::VectorXd latent_block_vector(const LatentState& state, const LatentBlock& block);
/// Writes a block vector back into a latent state. A rigid vector's 3x3 part
/// is re-orthonormalized through its first two columns.
LatentState with_latent_block(LatentState state, const LatentBlock& block, const Eigen::Ref<const Eigen::VectorXd>& v);

struct PCAResult {
    Eigen::MatrixXd components;             // dim x p, orthonormal columns
    Eigen::VectorXd variances;              // p, descending
    Eigen::VectorXd explained_variance_pct;  // p
    Eigen::MatrixXd projected;              // n x p scores
    Eigen::VectorXd mean;                   // dim
    std::vector<std::string> warnings;
};

/// Mean-centred PCA of the rows of `samples` (n x dim) by eigendecomposition
/// of the sample covariance. Keeps min(dim, n - 1) components unless
/// `components` is positive. Throws EmptyInputError for fewer than 2 rows.
PCAResult pca(const Eigen::MatrixXd& samples, int components = 0);

/// Rows are the chosen block of every successful entry of the reports.
Eigen::MatrixXd latent_block_matrix(std::span<const FitReport> reports, const LatentBlock& block);
PCAResult latent_pca(std::span<const FitReport> reports, const LatentBlock& block);

/// Linear-interpolation sample quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

/// mean + quantile_q(scores of pc) * component for each q in (0, 1).
std::vector<Eigen::VectorXd> traverse_pc(const PCAResult& result, int pc_index, std::span<const double> quantiles);

/// Pearson correlation coefficient.
double pearson(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

/// Minimal SVG emitters for the CLI.
std::string scatter_svg(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                        const std::string& title, const std::string& x_label, const std::string& y_label);
std::string histogram_svg(const std::vector<std::size_t>& counts, double bin_width, const std::string& title,
                          const std::string& x_label);
std::string bar_svg(const std::vector<std::string>& labels, const std::vector<double>& values,
                    const std::vector<double>& errors, const std::string& title, const std::string& y_label);

}  // namespace chainfit
