#include "chainfit/analysis.hpp"

#include "chainfit/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace chainfit {

double rmsd(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
    if (a.size() != b.size())
        throw DimensionError("RMSD of structures with " + std::to_string(a.size() / 3) + " and " +
                             std::to_string(b.size() / 3) + " atoms");
    if (a.size() == 0) throw EmptyInputError("RMSD of empty structures");
    return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size() / 3));
}

double rmsd(const AtomicStructure& a, const AtomicStructure& b) { return rmsd(a.coords(), b.coords()); }

ErrorMap error_map(const Eigen::MatrixXd& gt, const Eigen::MatrixXd& fitted, double bin_width) {
    if (gt.cols() == 0 || fitted.cols() == 0) throw EmptyInputError("error map needs at least one conformation");
    if (gt.rows() != fitted.rows()) throw DimensionError("ground-truth and fitted atom counts differ");
    if (gt.rows() % 3 != 0) throw DimensionError("coordinate length is not a multiple of 3");
    if (!(bin_width > 0.0)) throw ConfigError("histogram bin width must be positive");
    ErrorMap map;
    map.bin_width = bin_width;
    map.mean_gt = gt.rowwise().mean();
    map.mean_fitted = fitted.rowwise().mean();
    const Eigen::Index atoms = gt.rows() / 3;
    map.per_atom.resize(atoms);
    for (Eigen::Index j = 0; j < atoms; ++j)
        map.per_atom[j] = (map.mean_gt.segment<3>(3 * j) - map.mean_fitted.segment<3>(3 * j)).norm();
    const auto bins = static_cast<std::size_t>(std::floor(map.per_atom.maxCoeff() / bin_width)) + 1;
    map.histogram.assign(bins, 0);
    for (Eigen::Index j = 0; j < atoms; ++j)
        ++map.histogram[std::min(bins - 1, static_cast<std::size_t>(std::floor(map.per_atom[j] / bin_width)))];
    return map;
}

LatentBlock parse_latent_block(std::string_view text) {
    auto colon = text.find(':');
    if (colon == std::string_view::npos) throw ConfigError("latent block must look like alpha:<chain> or rigid:<chain>");
    auto kind = text.substr(0, colon);
    auto index = text.substr(colon + 1);
    LatentBlock block;
    if (kind == "alpha") block.kind = LatentBlockKind::Alpha;
    else if (kind == "rigid") block.kind = LatentBlockKind::Rigid;
    else throw ConfigError("unknown latent block kind '" + std::string(kind) + "'");
    auto [end, ec] = std::from_chars(index.data(), index.data() + index.size(), block.chain);
    if (index.empty() || ec != std::errc() || end != index.data() + index.size())
        throw ConfigError("latent block chain index '" + std::string(index) + "' is not a number");
    return block;
}

std::string to_string(const LatentBlock& block) {
    return std::string(block.kind == LatentBlockKind::Alpha ? "alpha:" : "rigid:") + std::to_string(block.chain);
}

Eigen::VectorXd latent_block_vector(const LatentState& state, const LatentBlock& block) {
    if (block.chain >= state.chains.size())
        throw LookupError("latent block chain " + std::to_string(block.chain) + " out of range (" +
                          std::to_string(state.chains.size()) + " chains)");
    const auto& chain = state.chains[block.chain];
    if (block.kind == LatentBlockKind::Alpha) return chain.alpha;
    Eigen::VectorXd v(12);
    const Eigen::Matrix3d r = chain.rotation();
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) v[3 * i + k] = r(i, k);
    v.segment<3>(9) = chain.translation;
    return v;
}

LatentState with_latent_block(LatentState state, const LatentBlock& block, const Eigen::Ref<const Eigen::VectorXd>& v) {
    if (block.chain >= state.chains.size()) throw LookupError("latent block chain out of range");
    auto& chain = state.chains[block.chain];
    if (block.kind == LatentBlockKind::Alpha) {
        if (v.size() != chain.alpha.size()) throw DimensionError("mode weight block length mismatch");
        chain.alpha = v;
        return state;
    }
    if (v.size() != 12) throw DimensionError("rigid block vectors have 12 entries");
    Eigen::Matrix3d r;
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) r(i, k) = v[3 * i + k];
    const Eigen::Matrix3d q = gram_schmidt_rotation(r.col(0), r.col(1));
    chain.v1 = q.col(0);
    chain.v2 = q.col(1);
    chain.translation = v.segment<3>(9);
    return state;
}

PCAResult pca(const Eigen::MatrixXd& samples, int components) {
    const Eigen::Index n = samples.rows(), dim = samples.cols();
    if (n < 2) throw EmptyInputError("PCA needs at least 2 samples");
    if (dim < 1) throw DimensionError("PCA samples have no coordinates");
    const Eigen::Index p = components > 0 ? std::min<Eigen::Index>(components, dim) : std::min(dim, n - 1);

    PCAResult result;
    result.mean = samples.colwise().mean().transpose();
    Eigen::MatrixXd centered = samples.rowwise() - result.mean.transpose();
    Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

    Eigen::Index constant = 0;
    for (Eigen::Index d = 0; d < dim; ++d)
        if (cov(d, d) == 0.0) ++constant;
    if (constant == dim) result.warnings.push_back("latent block is constant: all variances are zero");
    else if (constant > 0)
        result.warnings.push_back(std::to_string(constant) + " of " + std::to_string(dim) +
                                  " coordinates have zero variance");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw Error("covariance eigendecomposition failed");
    const double total = std::max(0.0, cov.trace());
    result.components.resize(dim, p);
    result.variances.resize(p);
    result.explained_variance_pct.resize(p);
    for (Eigen::Index k = 0; k < p; ++k) {
        const Eigen::Index src = dim - 1 - k;  // eigenvalues ascend
        Eigen::VectorXd c = solver.eigenvectors().col(src);
        Eigen::Index arg = 0;
        c.cwiseAbs().maxCoeff(&arg);
        if (c[arg] < 0.0) c = -c;
        result.components.col(k) = c;
        result.variances[k] = std::max(0.0, solver.eigenvalues()[src]);
        result.explained_variance_pct[k] = total > 0.0 ? std::min(100.0, 100.0 * result.variances[k] / total) : 0.0;
    }
    result.projected = centered * result.components;
    return result;
}

Eigen::MatrixXd latent_block_matrix(std::span<const FitReport> reports, const LatentBlock& block) {
    std::vector<Eigen::VectorXd> rows;
    for (const auto& report : reports)
        for (const auto& e : report.entries)
            if (e.ok) rows.push_back(latent_block_vector(e.latents, block));
    if (rows.empty()) throw EmptyInputError("no successful fits to analyze");
    const Eigen::Index dim = rows.front().size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != dim) throw DimensionError("latent block sizes differ between entries");
        m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    }
    return m;
}

PCAResult latent_pca(std::span<const FitReport> reports, const LatentBlock& block) {
    return pca(latent_block_matrix(reports, block));
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw EmptyInputError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(values.size() - 1, lo + 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<Eigen::VectorXd> traverse_pc(const PCAResult& result, int pc_index, std::span<const double> quantiles) {
    if (pc_index < 0 || pc_index >= result.components.cols())
        throw LookupError("principal component " + std::to_string(pc_index) + " out of range (" +
                          std::to_string(result.components.cols()) + " components)");
    const Eigen::VectorXd scores = result.projected.col(pc_index);
    std::vector<double> s(scores.data(), scores.data() + scores.size());
    std::vector<Eigen::VectorXd> out;
    for (double q : quantiles) {
        if (!(q > 0.0 && q < 1.0)) throw ConfigError("traversal quantiles must lie in (0, 1)");
        out.push_back(result.mean + quantile(s, q) * result.components.col(pc_index));
    }
    return out;
}

double pearson(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
    if (a.size() != b.size() || a.size() < 2) throw DimensionError("correlation needs two equal-length samples");
    const Eigen::VectorXd da = a.array() - a.mean();
    const Eigen::VectorXd db = b.array() - b.mean();
    const double denom = da.norm() * db.norm();
    return denom > 0.0 ? da.dot(db) / denom : 0.0;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

constexpr double kWidth = 640, kHeight = 480, kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        default: out += c;
        }
    }
    return out;
}

struct Frame {
    double x0, x1, y0, y1;
    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void pad_range(double& lo, double& hi) {
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
}

std::string header(const std::string& title, const std::string& x_label, const std::string& y_label, const Frame& f) {
    std::ostringstream s;
    char buf[256];
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
      << escape(title) << "</text>\n";
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n", kLeft,
                  kTop, kWidth - kLeft - kRight, kHeight - kTop - kBottom);
    s << buf;
    for (int i = 0; i <= 4; ++i) {
        const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0, yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                      "font-size=\"11\">%.3g</text>\n",
                      f.px(xv), kHeight - kBottom + 16, xv);
        s << buf;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\" font-family=\"sans-serif\" "
                      "font-size=\"11\">%.3g</text>\n",
                      kLeft - 6, f.py(yv) + 4, yv);
        s << buf;
    }
    s << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 18
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << escape(x_label) << "</text>\n";
    s << "<text x=\"16\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
      << "transform=\"rotate(-90 16 " << kHeight / 2 << ")\">" << escape(y_label) << "</text>\n";
    return s.str();
}

}  // namespace

std::string scatter_svg(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                        const std::string& title, const std::string& x_label, const std::string& y_label) {
    if (x.size() != y.size()) throw DimensionError("scatter coordinates differ in length");
    Frame f{x.size() ? x.minCoeff() : 0.0, x.size() ? x.maxCoeff() : 1.0, y.size() ? y.minCoeff() : 0.0,
            y.size() ? y.maxCoeff() : 1.0};
    pad_range(f.x0, f.x1);
    pad_range(f.y0, f.y1);
    std::string out = header(title, x_label, y_label, f);
    char buf[160];
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.5\" fill=\"#1f77b4\" fill-opacity=\"0.35\"/>\n",
                      f.px(x[i]), f.py(y[i]));
        out += buf;
    }
    return out + "</svg>\n";
}

std::string histogram_svg(const std::vector<std::size_t>& counts, double bin_width, const std::string& title,
                          const std::string& x_label) {
    const double top = counts.empty() ? 1.0 : static_cast<double>(*std::max_element(counts.begin(), counts.end()));
    Frame f{0.0, std::max<double>(1.0, static_cast<double>(counts.size())) * bin_width, 0.0, std::max(1.0, top) * 1.05};
    std::string out = header(title, x_label, "count", f);
    char buf[200];
    for (std::size_t b = 0; b < counts.size(); ++b) {
        const double x0 = f.px(static_cast<double>(b) * bin_width), x1 = f.px(static_cast<double>(b + 1) * bin_width);
        const double y = f.py(static_cast<double>(counts[b]));
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"#ff7f0e\" stroke=\"black\"/>\n", x0,
                      y, x1 - x0, f.py(0.0) - y);
        out += buf;
    }
    return out + "</svg>\n";
}

std::string bar_svg(const std::vector<std::string>& labels, const std::vector<double>& values,
                    const std::vector<double>& errors, const std::string& title, const std::string& y_label) {
    if (labels.size() != values.size()) throw DimensionError("bar labels and values differ in length");
    double top = 1.0;
    for (std::size_t i = 0; i < values.size(); ++i)
        top = std::max(top, values[i] + (i < errors.size() ? errors[i] : 0.0));
    Frame f{0.0, static_cast<double>(std::max<std::size_t>(1, values.size())), 0.0, top * 1.1};
    std::string out = header(title, "", y_label, f);
    char buf[256];
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double x0 = f.px(i + 0.15), x1 = f.px(i + 0.85), y = f.py(values[i]);
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"#2ca02c\" stroke=\"black\"/>\n", x0,
                      y, x1 - x0, f.py(0.0) - y);
        out += buf;
        if (i < errors.size()) {
            const double xm = f.px(i + 0.5);
            std::snprintf(buf, sizeof buf, "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"black\"/>\n",
                          xm, f.py(values[i] - errors[i]), xm, f.py(values[i] + errors[i]));
            out += buf;
        }
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                      "font-size=\"12\">%s</text>\n",
                      f.px(i + 0.5), kHeight - kBottom + 30, escape(labels[i]).c_str());
        out += buf;
    }
    return out + "</svg>\n";
}

}  // namespace chainfit
