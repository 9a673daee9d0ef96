#include "chainfit/imaging.hpp"

#include "chainfit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace chainfit {

namespace {

constexpr double kTruncation = 6.0;

// values[i] = exp(-(start + i - mean)^2 / (2 sigma^2)) by the ratio recurrence.
void gaussian_run(double* values, int start, int count, double mean, double sigma) {
    const double a = 0.5 / (sigma * sigma);
    const double d = start - mean;
    double g = std::exp(-a * d * d);
    double ratio = std::exp(-a * (2.0 * d + 1.0));
    const double step = std::exp(-2.0 * a);
    for (int i = 0; i < count; ++i) {
        values[i] = g;
        g *= ratio;
        ratio *= step;
    }
}

std::vector<double> psf_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (auto& v : k) v /= sum;
    return k;
}

}  // namespace

void ImagingConfig::validate() const {
    if (image_size < 16) throw ConfigError("image size must be at least 16 px");
    if (!(pixel_size > 0.0)) throw ConfigError("pixel size must be positive");
    if (!(blob_sigma > 0.0)) throw ConfigError("blob sigma must be positive");
    if (psf_sigma && !(*psf_sigma > 0.0)) throw ConfigError("PSF sigma must be positive");
    if (snr_db && !std::isfinite(*snr_db)) throw ConfigError("SNR must be finite");
}

Renderer::Renderer(ImagingConfig config) : config_(std::move(config)) {
    config_.validate();
    sigma_px_ = config_.blob_sigma_px();
    radius_ = static_cast<int>(std::ceil(kTruncation * sigma_px_));
}

void Renderer::render(const Eigen::Ref<const Eigen::VectorXd>& coords, const GlobalPose& pose, ImageArray& image,
                      RenderStats* stats) {
    const int size = config_.image_size;
    const Eigen::Index atoms = coords.size() / 3;
    const double center = 0.5 * size;
    const double inv_px = 1.0 / config_.pixel_size;
    rotation_ = pose.rotation;

    splats_.resize(atoms);
    const std::size_t width = 2 * radius_ + 1;
    gx_.resize(atoms * width);
    gy_.resize(atoms * width);
    ImageArray& target = config_.psf_sigma ? scratch_ : image;
    target.setZero(size, size);

    for (Eigen::Index j = 0; j < atoms; ++j) {
        Eigen::Vector3d p = pose.rotation * coords.segment<3>(3 * j);
        Splat& s = splats_[j];
        s.u = p.x() * inv_px + center + pose.shift.x();
        s.v = p.y() * inv_px + center + pose.shift.y();
        s.offset = j * width;
        if (stats && (s.u < -0.5 || s.u > size - 0.5 || s.v < -0.5 || s.v > size - 0.5)) ++stats->out_of_view;
        const int xa = std::max(0, static_cast<int>(std::ceil(s.u - radius_)));
        const int xb = std::min(size - 1, static_cast<int>(std::floor(s.u + radius_)));
        const int ya = std::max(0, static_cast<int>(std::ceil(s.v - radius_)));
        const int yb = std::min(size - 1, static_cast<int>(std::floor(s.v + radius_)));
        s.x0 = xa;
        s.y0 = ya;
        s.nx = std::max(0, xb - xa + 1);
        s.ny = std::max(0, yb - ya + 1);
        if (s.nx == 0 || s.ny == 0) continue;
        double* gx = gx_.data() + s.offset;
        double* gy = gy_.data() + s.offset;
        gaussian_run(gx, xa, s.nx, s.u, sigma_px_);
        gaussian_run(gy, ya, s.ny, s.v, sigma_px_);
        for (int r = 0; r < s.ny; ++r) {
            double* row = target.data() + static_cast<std::size_t>(ya + r) * size + xa;
            const double wy = gy[r];
            for (int c = 0; c < s.nx; ++c) row[c] += wy * gx[c];
        }
    }
    if (config_.psf_sigma) image = apply_psf(scratch_, config_.psf_sigma);
}

void Renderer::backward(const ImageArray& residual, Eigen::VectorXd& grad) {
    const int size = config_.image_size;
    const Eigen::Index atoms = static_cast<Eigen::Index>(splats_.size());
    grad.setZero(3 * atoms);

    ImageArray upstream = (2.0 / (static_cast<double>(size) * size)) * residual;
    if (config_.psf_sigma) upstream = apply_psf(upstream, config_.psf_sigma);

    const double inv_s2 = 1.0 / (sigma_px_ * sigma_px_);
    const double inv_px = 1.0 / config_.pixel_size;
    for (Eigen::Index j = 0; j < atoms; ++j) {
        const Splat& s = splats_[j];
        if (s.nx == 0 || s.ny == 0) continue;
        const double* gx = gx_.data() + s.offset;
        const double* gy = gy_.data() + s.offset;
        double du = 0.0, dv = 0.0;
        for (int r = 0; r < s.ny; ++r) {
            const double* row = upstream.data() + static_cast<std::size_t>(s.y0 + r) * size + s.x0;
            double a = 0.0, b = 0.0;
            for (int c = 0; c < s.nx; ++c) {
                const double w = row[c] * gx[c];
                a += w;
                b += w * (s.x0 + c - s.u);
            }
            du += gy[r] * b;
            dv += gy[r] * (s.y0 + r - s.v) * a;
        }
        // d image / d u = g (x - u) / s^2; u = (R x)_0 / px + ...
        Eigen::Vector3d g_projected(du * inv_s2 * inv_px, dv * inv_s2 * inv_px, 0.0);
        grad.segment<3>(3 * j) = rotation_.transpose() * g_projected;
    }
}

ImageArray render_clean(const Eigen::Ref<const Eigen::VectorXd>& coords, const GlobalPose& pose,
                        const ImagingConfig& config, RenderStats* stats) {
    Renderer renderer(config);
    ImageArray image;
    renderer.render(coords, pose, image, stats);
    return image;
}

ImageArray render_clean(const AtomicStructure& structure, const GlobalPose& pose, const ImagingConfig& config,
                        RenderStats* stats) {
    return render_clean(structure.coords(), pose, config, stats);
}

Eigen::VectorXd render_gradients(const Eigen::Ref<const Eigen::VectorXd>& coords, const GlobalPose& pose,
                                 const ImagingConfig& config, const ImageArray& residual) {
    Renderer renderer(config);
    ImageArray image;
    renderer.render(coords, pose, image);
    if (residual.rows() != image.rows() || residual.cols() != image.cols())
        throw DimensionError("residual image has the wrong shape");
    Eigen::VectorXd grad;
    renderer.backward(residual, grad);
    return grad;
}

ImageArray apply_psf(const ImageArray& image, std::optional<double> sigma_px) {
    if (!sigma_px) return image;
    const auto kernel = psf_kernel(*sigma_px);
    const int radius = static_cast<int>(kernel.size() / 2);
    const Eigen::Index rows = image.rows(), cols = image.cols();
    ImageArray tmp = ImageArray::Zero(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const Eigen::Index xx = x + k;
                if (xx >= 0 && xx < cols) acc += kernel[k + radius] * image(y, xx);
            }
            tmp(y, x) = acc;
        }
    ImageArray out = ImageArray::Zero(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const Eigen::Index yy = y + k;
                if (yy >= 0 && yy < rows) acc += kernel[k + radius] * tmp(yy, x);
            }
            out(y, x) = acc;
        }
    return out;
}

double signal_power(const ImageArray& image) { return image.squaredNorm() / static_cast<double>(image.size()); }

double noise_variance(const ImageArray& clean, double snr_db) {
    const double power = signal_power(clean);
    if (!(power > 0.0)) throw Error("SNR is undefined for an all-zero image");
    return power / std::pow(10.0, snr_db / 10.0);
}

ImageArray add_noise(const ImageArray& clean, double snr_db, Rng& rng) {
    std::normal_distribution<double> normal(0.0, std::sqrt(noise_variance(clean, snr_db)));
    ImageArray noisy = clean;
    for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += normal(rng);
    return noisy;
}

}  // namespace chainfit
