#pragma once

#include "chainfit/rigid.hpp"
#include "chainfit/rng.hpp"
#include "chainfit/structure.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <vector>

namespace chainfit {

using ImageArray = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ImagingConfig {
    int image_size = 128;             // D, pixels per side
    double pixel_size = 1.0;          // Å / px
    double blob_sigma = 1.5;          // Å
    std::optional<double> psf_sigma;  // px, none = identity PSF
    std::optional<double> snr_db;     // none = noise-free

    /// Throws ConfigError.
    void validate() const;
    /// Blob standard deviation in pixels.
    double blob_sigma_px() const { return blob_sigma / pixel_size; }
};

struct RenderStats {
    std::size_t out_of_view = 0;  // atoms whose projected centre falls outside the frame
};

/// Gaussian-splat renderer. Each atom carries a unit-amplitude projected
/// Gaussian; equivalently its 3D density is exp(-r^2 / 2s^2) / (sqrt(2 pi) s),
/// whose line integral along the beam is the 2D splat. Pixel (row y, col x)
/// has centre (x, y); an atom lands at (R x)_xy / pixel_size + D/2 + shift.
/// Splats are truncated at 6 sigma per axis.
///
/// `render` keeps the per-atom splat windows so a following `backward` can
/// reuse them; one Renderer must not be shared between threads.
class Renderer {
public:
    explicit Renderer(ImagingConfig config);

    const ImagingConfig& config() const { return config_; }

    /// Clean image (PSF applied when configured), no noise.
    void render(const Eigen::Ref<const Eigen::VectorXd>& coords, const GlobalPose& pose, ImageArray& image,
                RenderStats* stats = nullptr);

    /// Gradient of mean((image - observed)^2) w.r.t. the flat 3N atom
    /// coordinates, given residual = image - observed from the last render.
    void backward(const ImageArray& residual, Eigen::VectorXd& grad);

private:
    struct Splat {
        double u = 0, v = 0;  // projected centre, px
        int x0 = 0, y0 = 0, nx = 0, ny = 0;
        std::size_t offset = 0;  // into gx_/gy_ storage
    };

    ImagingConfig config_;
    double sigma_px_;
    int radius_;
    Eigen::Matrix3d rotation_;
    std::vector<Splat> splats_;
    std::vector<double> gx_, gy_;
    ImageArray scratch_;
};

ImageArray render_clean(const Eigen::Ref<const Eigen::VectorXd>& coords, const GlobalPose& pose,
                        const ImagingConfig& config, RenderStats* stats = nullptr);
ImageArray render_clean(const AtomicStructure& structure, const GlobalPose& pose, const ImagingConfig& config,
                        RenderStats* stats = nullptr);

/// d mean((render - observed)^2) / d coords, residual = render - observed.
Eigen::VectorXd render_gradients(const Eigen::Ref<const Eigen::VectorXd>& coords, const GlobalPose& pose,
                                 const ImagingConfig& config, const ImageArray& residual);

/// Zero-padded separable convolution with a normalized Gaussian of the given
/// width (px). No width returns the input unchanged.
ImageArray apply_psf(const ImageArray& image, std::optional<double> sigma_px);

/// Mean squared pixel value.
double signal_power(const ImageArray& image);
/// P_signal / 10^(snr_db / 10). Throws Error for an all-zero image.
double noise_variance(const ImageArray& clean, double snr_db);
/// Adds i.i.d. zero-mean Gaussian noise at the requested SNR.
ImageArray add_noise(const ImageArray& clean, double snr_db, Rng& rng);

}  // namespace chainfit
