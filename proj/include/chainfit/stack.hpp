#pragma once

#include "chainfit/imaging.hpp"
#include "chainfit/rigid.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace chainfit {

/// A dataset of images with acquisition metadata and optional ground truth.
///
/// On disk it is a directory holding
///   meta.json        imaging config, n, seed, pose convention, contents
///   images.f32       little-endian float32, row-major, image-major
///   clean.f32        noise-free images, same layout (optional)
///   poses.json       per-image global rotation (row-major) and shift (px)
///   gt_latents.json  per-image ground-truth latent state (optional)
///   gt_structures.f64  per-image ground-truth coordinates, 3N float64 each (optional)
///   morph.json       per-image morph parameter s (optional)
struct ImageStack {
    ImagingConfig imaging;
    std::uint64_t seed = 0;
    std::string kind = "heterogeneous";
    std::string split;
    std::size_t count = 0;
    std::vector<float> images;
    std::vector<float> clean;
    std::vector<GlobalPose> poses;
    std::vector<LatentState> gt_latents;
    Eigen::MatrixXd gt_structures;  // 3N x count, empty when absent
    std::vector<double> morph_params;
    std::size_t out_of_view_atoms = 0;

    std::size_t pixels_per_image() const {
        return static_cast<std::size_t>(imaging.image_size) * imaging.image_size;
    }
    ImageArray image(std::size_t i) const;
    ImageArray clean_image(std::size_t i) const;
    bool has_ground_truth_structures() const { return gt_structures.cols() > 0; }

    /// Allocates image storage for `n` images (and clean copies when asked).
    void resize(std::size_t n, bool with_clean);
    void set_image(std::size_t i, const ImageArray& image);
    void set_clean_image(std::size_t i, const ImageArray& image);

    /// Throws DimensionError when arrays disagree with `count`.
    void check_consistency() const;
};

void write_stack(const std::filesystem::path& dir, const ImageStack& stack);
ImageStack read_stack(const std::filesystem::path& dir);

}  // namespace chainfit
