#include "chainfit/stack.hpp"

#include "chainfit/errors.hpp"
#include "chainfit/serialization.hpp"

#include <bit>
#include <fstream>

namespace chainfit {

static_assert(std::endian::native == std::endian::little, "stack files assume a little-endian host");

namespace {

constexpr const char* kPoseConvention =
    "pixel(col,row) = (R x)[0:2] / pixel_size + image_size/2 + t; R row-major, applied to molecule-frame "
    "coordinates in Angstrom; t in pixels";

template <typename T>
void write_binary(const std::filesystem::path& path, const T* data, std::size_t count) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
    if (!out) throw IoError("failed writing " + path.string());
}

template <typename T>
void read_binary(const std::filesystem::path& path, T* data, std::size_t count) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != count * sizeof(T))
        throw IoError(path.string() + " holds " + std::to_string(bytes) + " bytes, expected " +
                      std::to_string(count * sizeof(T)));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError("failed reading " + path.string());
}

ImageArray unpack(const std::vector<float>& storage, std::size_t i, int size) {
    const std::size_t px = static_cast<std::size_t>(size) * size;
    ImageArray image(size, size);
    for (std::size_t k = 0; k < px; ++k) image.data()[k] = storage[i * px + k];
    return image;
}

void pack(std::vector<float>& storage, std::size_t i, const ImageArray& image) {
    const std::size_t px = static_cast<std::size_t>(image.size());
    for (std::size_t k = 0; k < px; ++k) storage[i * px + k] = static_cast<float>(image.data()[k]);
}

}  // namespace

ImageArray ImageStack::image(std::size_t i) const { return unpack(images, i, imaging.image_size); }

ImageArray ImageStack::clean_image(std::size_t i) const {
    if (clean.empty()) throw LookupError("stack has no clean images");
    return unpack(clean, i, imaging.image_size);
}

void ImageStack::resize(std::size_t n, bool with_clean) {
    count = n;
    images.assign(n * pixels_per_image(), 0.0f);
    if (with_clean) clean.assign(n * pixels_per_image(), 0.0f);
    else clean.clear();
    poses.resize(n);
}

void ImageStack::set_image(std::size_t i, const ImageArray& image) { pack(images, i, image); }
void ImageStack::set_clean_image(std::size_t i, const ImageArray& image) { pack(clean, i, image); }

void ImageStack::check_consistency() const {
    const std::size_t px = pixels_per_image();
    if (images.size() != count * px) throw DimensionError("image storage does not match the image count");
    if (!clean.empty() && clean.size() != count * px) throw DimensionError("clean image storage mismatch");
    if (poses.size() != count) throw DimensionError("pose count does not match the image count");
    if (!gt_latents.empty() && gt_latents.size() != count) throw DimensionError("ground-truth latent count mismatch");
    if (gt_structures.cols() != 0 && static_cast<std::size_t>(gt_structures.cols()) != count)
        throw DimensionError("ground-truth structure count mismatch");
    if (!morph_params.empty() && morph_params.size() != count) throw DimensionError("morph parameter count mismatch");
}

void write_stack(const std::filesystem::path& dir, const ImageStack& stack) {
    stack.check_consistency();
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create stack directory " + dir.string() + ": " + ec.message());

    Json meta = {{"format", "chainfit-stack-1"},
                 {"kind", stack.kind},
                 {"split", stack.split},
                 {"n", stack.count},
                 {"seed", stack.seed},
                 {"imaging", to_json(stack.imaging)},
                 {"image_size", stack.imaging.image_size},
                 {"pixel_size", stack.imaging.pixel_size},
                 {"snr_db", stack.imaging.snr_db ? Json(*stack.imaging.snr_db) : Json(nullptr)},
                 {"pose_convention", kPoseConvention},
                 {"has_clean", !stack.clean.empty()},
                 {"has_gt_latents", !stack.gt_latents.empty()},
                 {"gt_structure_atoms", stack.gt_structures.rows() / 3},
                 {"has_morph_params", !stack.morph_params.empty()},
                 {"out_of_view_atoms", stack.out_of_view_atoms}};
    write_json_file(dir / "meta.json", meta);
    write_binary(dir / "images.f32", stack.images.data(), stack.images.size());
    if (!stack.clean.empty()) write_binary(dir / "clean.f32", stack.clean.data(), stack.clean.size());

    Json poses = Json::array();
    for (const auto& p : stack.poses) poses.push_back(to_json(p));
    write_json_file(dir / "poses.json", poses);

    if (!stack.gt_latents.empty()) {
        Json latents = Json::array();
        for (const auto& l : stack.gt_latents) latents.push_back(to_json(l));
        write_json_file(dir / "gt_latents.json", latents);
    }
    if (stack.gt_structures.cols() > 0)
        write_binary(dir / "gt_structures.f64", stack.gt_structures.data(), stack.gt_structures.size());
    if (!stack.morph_params.empty()) write_json_file(dir / "morph.json", Json(stack.morph_params));
}

ImageStack read_stack(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("stack directory " + dir.string() + " does not exist");
    Json meta = read_json_file(dir / "meta.json");
    ImageStack stack;
    try {
        stack.kind = meta.value("kind", "heterogeneous");
        stack.split = meta.value("split", "");
        stack.count = meta.at("n").get<std::size_t>();
        stack.seed = meta.value("seed", std::uint64_t{0});
        stack.imaging = imaging_from_json(meta.at("imaging"));
        stack.out_of_view_atoms = meta.value("out_of_view_atoms", std::size_t{0});
        stack.imaging.validate();

        stack.images.resize(stack.count * stack.pixels_per_image());
        read_binary(dir / "images.f32", stack.images.data(), stack.images.size());
        if (meta.value("has_clean", false)) {
            stack.clean.resize(stack.images.size());
            read_binary(dir / "clean.f32", stack.clean.data(), stack.clean.size());
        }
        for (const auto& p : read_json_file(dir / "poses.json")) stack.poses.push_back(pose_from_json(p));
        if (meta.value("has_gt_latents", false))
            for (const auto& l : read_json_file(dir / "gt_latents.json")) stack.gt_latents.push_back(latent_from_json(l));
        const auto atoms = meta.value("gt_structure_atoms", Eigen::Index{0});
        if (atoms > 0) {
            stack.gt_structures.resize(3 * atoms, static_cast<Eigen::Index>(stack.count));
            read_binary(dir / "gt_structures.f64", stack.gt_structures.data(), stack.gt_structures.size());
        }
        if (meta.value("has_morph_params", false))
            stack.morph_params = read_json_file(dir / "morph.json").get<std::vector<double>>();
    } catch (const Json::exception& e) {
        throw ParseError(dir.string() + ": malformed stack metadata: " + e.what(), 0);
    }
    stack.check_consistency();
    return stack;
}

}  // namespace chainfit
