#include "chainfit/serialization.hpp"

#include "chainfit/errors.hpp"

#include <cstdio>
#include <fstream>
#include <vector>

namespace chainfit {

namespace {

std::vector<double> to_vector(const Eigen::Ref<const Eigen::VectorXd>& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd vector_from(const Json& j, const char* what) {
    if (!j.is_array()) throw ParseError(std::string(what) + " must be an array", 0);
    auto values = j.get<std::vector<double>>();
    return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Eigen::Vector3d vector3_from(const Json& j, const char* what) {
    auto v = vector_from(j, what);
    if (v.size() != 3) throw ParseError(std::string(what) + " must have 3 entries", 0);
    return v;
}

}  // namespace

Json to_json(const GlobalPose& pose) {
    std::vector<double> r;
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) r.push_back(pose.rotation(i, k));
    return {{"R", r}, {"t", {pose.shift.x(), pose.shift.y()}}};
}

GlobalPose pose_from_json(const Json& j) {
    GlobalPose pose;
    auto r = vector_from(j.at("R"), "pose R");
    auto t = vector_from(j.at("t"), "pose t");
    if (r.size() != 9 || t.size() != 2) throw ParseError("pose needs 9 rotation and 2 shift entries", 0);
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) pose.rotation(i, k) = r[3 * i + k];
    pose.shift = t;
    return pose;
}

Json to_json(const LatentState& state) {
    Json chains = Json::array();
    for (const auto& c : state.chains) {
        chains.push_back({{"chain", c.chain_id},
                          {"alpha", to_vector(c.alpha)},
                          {"v1", to_vector(c.v1)},
                          {"v2", to_vector(c.v2)},
                          {"t", to_vector(c.translation)}});
    }
    return {{"chains", chains}, {"whole_alpha", to_vector(state.whole_alpha)}, {"pose", to_json(state.pose)}};
}

LatentState latent_from_json(const Json& j) {
    try {
        LatentState state;
        for (const auto& c : j.at("chains")) {
            ChainLatent latent;
            latent.chain_id = c.at("chain").get<std::string>();
            latent.alpha = vector_from(c.at("alpha"), "alpha");
            latent.v1 = vector3_from(c.at("v1"), "v1");
            latent.v2 = vector3_from(c.at("v2"), "v2");
            latent.translation = vector3_from(c.at("t"), "t");
            state.chains.push_back(std::move(latent));
        }
        if (j.contains("whole_alpha")) state.whole_alpha = vector_from(j.at("whole_alpha"), "whole_alpha");
        if (j.contains("pose")) state.pose = pose_from_json(j.at("pose"));
        return state;
    } catch (const Json::exception& e) {
        throw ParseError(std::string("malformed latent state: ") + e.what(), 0);
    }
}

Json to_json(const ImagingConfig& config) {
    return {{"image_size", config.image_size},
            {"pixel_size", config.pixel_size},
            {"blob_sigma", config.blob_sigma},
            {"psf_sigma", config.psf_sigma ? Json(*config.psf_sigma) : Json(nullptr)},
            {"snr_db", config.snr_db ? Json(*config.snr_db) : Json(nullptr)}};
}

ImagingConfig imaging_from_json(const Json& j, ImagingConfig base) {
    try {
        if (j.contains("image_size")) base.image_size = j.at("image_size").get<int>();
        if (j.contains("pixel_size")) base.pixel_size = j.at("pixel_size").get<double>();
        if (j.contains("blob_sigma")) base.blob_sigma = j.at("blob_sigma").get<double>();
        if (j.contains("psf_sigma")) {
            if (j.at("psf_sigma").is_null()) base.psf_sigma.reset();
            else base.psf_sigma = j.at("psf_sigma").get<double>();
        }
        if (j.contains("snr_db")) {
            if (j.at("snr_db").is_null()) base.snr_db.reset();
            else base.snr_db = j.at("snr_db").get<double>();
        }
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("malformed imaging config: ") + e.what());
    }
    return base;
}

Json to_json(const EnmConfig& config) {
    return {{"cutoff", config.cutoff},
            {"spring_constant", config.spring_constant},
            {"num_modes", config.num_modes},
            {"null_tolerance", config.null_tolerance}};
}

EnmConfig enm_from_json(const Json& j, EnmConfig base) {
    try {
        if (j.contains("cutoff")) base.cutoff = j.at("cutoff").get<double>();
        if (j.contains("spring_constant")) base.spring_constant = j.at("spring_constant").get<double>();
        if (j.contains("num_modes")) base.num_modes = j.at("num_modes").get<int>();
        if (j.contains("null_tolerance")) base.null_tolerance = j.at("null_tolerance").get<double>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("malformed ENM config: ") + e.what());
    }
    return base;
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what(), 0);
    }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 0x100000001b3ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
    return hex;
}

}  // namespace chainfit
