#pragma once

#include "chainfit/structure.hpp"

#include <Eigen/Core>

#include <cstdio>
#include <random>
#include <string>
#include <vector>

namespace testing {

inline std::string atom_line(int serial, const char* name, const char* chain, int res_seq, double x, double y,
                             double z, const char* record = "ATOM  ") {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-6s%5d %-4s %3s %1s%4d    %8.3f%8.3f%8.3f  1.00  0.00           C\n", record,
                  serial, name, "ALA", chain, res_seq, x, y, z);
    return buf;
}

/// Structure with the given chain ids per atom and flat coordinates.
inline chainfit::AtomicStructure make_structure(const std::vector<std::string>& chains, const Eigen::VectorXd& coords) {
    std::vector<chainfit::AtomRecord> atoms;
    for (std::size_t i = 0; i < chains.size(); ++i) {
        chainfit::AtomRecord a;
        a.serial = static_cast<int>(i + 1);
        a.name = " CA ";
        a.res_name = "ALA";
        a.chain_id = chains[i];
        a.res_seq = static_cast<int>(i + 1);
        a.element = "C";
        atoms.push_back(a);
    }
    return chainfit::AtomicStructure(std::move(atoms), coords);
}

/// Random compact cloud: `per_chain` atoms per chain, chains offset along x.
inline chainfit::AtomicStructure random_structure(std::mt19937_64& rng, const std::vector<int>& per_chain,
                                                  double spread = 4.0, double offset = 10.0) {
    std::normal_distribution<double> normal(0.0, spread);
    std::vector<std::string> ids;
    std::vector<double> xyz;
    for (std::size_t c = 0; c < per_chain.size(); ++c)
        for (int j = 0; j < per_chain[c]; ++j) {
            ids.push_back(std::string(1, static_cast<char>('A' + c)));
            xyz.push_back(normal(rng) + offset * static_cast<double>(c));
            xyz.push_back(normal(rng));
            xyz.push_back(normal(rng));
        }
    return make_structure(ids, Eigen::Map<Eigen::VectorXd>(xyz.data(), static_cast<Eigen::Index>(xyz.size())));
}

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::Vector4d q(normal(rng), normal(rng), normal(rng), normal(rng));
    q.normalize();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
         2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
         2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
    return r;
}

}  // namespace testing
