#include "chainfit/structure.hpp"

#include "chainfit/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace chainfit {

namespace {

std::string_view column(std::string_view line, std::size_t first, std::size_t last) {
    // 1-based inclusive PDB column numbers
    if (line.size() < first) return {};
    return line.substr(first - 1, std::min(last, line.size()) - (first - 1));
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

double parse_coordinate(std::string_view field, const char* axis, std::size_t line_no) {
    auto text = trim(field);
    double value = 0.0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc() || end != text.data() + text.size() || !std::isfinite(value))
        throw ParseError(std::string("malformed ") + axis + " coordinate '" + std::string(field) + "'",
                         line_no);
    return value;
}

int parse_int_or_zero(std::string_view field) {
    auto text = trim(field);
    int value = 0;
    std::from_chars(text.data(), text.data() + text.size(), value);
    return value;
}

}  // namespace

std::string AtomRecord::trimmed_name() const { return std::string(trim(name)); }

AtomicStructure::AtomicStructure(std::vector<AtomRecord> atoms, Eigen::VectorXd coords)
    : atoms_(std::move(atoms)), coords_(std::move(coords)) {
    if (static_cast<std::size_t>(coords_.size()) != 3 * atoms_.size())
        throw DimensionError("coordinate vector has " + std::to_string(coords_.size()) +
                             " entries for " + std::to_string(atoms_.size()) + " atoms");
    if (!coords_.allFinite()) throw Error("structure contains non-finite coordinates");
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
        const auto& id = atoms_[i].chain_id;
        if (!chains_.empty() && chains_.back().id == id) {
            chains_.back().end = i + 1;
            continue;
        }
        auto seen = std::find_if(chains_.begin(), chains_.end(), [&](const ChainRange& c) { return c.id == id; });
        if (seen != chains_.end())
            throw ParseError("chain '" + id + "' is not contiguous (reappears at atom " + std::to_string(i) + ")",
                             0);
        chains_.push_back({id, i, i + 1});
    }
}

const ChainRange& AtomicStructure::chain(std::string_view id) const { return chains_[chain_index(id)]; }

std::size_t AtomicStructure::chain_index(std::string_view id) const {
    for (std::size_t c = 0; c < chains_.size(); ++c)
        if (chains_[c].id == id) return c;
    throw LookupError("unknown chain '" + std::string(id) + "'");
}

AtomicStructure AtomicStructure::with_coords(Eigen::VectorXd coords) const {
    return AtomicStructure(atoms_, std::move(coords));
}

AtomicStructure parse_structure(std::string_view text) {
    std::vector<AtomRecord> atoms;
    std::vector<double> xyz;
    std::size_t line_no = 0;
    while (!text.empty()) {
        auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        auto record = column(line, 1, 6);
        if (record.starts_with("ENDMDL")) break;
        bool is_atom = record == "ATOM  " || record == "ATOM" || record.starts_with("ATOM ");
        bool is_het = record == "HETATM";
        if (!is_atom && !is_het) continue;
        if (line.size() < 54) throw ParseError("record too short for coordinates", line_no);

        AtomRecord atom;
        atom.hetatm = is_het;
        atom.serial = parse_int_or_zero(column(line, 7, 11));
        atom.name = std::string(column(line, 13, 16));
        atom.name.resize(4, ' ');
        atom.res_name = std::string(trim(column(line, 18, 20)));
        atom.chain_id = std::string(trim(column(line, 22, 22)));
        atom.res_seq = parse_int_or_zero(column(line, 23, 26));
        atom.element = std::string(trim(column(line, 77, 78)));
        xyz.push_back(parse_coordinate(column(line, 31, 38), "x", line_no));
        xyz.push_back(parse_coordinate(column(line, 39, 46), "y", line_no));
        xyz.push_back(parse_coordinate(column(line, 47, 54), "z", line_no));
        atoms.push_back(std::move(atom));
    }
    if (atoms.empty()) throw EmptyInputError("document contains no ATOM/HETATM records");
    return AtomicStructure(std::move(atoms), Eigen::Map<Eigen::VectorXd>(xyz.data(), xyz.size()));
}

AtomicStructure read_structure(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open structure file " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_structure(buffer.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), 0);
    } catch (const EmptyInputError& e) {
        throw EmptyInputError(path.string() + ": " + e.what());
    }
}

namespace {

void append_atoms(std::string& out, const AtomicStructure& s) {
    char buf[96];
    const auto& atoms = s.atoms();
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        const auto& a = atoms[i];
        auto p = s.position(i);
        std::snprintf(buf, sizeof buf, "%-6s%5d %-4.4s %3.3s %1.1s%4d    %8.3f%8.3f%8.3f%6.2f%6.2f          %2.2s\n",
                      a.hetatm ? "HETATM" : "ATOM", a.serial % 100000, a.name.c_str(), a.res_name.c_str(),
                      a.chain_id.c_str(), a.res_seq % 10000, p.x(), p.y(), p.z(), 1.0, 0.0, a.element.c_str());
        out += buf;
    }
}

}  // namespace

std::string write_structure(const AtomicStructure& structure) {
    std::string out;
    append_atoms(out, structure);
    out += "END\n";
    return out;
}

std::string write_models(std::span<const AtomicStructure> models) {
    std::string out;
    char buf[32];
    for (std::size_t m = 0; m < models.size(); ++m) {
        std::snprintf(buf, sizeof buf, "MODEL     %4zu\n", m + 1);
        out += buf;
        append_atoms(out, models[m]);
        out += "ENDMDL\n";
    }
    out += "END\n";
    return out;
}

void save_structure(const std::filesystem::path& path, const AtomicStructure& structure) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write structure file " + path.string());
    out << write_structure(structure);
}

AtomicStructure filter_atom_name(const AtomicStructure& structure, std::string_view name) {
    std::vector<AtomRecord> kept;
    std::vector<double> xyz;
    for (std::size_t i = 0; i < structure.atom_count(); ++i) {
        if (structure.atoms()[i].trimmed_name() != name) continue;
        kept.push_back(structure.atoms()[i]);
        auto p = structure.position(i);
        xyz.insert(xyz.end(), {p.x(), p.y(), p.z()});
    }
    if (kept.empty()) throw EmptyInputError("no atoms named '" + std::string(name) + "'");
    return AtomicStructure(std::move(kept), Eigen::Map<Eigen::VectorXd>(xyz.data(), xyz.size()));
}

Eigen::Vector3d centroid(const Eigen::Ref<const Eigen::VectorXd>& coords) {
    const Eigen::Index n = coords.size() / 3;
    if (n == 0) throw EmptyInputError("centroid of an empty coordinate set");
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (Eigen::Index j = 0; j < n; ++j) sum += coords.segment<3>(3 * j);
    return sum / static_cast<double>(n);
}

Eigen::Vector3d center_of_mass(const AtomicStructure& structure, std::string_view chain_id) {
    const auto& chain = structure.chain(chain_id);
    return centroid(structure.coords().segment(3 * chain.begin, 3 * chain.size()));
}

}  // namespace chainfit
