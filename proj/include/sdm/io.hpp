#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "sdm/dictionary.hpp"
#include "sdm/errors.hpp"
#include "sdm/pose.hpp"

// File formats (all plain text, one record per line, '\n' line endings):
//
//   pose file        id P v1 ... v_{d*P}     d = 3 (x y z per joint) or 2
//   dictionary file  "sdm-dictionary-v1" header, k/P lines, optional meta
//                    line, then a "dict <kind>" section of k atom lines per
//                    dictionary (GlobalStructure first, Deformation second)
//   results file     CSV with a header row of named columns
//
// Floats are serialized with the shortest representation that round-trips the
// exact double, so write-then-read reproduces values bit for bit.

namespace sdm {

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view token, int line_no) {
    double v = 0.0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end) {
        throw ParseError("line " + std::to_string(line_no) + ": bad number '" +
                         std::string(token) + "'");
    }
    return v;
}

inline long parse_long(std::string_view token, int line_no) {
    long v = 0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end) {
        throw ParseError("line " + std::to_string(line_no) + ": bad integer '" +
                         std::string(token) + "'");
    }
    return v;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

template <int Dim>
using PoseMatrix = Eigen::Matrix<double, Dim, Eigen::Dynamic>;

template <int Dim>
struct PoseRecords {
    std::vector<std::string> ids;
    std::vector<PoseMatrix<Dim>> joints;
};

template <int Dim>
PoseRecords<Dim> read_pose_records(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    PoseRecords<Dim> records;
    std::string line;
    int line_no = 0;
    Eigen::Index expected_p = -1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto tokens = split_ws(line);
        if (tokens.empty()) continue;
        if (tokens.size() < 2) {
            throw ParseError("line " + std::to_string(line_no) + ": expected 'id P values...'");
        }
        const long p = parse_long(tokens[1], line_no);
        if (p < 2) {
            throw ParseError("line " + std::to_string(line_no) + ": joint count must be >= 2");
        }
        const std::size_t expected_tokens = 2 + static_cast<std::size_t>(Dim) * static_cast<std::size_t>(p);
        if (tokens.size() != expected_tokens) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(expected_tokens - 2) + " coordinates, got " +
                             std::to_string(tokens.size() - 2));
        }
        if (expected_p >= 0 && p != expected_p) {
            throw DimensionMismatch("'" + path.string() + "' line " + std::to_string(line_no) +
                                    ": joint count " + std::to_string(p) +
                                    " differs from earlier records (" +
                                    std::to_string(expected_p) + ")");
        }
        expected_p = p;
        PoseMatrix<Dim> m(Dim, p);
        std::size_t t = 2;
        for (Eigen::Index c = 0; c < p; ++c) {
            for (int r = 0; r < Dim; ++r) {
                m(r, c) = parse_double(tokens[t++], line_no);
            }
        }
        if (!m.allFinite()) {
            throw ParseError("line " + std::to_string(line_no) + ": non-finite coordinate");
        }
        records.ids.emplace_back(tokens[0]);
        records.joints.push_back(std::move(m));
    }
    return records;
}

template <int Dim>
void write_pose_records(const std::filesystem::path& path, const PoseRecords<Dim>& records) {
    std::ofstream out = open_output(path);
    for (std::size_t i = 0; i < records.joints.size(); ++i) {
        const auto& m = records.joints[i];
        out << records.ids[i] << ' ' << m.cols();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            for (int r = 0; r < Dim; ++r) out << ' ' << format_double(m(r, c));
        }
        out << '\n';
    }
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace detail

// ---- pose datasets ----------------------------------------------------

inline std::pair<std::vector<Pose3D>, std::vector<std::string>> read_poses3_with_ids(
    const std::filesystem::path& path) {
    auto records = detail::read_pose_records<3>(path);
    std::vector<Pose3D> poses;
    poses.reserve(records.joints.size());
    for (auto& m : records.joints) poses.emplace_back(std::move(m));
    return {std::move(poses), std::move(records.ids)};
}

inline std::vector<Pose3D> read_poses3(const std::filesystem::path& path) {
    return read_poses3_with_ids(path).first;
}

inline std::pair<std::vector<Pose2D>, std::vector<std::string>> read_poses2_with_ids(
    const std::filesystem::path& path) {
    auto records = detail::read_pose_records<2>(path);
    std::vector<Pose2D> poses;
    poses.reserve(records.joints.size());
    for (auto& m : records.joints) poses.emplace_back(std::move(m));
    return {std::move(poses), std::move(records.ids)};
}

inline std::vector<Pose2D> read_poses2(const std::filesystem::path& path) {
    return read_poses2_with_ids(path).first;
}

inline void write_poses3(const std::filesystem::path& path, const std::vector<Pose3D>& poses,
                         const std::vector<std::string>* ids = nullptr) {
    detail::PoseRecords<3> records;
    for (std::size_t i = 0; i < poses.size(); ++i) {
        records.ids.push_back(ids ? (*ids)[i] : std::to_string(i));
        records.joints.push_back(poses[i].joints);
    }
    detail::write_pose_records<3>(path, records);
}

inline void write_poses2(const std::filesystem::path& path, const std::vector<Pose2D>& poses,
                         const std::vector<std::string>* ids = nullptr) {
    detail::PoseRecords<2> records;
    for (std::size_t i = 0; i < poses.size(); ++i) {
        records.ids.push_back(ids ? (*ids)[i] : std::to_string(i));
        records.joints.push_back(poses[i].joints);
    }
    detail::write_pose_records<2>(path, records);
}

// ---- dictionaries ------------------------------------------------------

inline void write_dictionary(const std::filesystem::path& path, const PoseDictionary& dict_u,
                             const PoseDictionary& dict_v, const std::string& meta = {}) {
    if (dict_u.kind != DictionaryKind::GlobalStructure || dict_v.kind != DictionaryKind::Deformation) {
        throw InvalidDictionary("write_dictionary expects (GlobalStructure, Deformation)");
    }
    if (dict_u.size() != dict_v.size() || dict_u.joint_count() != dict_v.joint_count()) {
        throw DimensionMismatch("dictionaries disagree on size or joint count");
    }
    std::ofstream out = detail::open_output(path);
    out << "sdm-dictionary-v1\n";
    out << "k " << dict_u.size() << '\n';
    out << "P " << dict_u.joint_count() << '\n';
    if (!meta.empty()) out << "meta " << meta << '\n';
    for (const PoseDictionary* d : {&dict_u, &dict_v}) {
        out << "dict " << to_string(d->kind) << '\n';
        for (const Pose3D& atom : d->atoms) {
            out << "atom";
            for (Eigen::Index c = 0; c < atom.joint_count(); ++c) {
                for (int r = 0; r < 3; ++r) out << ' ' << detail::format_double(atom.joints(r, c));
            }
            out << '\n';
        }
    }
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline std::pair<PoseDictionary, PoseDictionary> read_dictionary(
    const std::filesystem::path& path) {
    std::ifstream in = detail::open_input(path);
    std::string line;
    int line_no = 0;

    auto next_tokens = [&](bool required) {
        while (std::getline(in, line)) {
            ++line_no;
            auto tokens = detail::split_ws(line);
            if (!tokens.empty()) return tokens;
        }
        if (required) throw ParseError("line " + std::to_string(line_no) + ": unexpected end of file");
        return std::vector<std::string_view>{};
    };

    auto header = next_tokens(true);
    if (header.size() != 1 || header[0] != "sdm-dictionary-v1") {
        throw ParseError("line " + std::to_string(line_no) + ": not an sdm-dictionary-v1 file");
    }
    auto k_line = next_tokens(true);
    if (k_line.size() != 2 || k_line[0] != "k") {
        throw ParseError("line " + std::to_string(line_no) + ": expected 'k <count>'");
    }
    const long k = detail::parse_long(k_line[1], line_no);
    auto p_line = next_tokens(true);
    if (p_line.size() != 2 || p_line[0] != "P") {
        throw ParseError("line " + std::to_string(line_no) + ": expected 'P <joints>'");
    }
    const long p = detail::parse_long(p_line[1], line_no);
    if (k < 1 || p < 2) {
        throw ParseError("line " + std::to_string(line_no) + ": invalid k or P");
    }

    auto tokens = next_tokens(true);
    if (!tokens.empty() && tokens[0] == "meta") tokens = next_tokens(true);

    auto read_section = [&](std::vector<std::string_view> section_line, DictionaryKind expected) {
        if (section_line.size() != 2 || section_line[0] != "dict") {
            throw ParseError("line " + std::to_string(line_no) + ": expected 'dict <kind>'");
        }
        if (section_line[1] != to_string(expected)) {
            throw InvalidDictionary("line " + std::to_string(line_no) + ": expected kind " +
                                    std::string(to_string(expected)) + ", found '" +
                                    std::string(section_line[1]) + "'");
        }
        PoseDictionary d;
        d.kind = expected;
        for (long j = 0; j < k; ++j) {
            auto atom_tokens = next_tokens(true);
            if (atom_tokens.empty() || atom_tokens[0] != "atom" ||
                atom_tokens.size() != 1 + 3 * static_cast<std::size_t>(p)) {
                throw ParseError("line " + std::to_string(line_no) + ": expected 'atom' with " +
                                 std::to_string(3 * p) + " coordinates");
            }
            Eigen::Matrix3Xd m(3, p);
            std::size_t t = 1;
            for (long c = 0; c < p; ++c) {
                for (int r = 0; r < 3; ++r) m(r, c) = detail::parse_double(atom_tokens[t++], line_no);
            }
            d.atoms.emplace_back(std::move(m));
        }
        return d;
    };

    PoseDictionary dict_u = read_section(tokens, DictionaryKind::GlobalStructure);
    PoseDictionary dict_v = read_section(next_tokens(true), DictionaryKind::Deformation);
    if (!next_tokens(false).empty()) {
        throw ParseError("line " + std::to_string(line_no) + ": trailing content");
    }

    try {
        validate_dictionary(dict_u);
        validate_dictionary(dict_v);
    } catch (const InvalidDictionary& e) {
        throw InvalidDictionary("'" + path.string() + "': " + e.what());
    }
    return {std::move(dict_u), std::move(dict_v)};
}

// ---- results tables ----------------------------------------------------

struct ResultsTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

namespace detail {

inline std::string csv_escape(const std::string& cell) {
    if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
    std::string out = "\"";
    for (char ch : cell) {
        if (ch == '"') out += "\"\"";
        else out += ch;
    }
    out += '"';
    return out;
}

inline std::vector<std::string> csv_split(const std::string& line, int line_no) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell += ch;
            }
        } else if (ch == '"' && cell.empty()) {
            quoted = true;
        } else if (ch == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else if (ch != '\r') {
            cell += ch;
        }
    }
    if (quoted) throw ParseError("line " + std::to_string(line_no) + ": unterminated quote");
    cells.push_back(std::move(cell));
    return cells;
}

inline void write_csv_row(std::ofstream& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out << ',';
        out << csv_escape(cells[i]);
    }
    out << '\n';
}

}  // namespace detail

inline void write_results(const std::filesystem::path& path, const ResultsTable& table) {
    if (table.header.empty()) throw SchemaMismatch("results table needs a header row");
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) {
            throw SchemaMismatch("row width differs from header width");
        }
    }
    std::ofstream out = detail::open_output(path);
    detail::write_csv_row(out, table.header);
    for (const auto& row : table.rows) detail::write_csv_row(out, row);
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline ResultsTable read_results(const std::filesystem::path& path) {
    std::ifstream in = detail::open_input(path);
    ResultsTable table;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = detail::csv_split(line, line_no);
        if (table.header.empty()) {
            table.header = std::move(cells);
        } else {
            if (cells.size() != table.header.size()) {
                throw SchemaMismatch("line " + std::to_string(line_no) +
                                     ": row width differs from header");
            }
            table.rows.push_back(std::move(cells));
        }
    }
    if (table.header.empty()) throw ParseError("'" + path.string() + "' has no header row");
    return table;
}

/// Appends one row to an existing results file, verifying the header matches.
inline void append_results(const std::filesystem::path& path,
                           const std::vector<std::string>& header,
                           const std::vector<std::string>& row) {
    const ResultsTable existing = read_results(path);
    if (existing.header != header) {
        throw SchemaMismatch("'" + path.string() + "' header differs from the expected schema");
    }
    if (row.size() != header.size()) {
        throw SchemaMismatch("appended row width differs from header width");
    }
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("cannot open '" + path.string() + "' for append");
    detail::write_csv_row(out, row);
    if (!out) throw IoError("append to '" + path.string() + "' failed");
}

}  // namespace sdm
