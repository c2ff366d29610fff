#pragma once

// On-disk formats. A bundle directory holds
//   meta.json     {num_nodes, num_features, num_classes, name}
//   edges.tsv     "u v" per line, 0-based, one undirected edge per line
//   features.f32  raw little-endian float32, row-major
//   labels.tsv    one integer per line
//   split.json    {train: [...], val: [...], test: [...]}

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "hc/errors.hpp"
#include "hc/graph.hpp"
#include "json.hpp"

namespace hc::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline std::ifstream open_in(const fs::path& p, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(p, mode);
    if (!in) throw IoError("cannot open " + p.string());
    return in;
}

inline std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::out) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, mode | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    return out;
}

inline void write_f32(const fs::path& p, const float* data, std::size_t count) {
    auto out = open_out(p, std::ios::binary);
    std::vector<unsigned char> buf(count * 4);
    for (std::size_t i = 0; i < count; ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(data[i]);
        for (int b = 0; b < 4; ++b) buf[i * 4 + static_cast<std::size_t>(b)] = static_cast<unsigned char>(bits >> (8 * b));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write to " + p.string());
}

inline std::vector<float> read_f32(const fs::path& p, std::size_t expected_count) {
    auto in = open_in(p, std::ios::binary);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() != expected_count * 4) {
        std::ostringstream os;
        os << p.string() << ": expected " << expected_count * 4 << " bytes, found " << buf.size();
        throw IoError(os.str());
    }
    std::vector<float> out(expected_count);
    for (std::size_t i = 0; i < expected_count; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(buf[i * 4 + static_cast<std::size_t>(b)]) << (8 * b);
        out[i] = std::bit_cast<float>(bits);
    }
    return out;
}

/// Row-major float32 dump of a dense double matrix (values are narrowed).
inline void write_matrix_f32(const fs::path& p, const Matrix& m) {
    std::vector<float> flat(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) flat[static_cast<std::size_t>(i * m.cols() + j)] = static_cast<float>(m(i, j));
    write_f32(p, flat.data(), flat.size());
}

inline Matrix read_matrix_f32(const fs::path& p, Index rows, Index cols) {
    const auto flat = read_f32(p, static_cast<std::size_t>(rows * cols));
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = flat[static_cast<std::size_t>(i * cols + j)];
    return m;
}

inline json read_json(const fs::path& p) {
    auto in = open_in(p);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError(p.string() + ": " + e.what());
    }
}

inline void write_json(const fs::path& p, const json& j) {
    auto out = open_out(p);
    out << j.dump(2) << "\n";
}

inline std::vector<int> read_labels(const fs::path& p) {
    auto in = open_in(p);
    std::vector<int> labels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        long long v;
        if (!(ls >> v)) throw IoError(p.string() + ":" + std::to_string(lineno) + ": expected an integer label");
        labels.push_back(static_cast<int>(v));
    }
    return labels;
}

inline void write_labels(const fs::path& p, const std::vector<int>& labels) {
    auto out = open_out(p);
    for (int y : labels) out << y << '\n';
}

inline std::vector<Edge> read_edges(const fs::path& p) {
    auto in = open_in(p);
    std::vector<Edge> edges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        long long u, v;
        if (!(ls >> u >> v)) throw IoError(p.string() + ":" + std::to_string(lineno) + ": expected two integers");
        edges.emplace_back(static_cast<Index>(u), static_cast<Index>(v));
    }
    return edges;
}

inline GraphBundle load_bundle(const fs::path& dir) {
    const json meta = read_json(dir / "meta.json");
    Index n, d, c;
    std::string name;
    try {
        n = meta.at("num_nodes").get<Index>();
        d = meta.at("num_features").get<Index>();
        c = meta.at("num_classes").get<Index>();
        name = meta.value("name", dir.filename().string());
    } catch (const json::exception& e) {
        throw IoError((dir / "meta.json").string() + ": " + e.what());
    }
    if (n <= 0 || d <= 0 || c <= 0) throw ValidationError("meta.json: sizes must be positive");

    const auto edges = read_edges(dir / "edges.tsv");
    const auto flat = read_f32(dir / "features.f32", static_cast<std::size_t>(n * d));
    FeatureMatrix x = Eigen::Map<const FeatureMatrix>(flat.data(), n, d);
    auto labels = read_labels(dir / "labels.tsv");
    if (static_cast<Index>(labels.size()) != n) {
        throw ValidationError("labels.tsv: expected " + std::to_string(n) + " labels, found " + std::to_string(labels.size()));
    }
    const json sj = read_json(dir / "split.json");
    Split split;
    try {
        split.train = sj.at("train").get<std::vector<Index>>();
        split.val = sj.value("val", std::vector<Index>{});
        split.test = sj.value("test", std::vector<Index>{});
    } catch (const json::exception& e) {
        throw IoError((dir / "split.json").string() + ": " + e.what());
    }
    return make_bundle(std::move(name), n, c, edges, std::move(x), std::move(labels), std::move(split));
}

inline void save_bundle(const GraphBundle& g, const fs::path& dir) {
    fs::create_directories(dir);
    write_json(dir / "meta.json", json{{"num_nodes", g.num_nodes},
                                       {"num_features", g.num_features},
                                       {"num_classes", g.num_classes},
                                       {"name", g.name}});
    {
        auto out = open_out(dir / "edges.tsv");
        for (const auto& [u, v] : g.edges()) out << u << '\t' << v << '\n';
    }
    write_f32(dir / "features.f32", g.features.data(), static_cast<std::size_t>(g.features.size()));
    write_labels(dir / "labels.tsv", g.labels);
    write_json(dir / "split.json", json{{"train", g.split.train}, {"val", g.split.val}, {"test", g.split.test}});
}

/// Total size of regular files under `p` (or of `p` itself).
inline std::uintmax_t disk_bytes(const fs::path& p) {
    if (fs::is_regular_file(p)) return fs::file_size(p);
    std::uintmax_t total = 0;
    for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file()) total += e.file_size();
    }
    return total;
}

/// Rounds to `digits` significant digits so JSON output stays short.
inline double round_sig(double v, int digits = 6) {
    if (!std::isfinite(v) || v == 0.0) return v;
    std::ostringstream os;
    os << std::setprecision(digits) << v;
    return std::stod(os.str());
}

}  // namespace hc::io
