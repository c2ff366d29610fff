#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <unistd.h>
#include <vector>

#include "hc/graph.hpp"
#include "hc/rng.hpp"

namespace hc::testing {

/// Fresh directory removed on scope exit.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("hc_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Erdos-Renyi graph with random labels, every node in train/val/test at
/// 60/20/20. A Hamiltonian path is added when `connected` is set.
inline GraphBundle random_bundle(Rng& rng, Index n, Index classes, double p, bool connected = true, Index d = 4) {
    std::vector<Edge> edges;
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j)
            if (rng.uniform() < p) edges.emplace_back(i, j);
    if (connected) {
        std::vector<Index> perm(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
        rng.shuffle(perm);
        for (std::size_t k = 1; k < perm.size(); ++k) edges.emplace_back(perm[k - 1], perm[k]);
    }
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(i % classes);
    Split s;
    for (Index i = 0; i < n; ++i) {
        const double u = rng.uniform();
        (i < classes || u < 0.6 ? s.train : u < 0.8 ? s.val : s.test).push_back(i);
    }
    FeatureMatrix x(n, d);
    for (Index i = 0; i < n; ++i)
        for (Index k = 0; k < d; ++k) x(i, k) = static_cast<float>(rng.normal());
    return make_bundle("random", n, classes, edges, std::move(x), std::move(labels), std::move(s));
}

}  // namespace hc::testing
