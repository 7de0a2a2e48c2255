#include "rdv2/dataset.hpp"

#include <algorithm>
#include <set>

#include "rdv2/errors.hpp"
#include "rdv2/image_io.hpp"

namespace rdv2::io {

namespace {

std::set<std::string> png_names(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError("missing directory " + dir.string());
    std::set<std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") out.insert(e.path().stem().string());
    return out;
}

}  // namespace

std::vector<std::string> pair_names(const std::filesystem::path& a_dir, const std::filesystem::path& b_dir) {
    const auto a = png_names(a_dir), b = png_names(b_dir);
    std::vector<std::string> both, only_a, only_b;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(only_a));
    std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::back_inserter(only_b));
    if (!only_a.empty() || !only_b.empty()) {
        std::string msg = "unpaired files:";
        for (const auto& n : only_a) msg += "\n  " + (a_dir / (n + ".png")).string();
        for (const auto& n : only_b) msg += "\n  " + (b_dir / (n + ".png")).string();
        throw ConfigError(msg);
    }
    return both;
}

std::vector<train::ImagePair> load_pairs(const std::filesystem::path& root) {
    const auto names = pair_names(root / "degraded", root / "clean");
    if (names.empty()) throw ConfigError("dataset " + root.string() + " holds no image pairs");
    std::vector<train::ImagePair> out;
    for (const auto& n : names) {
        train::ImagePair p{n, load_image(root / "degraded" / (n + ".png")), load_image(root / "clean" / (n + ".png"))};
        if (p.degraded.shape() != p.clean.shape())
            throw ConfigError("pair '" + n + "' has mismatched extents " + shape_str(p.degraded.shape()) + " and " +
                              shape_str(p.clean.shape()));
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace rdv2::io
