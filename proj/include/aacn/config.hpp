#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "aacn/attention.hpp"
#include "aacn/matcher.hpp"

namespace aacn {

enum class AttentionSource { gt, ppa, file };

AttentionSource parse_attention_source(const std::string& s);
Metric parse_metric(const std::string& s);
QueryMode parse_query_mode(const std::string& s);

// Shared run settings. Every field has a default; a config file (key=value
// lines or a flat JSON object) may override them, and command-line flags win
// over the file. Unknown keys are rejected by name.
struct RunConfig {
    int grid_h = 14;
    int grid_w = 6;
    int image_h = 448;
    int image_w = 192;
    double sigma_gauss = 2.0;
    double sigma_band = 0.0; // 0 = auto (0.15 x torso diagonal per pose)
    double mu1 = 1.0;
    double mu2 = 1.0;
    double lr = 0.02;
    int epochs = 200;
    int steps = 400;
    uint64_t seed = 1;
    Metric metric = Metric::euclidean;
    AttentionSource attention = AttentionSource::gt;
    double margin = 1.0;
    int threads = 1;

    bool band_auto() const { return sigma_band <= 0.0; }

    // GtConfig with the configured grid; sigma_band stays 0 when auto and
    // must be resolved per pose before rasterizing.
    GtConfig gt_config() const;

    // Applies "key=value"; throws std::invalid_argument naming the key on
    // unknown keys or unparsable values.
    void apply(const std::string& key, const std::string& value);

    // Loads a config file: either one key=value per line ('#' comments) or a
    // single flat JSON object.
    void load_file(const std::filesystem::path& path);
};

// "HxW" strings such as "14x6" or "448x192".
std::pair<int, int> parse_hw(const std::string& s, const std::string& what);

} // namespace aacn
