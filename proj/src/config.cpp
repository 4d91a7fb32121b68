#include "aacn/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace aacn {

AttentionSource parse_attention_source(const std::string& s) {
    if (s == "gt") return AttentionSource::gt;
    if (s == "ppa") return AttentionSource::ppa;
    if (s == "file") return AttentionSource::file;
    throw std::invalid_argument("attention source must be gt|ppa|file, got '" + s + "'");
}

Metric parse_metric(const std::string& s) {
    if (s == "euclidean") return Metric::euclidean;
    if (s == "cosine") return Metric::cosine;
    throw std::invalid_argument("metric must be euclidean|cosine, got '" + s + "'");
}

QueryMode parse_query_mode(const std::string& s) {
    if (s == "single") return QueryMode::single;
    if (s == "multi") return QueryMode::multi;
    throw std::invalid_argument("mode must be single|multi, got '" + s + "'");
}

std::pair<int, int> parse_hw(const std::string& s, const std::string& what) {
    const size_t pos = s.find('x');
    if (pos == std::string::npos || pos == 0 || pos + 1 >= s.size())
        throw std::invalid_argument(what + ": expected HxW, got '" + s + "'");
    try {
        const int h = std::stoi(s.substr(0, pos));
        const int w = std::stoi(s.substr(pos + 1));
        if (h <= 0 || w <= 0) throw std::invalid_argument("");
        return {h, w};
    } catch (const std::exception&) {
        throw std::invalid_argument(what + ": expected positive HxW, got '" + s + "'");
    }
}

GtConfig RunConfig::gt_config() const {
    GtConfig cfg;
    cfg.sigma_band = sigma_band; // may be 0 = auto; callers resolve per pose
    cfg.sigma_gauss = sigma_gauss;
    cfg.map_h = grid_h;
    cfg.map_w = grid_w;
    cfg.image_h = image_h;
    cfg.image_w = image_w;
    return cfg;
}

namespace {

double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': cannot parse '" + value + "' as a number");
    }
}

long long parse_int(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': cannot parse '" + value + "' as an integer");
    }
}

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

} // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
    if (key == "grid") {
        auto [h, w] = parse_hw(value, "config key 'grid'");
        grid_h = h;
        grid_w = w;
    } else if (key == "image") {
        auto [h, w] = parse_hw(value, "config key 'image'");
        image_h = h;
        image_w = w;
    } else if (key == "sigma_gauss") {
        sigma_gauss = parse_double(key, value);
        if (sigma_gauss <= 0.0) throw std::invalid_argument("config key 'sigma_gauss': must be positive");
    } else if (key == "band") {
        if (value == "auto") {
            sigma_band = 0.0;
        } else {
            sigma_band = parse_double(key, value);
            if (sigma_band <= 0.0) throw std::invalid_argument("config key 'band': must be positive or 'auto'");
        }
    } else if (key == "mu1") {
        mu1 = parse_double(key, value);
        if (mu1 < 0.0) throw std::invalid_argument("config key 'mu1': must be non-negative");
    } else if (key == "mu2") {
        mu2 = parse_double(key, value);
        if (mu2 < 0.0) throw std::invalid_argument("config key 'mu2': must be non-negative");
    } else if (key == "lr") {
        lr = parse_double(key, value);
    } else if (key == "epochs") {
        epochs = static_cast<int>(parse_int(key, value));
        if (epochs < 0) throw std::invalid_argument("config key 'epochs': must be non-negative");
    } else if (key == "steps") {
        steps = static_cast<int>(parse_int(key, value));
        if (steps < 0) throw std::invalid_argument("config key 'steps': must be non-negative");
    } else if (key == "seed") {
        seed = static_cast<uint64_t>(parse_int(key, value));
    } else if (key == "metric") {
        metric = parse_metric(value);
    } else if (key == "attn") {
        attention = parse_attention_source(value);
    } else if (key == "margin") {
        margin = parse_double(key, value);
        if (margin <= 0.0) throw std::invalid_argument("config key 'margin': must be positive");
    } else if (key == "threads") {
        threads = static_cast<int>(parse_int(key, value));
        if (threads < 1) throw std::invalid_argument("config key 'threads': must be at least 1");
    } else {
        throw std::invalid_argument("unknown config key '" + key + "'");
    }
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config file '" + path.string() + "'");
    std::string content((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

    const std::string stripped = trim(content);
    if (!stripped.empty() && stripped.front() == '{') {
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(stripped);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::invalid_argument("config file '" + path.string() + "': " + e.what());
        }
        if (!obj.is_object()) throw std::invalid_argument("config file '" + path.string() + "': expected an object");
        for (const auto& [key, value] : obj.items()) {
            std::string as_string;
            if (value.is_string())
                as_string = value.get<std::string>();
            else
                as_string = value.dump();
            apply(key, as_string);
        }
        return;
    }

    std::string line;
    size_t start = 0;
    int line_no = 0;
    while (start <= content.size()) {
        const size_t end = content.find('\n', start);
        line = content.substr(start, end == std::string::npos ? std::string::npos : end - start);
        start = end == std::string::npos ? content.size() + 1 : end + 1;
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config file '" + path.string() + "' line " + std::to_string(line_no) +
                                        ": expected key=value");
        apply(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
}

} // namespace aacn
