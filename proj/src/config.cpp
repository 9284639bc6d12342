#include "sf/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "sf/errors.hpp"

namespace sf {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig::RunConfig() {
    auto I = [this](const char* k, std::int64_t v) { values_[k] = v; };
    auto D = [this](const char* k, double v) { values_[k] = v; };
    auto B = [this](const char* k, bool v) { values_[k] = v; };
    auto S = [this](const char* k, const char* v) { values_[k] = std::string(v); };

    I("pe.levels", 7);
    B("pe.identity", true);

    I("grid.levels", 8);
    I("grid.nmin", 128);
    I("grid.nmax", 512);
    I("grid.featdim", 4);
    I("grid.table_log2", 19);

    I("coarse.width", 128);
    I("coarse.layers", 6);
    I("coarse.ecdim", 64);
    I("coarse.color_width", 64);

    I("fine.width", 256);
    I("fine.layers", 2);
    I("fine.pe_levels", 10);

    I("render.ns", 64);
    D("render.near", 0.0);  // 0 = take from scene metadata
    D("render.far", 0.0);
    S("render.background", "auto");  // auto | black | white
    B("render.stratified", true);
    I("render.chunk", 512);

    I("train.coarse.iters", 5000);  // full-scale setting: 50000
    D("train.coarse.lr", 5e-4);
    I("train.coarse.batch", 256);
    I("train.coarse.ckpt_every", 1000);
    S("train.coarse.lr_decay", "");

    I("train.style.iters", 150);
    D("train.style.lr", 5e-3);
    S("train.style.lr_decay", "50:0.33,100:0.33");

    D("style.lambda0", 10.0);
    D("style.alpha", 0.01);
    I("style.T", 100);
    D("style.constant_lambda", -1.0);  // < 0 means annealed schedule
    I("style.novel_poses", 6);
    I("style.image", 96);
    I("style.ns", 0);    // 0 = render.ns
    I("style.chunk", 512);
    I("style.cache_mb", 1024);

    S("ablation.mode", "full");  // full | no-residual | pe-not-hash | ec-only
    S("features.weights", "");
    B("content.normalized", false);

    D("baseline2d.lr", 0.02);
    I("baseline2d.iters", 150);

    S("scene.kind", "sphere");  // sphere | duo
    S("scene.pattern", "hemisphere");  // hemisphere | arc
    I("scene.train_views", 3);
    I("scene.heldout_views", 4);
    I("scene.image", 64);
    I("scene.style_size", 96);

    S("eval.path", "auto");  // auto | circle60 | arc60
    I("eval.size", 64);
    I("eval.poses", 60);
    I("eval.long_offset", 30);
    D("eval.ztol_frac", 0.01);
    I("eval.ns", 0);
}

void RunConfig::apply_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("sceneio", "config: cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail("sceneio", "config: line " + std::to_string(lineno) + " of " + path +
                                " is not 'key = value'");
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void RunConfig::apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail("sceneio", "config: override '" + kv + "' is not key=value");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) fail("sceneio", "config: unknown key '" + key + "'");
    if (std::holds_alternative<std::int64_t>(it->second)) {
        char* end = nullptr;
        const long long v = std::strtoll(value.c_str(), &end, 10);
        if (end == value.c_str() || *end != '\0')
            fail("sceneio", "config: key '" + key + "' expects an integer, got '" + value + "'");
        it->second = static_cast<std::int64_t>(v);
    } else if (std::holds_alternative<double>(it->second)) {
        char* end = nullptr;
        const double v = std::strtod(value.c_str(), &end);
        if (end == value.c_str() || *end != '\0')
            fail("sceneio", "config: key '" + key + "' expects a number, got '" + value + "'");
        it->second = v;
    } else if (std::holds_alternative<bool>(it->second)) {
        if (value == "true" || value == "1")
            it->second = true;
        else if (value == "false" || value == "0")
            it->second = false;
        else
            fail("sceneio", "config: key '" + key + "' expects true/false, got '" + value + "'");
    } else {
        it->second = value;
    }
}

const RunConfig::Value& RunConfig::get(const std::string& key, const char* type_name) const {
    auto it = values_.find(key);
    if (it == values_.end())
        fail("sceneio", std::string("config: unknown key '") + key + "' (" + type_name + ")");
    return it->second;
}

std::int64_t RunConfig::i(const std::string& key) const {
    const Value& v = get(key, "int");
    if (!std::holds_alternative<std::int64_t>(v))
        fail("sceneio", "config: key '" + key + "' is not an integer");
    return std::get<std::int64_t>(v);
}

double RunConfig::d(const std::string& key) const {
    const Value& v = get(key, "double");
    if (std::holds_alternative<std::int64_t>(v))
        return static_cast<double>(std::get<std::int64_t>(v));
    if (!std::holds_alternative<double>(v))
        fail("sceneio", "config: key '" + key + "' is not a number");
    return std::get<double>(v);
}

bool RunConfig::b(const std::string& key) const {
    const Value& v = get(key, "bool");
    if (!std::holds_alternative<bool>(v))
        fail("sceneio", "config: key '" + key + "' is not a boolean");
    return std::get<bool>(v);
}

const std::string& RunConfig::s(const std::string& key) const {
    const Value& v = get(key, "string");
    if (!std::holds_alternative<std::string>(v))
        fail("sceneio", "config: key '" + key + "' is not a string");
    return std::get<std::string>(v);
}

std::string RunConfig::dump() const {
    std::ostringstream os;
    for (const auto& [key, value] : values_) {
        os << key << " = ";
        if (std::holds_alternative<std::int64_t>(value))
            os << std::get<std::int64_t>(value);
        else if (std::holds_alternative<double>(value))
            os << format_double(std::get<double>(value));
        else if (std::holds_alternative<bool>(value))
            os << (std::get<bool>(value) ? "true" : "false");
        else
            os << std::get<std::string>(value);
        os << "\n";
    }
    return os.str();
}

std::vector<std::pair<std::int64_t, double>> parse_decay_events(const std::string& text) {
    std::vector<std::pair<std::int64_t, double>> events;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            fail("trainer", "lr_decay entry '" + item + "' is not iter:factor");
        const std::int64_t iter = std::strtoll(item.substr(0, colon).c_str(), nullptr, 10);
        const double factor = std::strtod(item.substr(colon + 1).c_str(), nullptr);
        if (iter < 0 || factor <= 0.0 || factor > 1.0)
            fail("trainer", "lr_decay entry '" + item + "' out of range (factor in (0,1])");
        events.emplace_back(iter, factor);
    }
    return events;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // Prefer the shortest representation that round-trips.
    for (int prec = 1; prec <= 16; ++prec) {
        char shorter[40];
        std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
        if (std::strtod(shorter, nullptr) == v) return shorter;
    }
    return buf;
}

}  // namespace sf
