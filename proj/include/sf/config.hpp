#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace sf {

// Flat dotted-key run configuration. Every tunable has a registered default;
// unknown keys and type mismatches are rejected. Resolution order is
// defaults, then file, then command-line overrides.
class RunConfig {
public:
    using Value = std::variant<std::int64_t, double, bool, std::string>;

    RunConfig();  // all defaults

    void apply_file(const std::string& path);
    void apply_override(const std::string& key_equals_value);  // "key=value"
    void set(const std::string& key, const std::string& value);

    std::int64_t i(const std::string& key) const;
    double d(const std::string& key) const;
    bool b(const std::string& key) const;
    const std::string& s(const std::string& key) const;

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    // Sorted "key = value" lines; written into run manifests.
    std::string dump() const;

private:
    const Value& get(const std::string& key, const char* type_name) const;
    std::map<std::string, Value> values_;
};

// Parse "iter:factor,iter:factor" decay event lists.
std::vector<std::pair<std::int64_t, double>> parse_decay_events(const std::string& text);

std::string format_double(double v);  // shortest round-trippable text

}  // namespace sf
