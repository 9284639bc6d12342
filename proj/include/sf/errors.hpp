#pragma once

#include <stdexcept>
#include <string>

namespace sf {

// Runtime failure carrying the name of the module that raised it.
// CLI prints these to stderr and exits with code 2.
class Error : public std::runtime_error {
public:
    Error(const std::string& module, const std::string& message)
        : std::runtime_error(module + ": " + message), module_(module) {}

    const std::string& module() const { return module_; }

private:
    std::string module_;
};

[[noreturn]] inline void fail(const std::string& module, const std::string& message) {
    throw Error(module, message);
}

}  // namespace sf
