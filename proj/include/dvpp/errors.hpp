#pragma once

#include <iostream>
#include <stdexcept>
#include <string>

namespace dvpp {

// Base for every error raised by the library. Messages are stable so that
// callers and tests can match on them.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    ConfigError(const std::string& path, const std::string& what)
        : Error(path.empty() ? what : path + ": " + what), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

class SynthesisError : public Error {
public:
    SynthesisError(const std::string& what, std::string family = {})
        : Error(what), family_(std::move(family)) {}
    const std::string& family() const { return family_; }

private:
    std::string family_;
};

class SimulationError : public Error {
public:
    using Error::Error;
};

inline void warn(const std::string& msg) { std::clog << "warning: " << msg << '\n'; }

}  // namespace dvpp
