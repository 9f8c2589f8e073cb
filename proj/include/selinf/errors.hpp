#pragma once

#include <stdexcept>
#include <string>

namespace selinf {

struct NotPositiveDefinite : std::runtime_error {
    explicit NotPositiveDefinite(const std::string& msg) : std::runtime_error(msg) {}
};

struct UnsupportedDimension : std::runtime_error {
    explicit UnsupportedDimension(const std::string& msg) : std::runtime_error(msg) {}
};

struct InsufficientReplicates : std::runtime_error {
    explicit InsufficientReplicates(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateDenominator : std::runtime_error {
    explicit DegenerateDenominator(const std::string& msg) : std::runtime_error(msg) {}
};

struct RankDeficient : std::runtime_error {
    explicit RankDeficient(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyModel : std::runtime_error {
    explicit EmptyModel(const std::string& msg) : std::runtime_error(msg) {}
};

struct NoConvergence : std::runtime_error {
    explicit NoConvergence(const std::string& msg) : std::runtime_error(msg) {}
};

struct SingularH : std::runtime_error {
    explicit SingularH(const std::string& msg) : std::runtime_error(msg) {}
};

struct HessianNotPD : std::runtime_error {
    explicit HessianNotPD(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace selinf
