#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace gridbd {

using Index = Eigen::Index;
using Complex = std::complex<double>;
using RealVector = Eigen::VectorXd;
using RealMatrix = Eigen::MatrixXd;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

// Every library failure carries a short machine-readable code so the CLI can
// report it as JSON without string matching.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    [[nodiscard]] const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& m) : Error("dimension_mismatch", m) {}
};
struct TopologyError : Error {
    explicit TopologyError(const std::string& m) : Error("topology", m) {}
};
struct ConvergenceError : Error {
    explicit ConvergenceError(const std::string& m) : Error("non_convergence", m) {}
};
struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& m) : Error("invalid_argument", m) {}
};
struct SingularMatrixError : Error {
    explicit SingularMatrixError(const std::string& m) : Error("singular_matrix", m) {}
};

inline void require_same_size(Index a, Index b, const char* what) {
    if (a != b) {
        throw DimensionError(std::string(what) + ": expected length " + std::to_string(a) +
                             ", got " + std::to_string(b));
    }
}

}  // namespace gridbd
