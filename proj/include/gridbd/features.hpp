#pragma once

#include "gridbd/grid.hpp"

namespace gridbd {

// psi = Y0 * (u' - u0). psi_q feeds the classifiers; psi_p is kept for diagnostics.
struct FeatureVector {
    RealVector psi_q;
    RealVector psi_p;
};

// Computes psi_q through the real/imaginary expansion Yp*duq + Yq*dup.
FeatureVector extract_features(const AdmittanceMatrix& y0, const BusState& pre, const BusState& post);

// Same quantity through the complex product Im(Y0 * du).
RealVector psi_q_complex_form(const AdmittanceMatrix& y0, const ComplexVector& du);
RealVector psi_q_expansion_form(const RealMatrix& yp, const RealMatrix& yq, const ComplexVector& du);

}  // namespace gridbd
