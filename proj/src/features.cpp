#include "gridbd/features.hpp"

namespace gridbd {

RealVector psi_q_expansion_form(const RealMatrix& yp, const RealMatrix& yq, const ComplexVector& du) {
    require_same_size(yp.cols(), du.size(), "psi_q_expansion_form");
    return yp * du.imag() + yq * du.real();
}

RealVector psi_q_complex_form(const AdmittanceMatrix& y0, const ComplexVector& du) {
    require_same_size(y0.size(), du.size(), "psi_q_complex_form");
    return (y0.y * du).imag();
}

FeatureVector extract_features(const AdmittanceMatrix& y0, const BusState& pre, const BusState& post) {
    require_same_size(y0.size(), pre.size(), "extract_features (pre-fault state)");
    require_same_size(y0.size(), post.size(), "extract_features (post-fault state)");
    const ComplexVector du = post.voltage - pre.voltage;
    const RealMatrix yp = y0.real();
    const RealMatrix yq = y0.imag();
    FeatureVector f;
    f.psi_q = psi_q_expansion_form(yp, yq, du);
    f.psi_p = yp * du.real() - yq * du.imag();
    return f;
}

}  // namespace gridbd
