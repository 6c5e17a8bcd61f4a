#ifndef DRUGREC_LOSS_HPP
#define DRUGREC_LOSS_HPP

#include "drugrec/tape.hpp"
#include "drugrec/tensor.hpp"

namespace drugrec {

struct LossConfig {
    double alpha = 0.95;  // prediction-loss mix
    double kp = 0.05;     // proportional correction factor
    double gamma = 0.06;  // acceptance interaction rate

    void validate() const;
};

struct LossBreakdown {
    double bce = 0.0;
    double multi = 0.0;
    double ddi = 0.0;
    double beta = 1.0;
    double total = 0.0;
};

/// Summed binary cross entropy over drugs (not averaged).
ad::Value bce_loss(ad::Tape& tape, const BitVec& truth, ad::Value scores,
                   bool clamp = true);

/// Pairwise margin loss over (positive, negative) label pairs, divided by
/// |M|. Zero when either side of the pair set is empty.
ad::Value multi_hinge_loss(ad::Tape& tape, const BitVec& truth, ad::Value scores);

/// sum_ij D_ij o_i o_j over the full matrix; symmetric pairs count twice.
/// Rejects asymmetric or diagonal-bearing D.
ad::Value ddi_loss(ad::Tape& tape, ad::Value scores, const ByteMatrix& ddi);

void require_interaction_matrix(const ByteMatrix& ddi);

/// Piecewise proportional controller: 1 below the acceptance rate, then a
/// linear ramp down clamped at 0.
double controller_beta(double ddi_rate, const LossConfig& cfg);

/// total = beta (alpha bce + (1-alpha) multi) + (1-beta) ddi.
/// beta enters as a constant; it is computed from thresholded predictions
/// outside the graph and carries no gradient.
ad::Value combine(ad::Tape& tape, ad::Value bce, ad::Value multi, ad::Value ddi,
                  double beta, const LossConfig& cfg);

// Plain-value conveniences, mostly for tests and reporting. Each routes
// through a throwaway tape so there is a single formula definition.
double bce_loss_value(const BitVec& truth, const std::vector<double>& scores);
double multi_hinge_loss_value(const BitVec& truth, const std::vector<double>& scores);
double ddi_loss_value(const std::vector<double>& scores, const ByteMatrix& ddi);

} // namespace drugrec

#endif
