#pragma once

#include <optional>
#include <string>

#include "specarray/neural.hpp"
#include "specarray/tensor.hpp"

namespace specarray {

struct AttackConfig {
    enum class Method : unsigned char { fgsm, pgd };

    Method method = Method::fgsm;
    LpNorm norm = LpNorm::linf;
    double eps = 0.0; // ball radius in tensor-norm units
    int steps = 10;   // PGD iteration count Q
    // When set, eps is resolved per example from the target PSR instead.
    std::optional<double> target_psr_db;
    // Optional extra l2 energy cap on top of the ball constraint; off by default.
    std::optional<double> l2_power_cap;

    double alpha() const { return eps / steps; } // PGD step size
    void validate() const;
    // copy with eps resolved against a concrete reference tensor
    AttackConfig resolved_for(const RealTensor& z_ref) const;
};

std::string method_name(AttackConfig::Method m);
std::string norm_name(LpNorm p);

struct Perturbation {
    RealTensor delta;      // same dims as the attacked input
    double l2_norm = 0.0;
    double linf_norm = 0.0;
    double psr_db = 0.0;   // -inf sentinel when delta = 0
    bool degenerate = false; // zero gradient encountered
};

// Single-step gradient attack in the eval configuration of the network.
// linf: eps * sign(grad) with sign(0) = 0; l2: eps * grad / ||grad||_2,
// degenerate (zero) gradient -> zero perturbation, flagged.
Perturbation fgsm(Network& net, const RealTensor& x, int y, const AttackConfig& cfg);

// Q projected gradient steps of size alpha = eps/Q starting from the clean
// input. A zero gradient mid-run makes the remaining steps no-ops (flagged).
Perturbation pgd(Network& net, const RealTensor& x, int y, const AttackConfig& cfg);

// dispatch on cfg.method; applies the optional l2 cap
Perturbation craft_attack(Network& net, const RealTensor& x, int y,
                          const AttackConfig& cfg);

// linf: componentwise clamp to [center - eps, center + eps];
// l2: radial rescale onto the sphere when outside. Idempotent.
RealTensor project_lp_ball(const RealTensor& x, const RealTensor& center,
                           double eps, LpNorm p);

// 10 log10(||delta||^2 / ||z_ref||^2); -inf for delta = 0
double psr_db(const RealTensor& delta, const RealTensor& z_ref);

// Ball radius hitting a target PSR: exact for l2; for linf assumes a
// full-sign perturbation (||delta||^2 = n eps^2) and the achieved PSR is
// re-measured downstream.
double eps_for_psr(const RealTensor& z_ref, double target_psr_db, LpNorm p);

// Same machinery in the covariance-tensor domain of the DoA classifier.
Perturbation attack_doa_example(Network& net_doa, const RealTensor& cov_input,
                                int theta_label, const AttackConfig& cfg);

} // namespace specarray
