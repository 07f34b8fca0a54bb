#include "specarray/attacks.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace specarray {

void AttackConfig::validate() const {
    if (eps < 0.0) throw std::domain_error("AttackConfig: negative eps");
    if (steps < 1) throw std::domain_error("AttackConfig: steps must be >= 1");
    if (target_psr_db && *target_psr_db >= 0.0)
        throw std::domain_error("AttackConfig: target PSR must be below 0 dB");
    if (l2_power_cap && *l2_power_cap < 0.0)
        throw std::domain_error("AttackConfig: negative l2 cap");
}

AttackConfig AttackConfig::resolved_for(const RealTensor& z_ref) const {
    AttackConfig out = *this;
    if (target_psr_db) {
        out.eps = eps_for_psr(z_ref, *target_psr_db, norm);
        out.target_psr_db.reset();
    }
    return out;
}

std::string method_name(AttackConfig::Method m) {
    return m == AttackConfig::Method::fgsm ? "fgsm" : "pgd";
}

std::string norm_name(LpNorm p) { return p == LpNorm::l2 ? "l2" : "linf"; }

namespace {

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Perturbation finish(RealTensor delta, const RealTensor& z_ref, bool degenerate) {
    Perturbation p;
    p.l2_norm = delta.l2_norm();
    p.linf_norm = delta.linf_norm();
    p.psr_db = psr_db(delta, z_ref);
    p.degenerate = degenerate;
    p.delta = std::move(delta);
    return p;
}

} // namespace

Perturbation fgsm(Network& net, const RealTensor& x, int y, const AttackConfig& cfg) {
    cfg.validate();
    if (cfg.method != AttackConfig::Method::fgsm)
        throw std::invalid_argument("fgsm: config method mismatch");
    const AttackConfig rc = cfg.resolved_for(x);
    RealTensor delta(x.shape);
    if (rc.eps == 0.0) return finish(std::move(delta), x, false);

    const RealTensor grad = net.loss_and_gradients(x, y).grad_input;
    const double g2 = grad.l2_norm();
    if (g2 == 0.0) return finish(std::move(delta), x, true);
    if (rc.norm == LpNorm::linf) {
        for (std::size_t i = 0; i < grad.data.size(); ++i)
            delta.data[i] = rc.eps * sign0(grad.data[i]);
    } else {
        for (std::size_t i = 0; i < grad.data.size(); ++i)
            delta.data[i] = rc.eps * grad.data[i] / g2;
    }
    return finish(std::move(delta), x, false);
}

Perturbation pgd(Network& net, const RealTensor& x, int y, const AttackConfig& cfg) {
    cfg.validate();
    if (cfg.method != AttackConfig::Method::pgd)
        throw std::invalid_argument("pgd: config method mismatch");
    const AttackConfig rc = cfg.resolved_for(x);
    if (rc.eps == 0.0) return finish(RealTensor(x.shape), x, false);

    const double alpha = rc.alpha();
    RealTensor adv = x;
    bool degenerate = false;
    for (int q = 0; q < rc.steps; ++q) {
        const RealTensor grad = net.loss_and_gradients(adv, y).grad_input;
        if (grad.l2_norm() == 0.0) {
            degenerate = true;
            break;
        }
        if (rc.norm == LpNorm::linf) {
            for (std::size_t i = 0; i < grad.data.size(); ++i)
                adv.data[i] += alpha * sign0(grad.data[i]);
        } else {
            const double g2 = grad.l2_norm();
            for (std::size_t i = 0; i < grad.data.size(); ++i)
                adv.data[i] += alpha * grad.data[i] / g2;
        }
        adv = project_lp_ball(adv, x, rc.eps, rc.norm);
    }
    return finish(adv - x, x, degenerate);
}

Perturbation craft_attack(Network& net, const RealTensor& x, int y,
                          const AttackConfig& cfg) {
    Perturbation p = cfg.method == AttackConfig::Method::fgsm ? fgsm(net, x, y, cfg)
                                                              : pgd(net, x, y, cfg);
    if (cfg.l2_power_cap && p.l2_norm > *cfg.l2_power_cap && p.l2_norm > 0.0) {
        const double scale = *cfg.l2_power_cap / p.l2_norm;
        for (double& v : p.delta.data) v *= scale;
        p.l2_norm = p.delta.l2_norm();
        p.linf_norm = p.delta.linf_norm();
        p.psr_db = psr_db(p.delta, x);
    }
    return p;
}

RealTensor project_lp_ball(const RealTensor& x, const RealTensor& center,
                           double eps, LpNorm p) {
    x.check_same_shape(center);
    if (eps < 0.0) throw std::domain_error("project_lp_ball: negative radius");
    RealTensor out = x;
    if (p == LpNorm::linf) {
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            const double lo = center.data[i] - eps;
            const double hi = center.data[i] + eps;
            out.data[i] = std::min(std::max(out.data[i], lo), hi);
        }
        return out;
    }
    double dist_sq = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double d = out.data[i] - center.data[i];
        dist_sq += d * d;
    }
    const double dist = std::sqrt(dist_sq);
    if (dist <= eps) return out;
    const double scale = eps / dist;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = center.data[i] + (out.data[i] - center.data[i]) * scale;
    return out;
}

double psr_db(const RealTensor& delta, const RealTensor& z_ref) {
    const double ref = z_ref.l2_norm();
    if (!(ref > 0.0)) throw std::domain_error("psr_db: zero reference signal");
    const double d = delta.l2_norm();
    if (d == 0.0) return -std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(d / ref);
}

double eps_for_psr(const RealTensor& z_ref, double target_psr_db, LpNorm p) {
    const double ref = z_ref.l2_norm();
    if (!(ref > 0.0)) throw std::domain_error("eps_for_psr: zero reference signal");
    const double eps_l2 = ref * std::pow(10.0, target_psr_db / 20.0);
    if (p == LpNorm::l2) return eps_l2;
    return eps_l2 / std::sqrt(static_cast<double>(z_ref.size()));
}

Perturbation attack_doa_example(Network& net_doa, const RealTensor& cov_input,
                                int theta_label, const AttackConfig& cfg) {
    if (!(cov_input.shape == net_doa.in_shape))
        throw std::invalid_argument("attack_doa_example: tensor is not the network input");
    return craft_attack(net_doa, cov_input, theta_label, cfg);
}

TrainResult adversarial_train(const LabeledExamples& ds, NetArch arch,
                              const TrainConfig& cfg, const AttackConfig& attack) {
    attack.validate();
    auto perturb = [attack](Network& net, BatchTensor& batch,
                            const std::vector<int>& labels) {
        if (attack.eps == 0.0 && !attack.target_psr_db) return;
        for (int b = 0; b < batch.n; ++b) {
            const RealTensor x = batch.extract(b);
            const Perturbation p =
                craft_attack(net, x, labels[static_cast<std::size_t>(b)], attack);
            batch.insert(b, x + p.delta);
        }
    };
    return detail::train_loop_with_perturbation(ds, arch, cfg, perturb);
}

} // namespace specarray
