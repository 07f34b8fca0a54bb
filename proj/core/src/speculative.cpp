#include "specarray/speculative.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <future>
#include <stdexcept>

namespace specarray {

void LatencyModel::validate() const {
    if (!(p_agree >= 0.0 && p_agree <= 1.0))
        throw std::domain_error("LatencyModel: p_agree outside [0, 1]");
    if (tau_dl < 0.0 || tau_glrt < 0.0)
        throw std::domain_error("LatencyModel: negative latency");
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

SpeculativeTrace assemble(Task task, int true_label, int dl, double tau_dl,
                          int glrt, double tau_glrt) {
    SpeculativeTrace tr;
    tr.task = task;
    tr.true_label = true_label;
    tr.dl_output = dl;
    tr.glrt_output = glrt;
    tr.agreement = dl == glrt;
    tr.final_output = tr.agreement ? dl : glrt;
    tr.restarted = !tr.agreement;
    tr.tau_dl = tau_dl;
    tr.tau_glrt = tau_glrt;
    return tr;
}

// Runs the two paths per the options; the DL closure executes first on the
// calling thread so its output is committed before validation lands.
template <typename DlFn, typename GlrtFn>
SpeculativeTrace run_paths(Task task, int true_label, const SpeculativeOptions& opt,
                           DlFn&& dl_fn, GlrtFn&& glrt_fn) {
    int dl = 0, glrt = 0;
    double tau_dl = opt.tau_dl_s, tau_glrt = opt.tau_glrt_s;
    if (opt.concurrent) {
        std::future<std::pair<int, double>> pending =
            std::async(std::launch::async, [&]() -> std::pair<int, double> {
                const Clock::time_point t0 = Clock::now();
                const int label = glrt_fn();
                return {label, seconds_since(t0)};
            });
        const Clock::time_point t0 = Clock::now();
        dl = dl_fn();
        const double measured_dl = seconds_since(t0);
        const auto [glrt_label, measured_glrt] = pending.get();
        glrt = glrt_label;
        if (!opt.inject_latencies) {
            tau_dl = measured_dl;
            tau_glrt = measured_glrt;
        }
    } else {
        const Clock::time_point t0 = Clock::now();
        dl = dl_fn();
        const double measured_dl = seconds_since(t0);
        const Clock::time_point t1 = Clock::now();
        glrt = glrt_fn();
        const double measured_glrt = seconds_since(t1);
        if (!opt.inject_latencies) {
            tau_dl = measured_dl;
            tau_glrt = measured_glrt;
        }
    }
    return assemble(task, true_label, dl, tau_dl, glrt, tau_glrt);
}

} // namespace

SpeculativeTrace speculative_infer(const ReceivedArray& z, Network& net,
                                   const GlrtDetectionConfig& glrt_cfg,
                                   const SpeculativeOptions& opt) {
    if (!glrt_cfg.gamma_t)
        throw std::logic_error("speculative_infer: GLRT threshold not calibrated");
    const RealTensor x = to_real_tensor(z.samples);
    return run_paths(
        Task::detection, z.meta.label, opt,
        [&]() { return net.predict(x); },
        [&]() { return glrt_detect(z, glrt_cfg); });
}

SpeculativeTrace speculative_infer(const RealTensor& cov_tensor, int true_label,
                                   Network& net, const GlrtDoaConfig& glrt_cfg,
                                   const SpeculativeOptions& opt) {
    return run_paths(
        Task::doa, true_label, opt,
        [&]() { return net.predict(cov_tensor); },
        [&]() {
            const CovariancePair pair =
                covariance_pair_from_tensor(cov_tensor, glrt_cfg.zeta);
            return glrt_doa(pair, glrt_cfg).class_index;
        });
}

double expected_latency(const LatencyModel& m) {
    m.validate();
    return m.p_agree * m.tau_dl + (1.0 - m.p_agree) * (m.tau_dl + m.tau_glrt);
}

double agreement_rate(const std::vector<SpeculativeTrace>& traces) {
    if (traces.empty()) throw std::domain_error("agreement_rate: no traces");
    std::size_t agree = 0;
    for (const SpeculativeTrace& t : traces) agree += t.agreement ? 1 : 0;
    return static_cast<double>(agree) / static_cast<double>(traces.size());
}

double mean_decision_latency(const std::vector<SpeculativeTrace>& traces) {
    if (traces.empty()) throw std::domain_error("mean_decision_latency: no traces");
    double sum = 0.0;
    for (const SpeculativeTrace& t : traces)
        sum += t.tau_dl + (t.restarted ? t.tau_glrt : 0.0);
    return sum / static_cast<double>(traces.size());
}

void write_trace_csv(const std::string& path,
                     const std::vector<SpeculativeTrace>& traces) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
    out << "task,true_label,dl_out,glrt_out,agree,final,tau_dl_ms,tau_glrt_ms,restarted\n";
    char line[160];
    for (const SpeculativeTrace& t : traces) {
        std::snprintf(line, sizeof(line), "%s,%d,%d,%d,%d,%d,%.6f,%.6f,%d\n",
                      t.task == Task::detection ? "det" : "doa", t.true_label,
                      t.dl_output, t.glrt_output, t.agreement ? 1 : 0,
                      t.final_output, t.tau_dl * 1e3, t.tau_glrt * 1e3,
                      t.restarted ? 1 : 0);
        out << line;
    }
}

} // namespace specarray
