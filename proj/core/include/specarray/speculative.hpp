#pragma once

#include <string>
#include <vector>

#include "specarray/glrt.hpp"
#include "specarray/neural.hpp"

namespace specarray {

struct SpeculativeTrace {
    Task task = Task::detection;
    int true_label = 0;
    int dl_output = 0;
    int glrt_output = 0;
    bool agreement = false;
    int final_output = 0;
    double tau_dl = 0.0;   // seconds
    double tau_glrt = 0.0; // seconds
    bool restarted = false;
};

struct LatencyModel {
    double p_agree = 1.0;
    double tau_dl = 0.0;
    double tau_glrt = 0.0;

    void validate() const; // throws std::domain_error
};

struct SpeculativeOptions {
    // Run the GLRT validation on a separate execution context. Outputs are
    // identical to the sequential path; only scheduling differs.
    bool concurrent = false;
    // Inject fixed latencies instead of reading the wall clock, for
    // deterministic traces.
    bool inject_latencies = true;
    double tau_dl_s = 0.5e-3;
    double tau_glrt_s = 5e-3;
    // opaque downstream stage re-run on a restart; accounted in summaries
    double postprocess_s = 0.0;
};

// Detection: the DL path consumes the real tensor view of z, the GLRT path
// the complex observation. Both see the same data; the consistency rule
// picks the final label.
SpeculativeTrace speculative_infer(const ReceivedArray& z, Network& net,
                                   const GlrtDetectionConfig& glrt_cfg,
                                   const SpeculativeOptions& opt);

// DoA: both paths consume the same (possibly perturbed) covariance tensor;
// the GLRT path reconstructs the complex halves from it.
SpeculativeTrace speculative_infer(const RealTensor& cov_tensor, int true_label,
                                   Network& net, const GlrtDoaConfig& glrt_cfg,
                                   const SpeculativeOptions& opt);

// p_agree * tau_dl + (1 - p_agree) * (tau_dl + tau_glrt)
double expected_latency(const LatencyModel& m);

// fraction of traces with agreement = true; empty input -> domain error
double agreement_rate(const std::vector<SpeculativeTrace>& traces);

// mean of tau_dl + (restarted ? tau_glrt : 0) over the traces
double mean_decision_latency(const std::vector<SpeculativeTrace>& traces);

// columns: task,true_label,dl_out,glrt_out,agree,final,tau_dl_ms,tau_glrt_ms,restarted
void write_trace_csv(const std::string& path,
                     const std::vector<SpeculativeTrace>& traces);

} // namespace specarray
