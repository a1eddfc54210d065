#pragma once

// Closed-form cost model of sequential transfers versus rolling prefetch.
//
// Sequential reads pay cloud latency once per block, the bandwidth cost of the
// whole payload, and compute, one after another. Rolling prefetch overlaps the
// download of block i+1 with the local read and compute of block i, so after
// the first download each block costs max(cloud, comp), plus the final
// compute that nothing can hide.

#include <cstdint>
#include <limits>

namespace rollread::model {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct ModelParams {
  double n_blocks = 1;              // n_b, >= 1
  double bytes = 0;                 // f, total bytes
  double cloud_latency = 0;         // l_c, seconds per request
  double cloud_bandwidth = 1;       // b_cr, bytes/s
  double compute_per_byte = 0;      // c, seconds/byte
  double local_latency = 0;         // l_l, seconds
  double local_write_bandwidth = kInf;  // b_lw, bytes/s
  double local_read_bandwidth = kInf;   // b_lr, bytes/s
};

// Throws rollread::Error(InvalidArgument) when an invariant is broken.
void validate(const ModelParams& p);

// n_b * l_c + f / b_cr + c * f
double t_seq(const ModelParams& p);

// Download one block from the cloud and write it locally.
double t_cloud(const ModelParams& p);

// Read one block locally and process it.
double t_comp(const ModelParams& p);

// t_cloud + (n_b - 1) * max(t_cloud, t_comp) + t_comp
double t_pf(const ModelParams& p);

// The same parameters with local storage made free (l_l = 0, infinite local
// bandwidths), the regime in which the speedup identity holds.
ModelParams without_local_costs(ModelParams p);

// t_seq / t_pf with local costs dropped; always in [1, 2).
double speedup(const ModelParams& p);

// round(sqrt(c * f / l_c)) clamped to >= 1. Requires l_c > 0.
std::uint64_t optimal_blocks(double compute_per_byte, double bytes, double cloud_latency);

// Large-n_b gap between the prefetch and sequential asymptotes,
// n_b * (l_c + l_l) - n_b * l_c.
double asymptote_gap(const ModelParams& p);

}  // namespace rollread::model
