#include "rollread/perf_model.hpp"

#include <algorithm>
#include <cmath>

#include "rollread/error.hpp"

namespace rollread::model {

void validate(const ModelParams& p) {
  auto fail = [](const char* what) { throw Error(Errc::kInvalidArgument, what); };
  if (!(p.n_blocks >= 1)) fail("n_b must be >= 1");
  if (!(p.bytes >= 0)) fail("f must be >= 0");
  if (!(p.cloud_latency >= 0) || !(p.local_latency >= 0)) fail("latencies must be >= 0");
  if (!(p.compute_per_byte >= 0)) fail("c must be >= 0");
  if (!(p.cloud_bandwidth > 0) || !(p.local_write_bandwidth > 0) ||
      !(p.local_read_bandwidth > 0)) {
    fail("bandwidths must be > 0");
  }
}

double t_seq(const ModelParams& p) {
  return p.n_blocks * p.cloud_latency + p.bytes / p.cloud_bandwidth +
         p.compute_per_byte * p.bytes;
}

double t_cloud(const ModelParams& p) {
  const double per_block = p.bytes / p.n_blocks;
  return p.cloud_latency + per_block / p.cloud_bandwidth + p.local_latency +
         per_block / p.local_write_bandwidth;
}

double t_comp(const ModelParams& p) {
  const double per_block = p.bytes / p.n_blocks;
  return p.local_latency + per_block / p.local_read_bandwidth +
         p.compute_per_byte * per_block;
}

double t_pf(const ModelParams& p) {
  const double cloud = t_cloud(p);
  const double comp = t_comp(p);
  return cloud + (p.n_blocks - 1) * std::max(cloud, comp) + comp;
}

ModelParams without_local_costs(ModelParams p) {
  p.local_latency = 0;
  p.local_write_bandwidth = kInf;
  p.local_read_bandwidth = kInf;
  return p;
}

double speedup(const ModelParams& p) {
  const auto ideal = without_local_costs(p);
  const double pf = t_pf(ideal);
  if (pf == 0) return 1.0;
  return 1.0 + (ideal.n_blocks - 1) * std::min(t_cloud(ideal), t_comp(ideal)) / pf;
}

std::uint64_t optimal_blocks(double compute_per_byte, double bytes, double cloud_latency) {
  if (!(cloud_latency > 0)) throw Error(Errc::kInvalidArgument, "l_c must be > 0");
  const double exact = std::sqrt(compute_per_byte * bytes / cloud_latency);
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(exact)));
}

double asymptote_gap(const ModelParams& p) {
  return p.n_blocks * p.local_latency;
}

}  // namespace rollread::model
