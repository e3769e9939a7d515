#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace qrkit {

enum class LMStatus { running, converged_gradient, converged_step, converged_energy, max_iterations, failed };

inline std::string_view to_string(LMStatus s) {
  switch (s) {
    case LMStatus::running: return "running";
    case LMStatus::converged_gradient: return "converged_gradient";
    case LMStatus::converged_step: return "converged_step";
    case LMStatus::converged_energy: return "converged_energy";
    case LMStatus::max_iterations: return "max_iterations";
    case LMStatus::failed: return "failed";
  }
  return "?";
}

/// One damped-step trial. Row 0 describes the starting point. A rejected
/// trial keeps the energy of the current iterate.
struct LMRecord {
  int iter = 0;
  double energy = 0;
  double lambda = 0;
  double step_norm = 0;
  double grad_norm = 0;
  bool accepted = false;
  double time_s = 0;
};

struct LMTrace {
  std::vector<LMRecord> records;
  LMStatus status = LMStatus::running;
  std::string message;

  double initial_energy() const { return records.empty() ? 0.0 : records.front().energy; }
  double final_energy() const { return records.empty() ? 0.0 : records.back().energy; }
  double total_time_s() const { return records.empty() ? 0.0 : records.back().time_s; }
  int iterations() const { return records.empty() ? 0 : records.back().iter; }

  int accepted_steps() const {
    int n = 0;
    for (std::size_t i = 1; i < records.size(); ++i) n += records[i].accepted ? 1 : 0;
    return n;
  }

  /// True when every accepted trial lowers the energy below the previous
  /// accepted one.
  bool accepted_energies_decrease() const {
    bool have = false;
    double last = 0;
    for (const auto& r : records) {
      if (!r.accepted) continue;
      if (have && !(r.energy < last)) return false;
      last = r.energy;
      have = true;
    }
    return true;
  }
};

inline constexpr std::string_view kTraceCsvHeader = "iter,energy,lambda,step_norm,grad_norm,accepted,time_s";

/// 17 significant digits, enough to round-trip a double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trace_csv(std::ostream& os, const LMTrace& trace) {
  os << kTraceCsvHeader << '\n';
  for (const auto& r : trace.records) {
    os << r.iter << ',' << format_double(r.energy) << ',' << format_double(r.lambda) << ','
       << format_double(r.step_norm) << ',' << format_double(r.grad_norm) << ',' << (r.accepted ? 1 : 0) << ','
       << format_double(r.time_s) << '\n';
  }
}

}  // namespace qrkit
