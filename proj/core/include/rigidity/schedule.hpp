#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rigidity {

/// Thrown when a requested schedule violates its feasibility chain; the CLI
/// maps this to exit code 2.
class ScheduleError : public std::runtime_error {
  public:
    explicit ScheduleError(const std::string& what) : std::runtime_error(what) {}
};

struct EngineConfig {
    double eps = 1e-4;    // elastic energy scale
    double rho = 0.1;
    int q_exponent = 4;
    double t = 0.1;       // must satisfy 0 < t <= rho
    double h_star = 0.1;
    double eta = 0.2;
    double r = 1.0 / 18.0;
    double omega = -1.0;  // < 0: use eta/36
    double z = 4.0;       // C_m surrogate exponent: C_m = m^(-z)
    double zbar = 1.0;
    double c_hat = 2.0;
    double c_star_budget = 1.0;  // C_* in the B_j budget
    double kappa = 0.0;          // s0 = kappa eps; <= 0 selects the minimal feasible kappa
    double base_star_norm = 1.0; // |Omega_y|_* stand-in for schedule-only builds
    double m = -1.0;             // per-step m; < 0: m_j = t^(j+1)
    double carve_c = 4.0;        // c_* in the carving thresholds
    double coverage_c = 1.0;     // coverage factor for lambda squares
    int max_steps = 8;
    double budget_c1 = 8.0;      // pinned step-growth constants (star norm budget)
    double budget_c = 16.0;
    double omega_rho_factor = 1.0;  // Omega_rho margin = factor * rho
    bool enforce_v33 = true;        // explicit kappa must satisfy the feasibility chain
    int threads = 1;

    double omega_value() const { return omega < 0.0 ? eta / 36.0 : omega; }
};

struct ScheduleStep {
    int j = 0;
    double log_s = 0.0, log_eps = 0.0;
    double log_d = 0.0;     // exact d (min of power law and cap), log scale
    long long d_floor = 1;  // floor(d), clamped to [1, 2^62]
    bool capped = false;    // cap branch eps^(-omega) active
    double t_j = 0.0;
    double log_T_j = 0.0;
    double log_l = 0.0, log_lambda = 0.0, log_k = 0.0;
    double log_q = 0.0;
    double log_theta = 0.0;
    double B_j = 0.0;

    double s() const;
    double eps_j() const;
    double k() const;
    double lambda() const;
    double q() const;
    double theta() const;
};

struct ScaleSchedule {
    EngineConfig cfg;  // resolved copy (omega and kappa materialized)
    double log_T = 0.0, log_P = 0.0, B = 0.0;
    int J_star = 0;
    int J_hat = 0;  // last step index before the cap engages (J_star when never)
    std::vector<ScheduleStep> steps;
    /// max |log q_{j+1} - log T - (1+r) log q_j| over uncapped transitions
    double max_identity_residual = 0.0;
    bool vartheta_ok = true;
    double worst_vartheta_slack = 0.0;  // min over j of (rhs - lhs) in log space
};

/// Builds the coarsening schedule. All internal algebra runs in log space so
/// feasible parameter ranges (which involve extreme powers of T) stay
/// representable. Throws ScheduleError on violated preconditions; with
/// kappa <= 0 the minimal feasible kappa is selected, which cannot fail the
/// feasibility chain.
ScaleSchedule make_schedule(const EngineConfig& cfg);

/// J* = ceil(log_{1+r}(log_T eps^omega) + 1/omega), evaluated directly.
int schedule_step_bound(double eps, double log_T, double r, double omega);

}  // namespace rigidity
