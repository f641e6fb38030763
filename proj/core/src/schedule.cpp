#include "rigidity/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rigidity {

namespace {

double safe_exp(double x) {
    if (x > 700.0) return std::numeric_limits<double>::infinity();
    if (x < -700.0) return 0.0;
    return std::exp(x);
}

}  // namespace

double ScheduleStep::s() const { return safe_exp(log_s); }
double ScheduleStep::eps_j() const { return safe_exp(log_eps); }
double ScheduleStep::k() const { return safe_exp(log_k); }
double ScheduleStep::lambda() const { return safe_exp(log_lambda); }
double ScheduleStep::q() const { return safe_exp(log_q); }
double ScheduleStep::theta() const { return safe_exp(log_theta); }

int schedule_step_bound(double eps, double log_T, double r, double omega) {
    const double inner = omega * std::log(eps) / log_T;  // log_T(eps^omega)
    if (!(inner > 0.0)) return 0;
    const double outer = std::log(inner) / std::log1p(r);
    return static_cast<int>(std::ceil(outer + 1.0 / omega));
}

ScaleSchedule make_schedule(const EngineConfig& cfg_in) {
    EngineConfig cfg = cfg_in;
    cfg.omega = cfg.omega_value();
    const double r = cfg.r, omega = cfg.omega;

    if (!(cfg.eps > 0.0) || cfg.eps >= 1.0)
        throw ScheduleError("schedule: eps must lie in (0,1)");
    if (!(cfg.t > 0.0) || cfg.t >= 1.0 || cfg.t > cfg.rho + 1e-12)
        throw ScheduleError("schedule: t must satisfy 0 < t <= rho < 1");
    if (!(r > 0.0) || !(omega > 0.0))
        throw ScheduleError("schedule: r and omega must be positive");

    ScaleSchedule sched;
    const double log_t = std::log(cfg.t);
    // T = t^(2z+18): the surrogate C_m = m^-z makes C_{t_j}^2 t_j^-18 = T_j^-1 exact
    const double log_T = (2.0 * cfg.z + 18.0) * log_t;

    // B = (base + C* rho) sum_i t^i prod_i (1 + C* t^(i+1)), evaluated to convergence
    double sum = 0.0, prod = 1.0;
    std::vector<double> B_partial;
    for (int i = 0; i < 4000; ++i) {
        sum += std::pow(cfg.t, i);
        prod *= 1.0 + cfg.c_star_budget * std::pow(cfg.t, i + 1);
        B_partial.push_back((cfg.base_star_norm + cfg.c_star_budget * cfg.rho) * sum * prod);
        if (i > 2 && B_partial[static_cast<std::size_t>(i)] -
                             B_partial[static_cast<std::size_t>(i - 1)] <
                         1e-15 * B_partial[static_cast<std::size_t>(i)])
            break;
    }
    sched.B = B_partial.back();
    const double P = cfg.c_hat * cfg.c_hat * (1.0 + sched.B / cfg.rho);
    const double log_P = std::log(P);
    const double log_chat = std::log(cfg.c_hat);

    // feasibility chain: q0 T^(1/r) >= T^(-zbar) >= T^(-1) >= chat^4 P^2 > 1
    // with q0 = (T/P) (kappa rho / chat^2)^r
    const double rhs_kappa =
        ((-(cfg.zbar + 1.0 / r) * log_T - log_T + log_P) / r - std::log(cfg.rho) +
         2.0 * log_chat);
    double log_kappa;
    if (cfg.kappa > 0.0) {
        log_kappa = std::log(cfg.kappa);
        if (cfg.enforce_v33) {
            if (log_kappa < rhs_kappa)
                throw ScheduleError(
                    "schedule infeasible: epsilon too large for this rho/t "
                    "(q0 T^(1/r) >= T^(-zbar) fails; kappa below the feasible threshold)");
        }
    } else {
        log_kappa = rhs_kappa + std::log(2.0);  // minimal feasible kappa with headroom
        cfg.kappa = safe_exp(log_kappa);
    }
    if (cfg.enforce_v33) {
        if (!(cfg.zbar >= 1.0))
            throw ScheduleError("schedule infeasible: T^(-zbar) >= T^(-1) requires zbar >= 1");
        if (!(-log_T >= 4.0 * log_chat + 2.0 * log_P))
            throw ScheduleError(
                "schedule infeasible: epsilon too large for this rho/t (T^(-1) >= chat^4 P^2 "
                "fails)");
        if (!(4.0 * log_chat + 2.0 * log_P > 0.0))
            throw ScheduleError("schedule infeasible: chat^4 P^2 > 1 fails");
    }

    sched.cfg = cfg;
    sched.log_T = log_T;
    sched.log_P = log_P;
    sched.J_star = schedule_step_bound(cfg.eps, log_T, r, omega);
    if (cfg.enforce_v33 && sched.J_star <= 0)
        throw ScheduleError("schedule: eps too large, J* formula degenerates");
    if (sched.J_star > 200000) sched.J_star = 200000;
    // step-table horizon: the J* bound, or enough room to reach a stall/band
    const int horizon = std::min(std::max(sched.J_star, 64), 200000);

    const double log_eps_total = std::log(cfg.eps);
    const double log_cap = -omega * log_eps_total;  // log of eps^-omega

    double log_s = log_kappa + log_eps_total;           // s0 = kappa eps
    double log_eps_j = 2.0 * log_chat - std::log(cfg.rho) + log_eps_total;  // eps0
    sched.J_hat = sched.J_star;
    double prev_log_q = 0.0;
    bool prev_uncapped = false;
    int stalled = 0;  // steps with d below 1.5: the schedule is vacuous beyond
    sched.max_identity_residual = 0.0;
    sched.worst_vartheta_slack = std::numeric_limits<double>::infinity();

    for (int j = 0; j <= horizon; ++j) {
        if (stalled >= 2) break;  // truncated: later steps can never execute
        ScheduleStep st;
        st.j = j;
        st.log_s = log_s;
        st.log_eps = log_eps_j;
        const double log_d_power = r * (log_s - log_eps_j);
        st.capped = log_d_power > log_cap;
        if (st.capped && sched.J_hat == sched.J_star) sched.J_hat = std::max(0, j - 1);
        st.log_d = std::min(log_d_power, log_cap);
        const double d_lin = safe_exp(st.log_d);
        st.d_floor = std::isfinite(d_lin) && d_lin < 4.6e18
                         ? std::max<long long>(1, static_cast<long long>(std::floor(d_lin)))
                         : (1ll << 62);
        st.t_j = std::pow(cfg.t, j + 1);
        st.log_T_j = (j + 1) * log_T;
        const double log_tj = (j + 1) * log_t;
        st.log_l = st.log_d - 2.0 * log_tj;
        st.log_lambda = log_s + st.log_d - log_tj;
        st.log_k = log_s + st.log_l;
        st.log_q = st.log_d + st.log_T_j - log_P;
        // theta_j = l^9 C_{t_j}^2 s^-1 eps_j with C_{t_j} = t_j^-z
        st.log_theta = 9.0 * st.log_l - 2.0 * cfg.z * log_tj - log_s + log_eps_j;
        st.B_j = j < static_cast<int>(B_partial.size()) ? B_partial[static_cast<std::size_t>(j)]
                                                        : sched.B;

        if (prev_uncapped && !st.capped && j > 0) {
            const double res = std::abs(st.log_q - log_T - (1.0 + r) * prev_log_q);
            sched.max_identity_residual = std::max(sched.max_identity_residual, res);
        }
        // vartheta character: theta_j <= (eps0 / (chat^2 eps_{j+1})) T_j
        const double log_eps_next = log_eps_j + log_P - st.log_T_j;
        const double slack = (sched.steps.empty() ? 0.0 : 0.0) +
                             ((2.0 * log_chat - std::log(cfg.rho) + log_eps_total) -
                              2.0 * log_chat - log_eps_next + st.log_T_j) -
                             st.log_theta;
        sched.worst_vartheta_slack = std::min(sched.worst_vartheta_slack, slack);
        if (slack < -1e-9) sched.vartheta_ok = false;

        prev_log_q = st.log_q;
        prev_uncapped = !st.capped;
        if (st.log_d < std::log(1.5))
            ++stalled;
        else
            stalled = 0;
        sched.steps.push_back(st);

        log_s += st.log_d;  // s_{j+1} = s_j d_j (exact track)
        log_eps_j = log_eps_next;
    }
    if (cfg.enforce_v33 && !sched.vartheta_ok)
        throw ScheduleError(
            "schedule infeasible: epsilon too large for this rho/t (vartheta character "
            "theta_j <= eps0/(chat^2 eps_{j+1}) T_j fails)");
    return sched;
}

}  // namespace rigidity
