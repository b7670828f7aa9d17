#include "vvc/chanceopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>
#include "json.hpp"

#include "vvc/errors.hpp"

namespace vvc {

namespace {

constexpr std::array<Family, 4> kFamilies{Family::QMax, Family::QMin, Family::VMax, Family::VMin};

// f(y) = 1/2 (y + sqrt(xi^2 + y^2)) and its derivatives, written to avoid
// cancellation for negative y.
double hinge(double y, double xi) {
    const double r = std::hypot(xi, y);
    return y >= 0.0 ? 0.5 * (y + r) : 0.5 * xi * xi / (r - y);
}

double hinge_d1(double y, double xi) {
    const double r = std::hypot(xi, y);
    return y >= 0.0 ? 0.5 * (1.0 + y / r) : 0.5 * xi * xi / (r * (r - y));
}

double hinge_d2(double y, double xi) {
    const double r = std::hypot(xi, y);
    return 0.5 * xi * xi / (r * r * r);
}

Eigen::VectorXcd modal_weights(const SensitivityModel& model, const Eigen::VectorXd& rho) {
    const Eigen::VectorXd drive = Eigen::VectorXd::Ones(rho.size()) - rho;
    return model.eig.P_inv * drive.cast<cplx>();
}

void check_shift(const SensitivityModel& model, double t) {
    if (!(t + model.lambda_min() > 1e-12)) {
        throw SingularSystem(fmt::format("X + {} I is not positive definite", t));
    }
}

// q(t) and dq/dt from precomputed modal weights.
void modal_q(const SensitivityModel& model, const Eigen::VectorXcd& w, double t, Eigen::VectorXd& q,
             Eigen::VectorXd* dq) {
    const Eigen::VectorXcd shifted = model.eig.lambda.array() + t;
    const Eigen::VectorXcd a = w.array() / shifted.array();
    q = (model.eig.P * a).real();
    if (dq) {
        const Eigen::VectorXcd b = -a.array() / shifted.array();
        *dq = (model.eig.P * b).real();
    }
}

double family_sign(Family f) { return (f == Family::QMax || f == Family::VMax) ? 1.0 : -1.0; }

bool is_voltage(Family f) { return f == Family::VMax || f == Family::VMin; }

bool active(const DesignSpec& spec, Family f) { return spec.epsilon[static_cast<int>(f)] < 1.0; }

// h_{f,n} for all n given q and X q.
Eigen::VectorXd family_values(Family f, const Eigen::VectorXd& q, const Eigen::VectorXd& xq, const Eigen::VectorXd& rho,
                              const DesignSpec& spec) {
    switch (f) {
        case Family::QMax:
            return q - spec.q_max;
        case Family::QMin:
            return spec.q_min - q;
        case Family::VMax:
            return xq + rho - spec.nu_max;
        case Family::VMin:
            return spec.nu_min - xq - rho;
    }
    return {};
}

}  // namespace

const char* family_name(Family f) {
    switch (f) {
        case Family::QMax:
            return "q_max";
        case Family::QMin:
            return "q_min";
        case Family::VMax:
            return "v_max";
        case Family::VMin:
            return "v_min";
    }
    return "?";
}

double StepRule::at(int p) const {
    if (kind == Kind::Constant) return gamma;
    return std::pow(1.0 + p, -exponent);
}

StabilityForm DesignProblem::stability_form() const {
    if (spec.stability) return *spec.stability;
    return model.symmetric ? StabilityForm::Spectral : StabilityForm::NormBound;
}

void DesignProblem::validate() const {
    const auto n = static_cast<Eigen::Index>(model.size());
    if (rho.empty()) throw DomainError("design problem has no intervals");
    for (std::size_t m = 0; m < rho.size(); ++m) {
        if (rho[m].empty()) throw DomainError(fmt::format("interval {} has no samples", m));
        for (const auto& r : rho[m]) {
            if (r.size() != n) throw DomainError(fmt::format("sample of length {} for a model of size {}", r.size(), n));
            if (!r.allFinite()) throw DomainError("non-finite voltage sample");
        }
    }
    if (spec.q_min.size() != n || spec.q_max.size() != n || spec.nu_min.size() != n || spec.nu_max.size() != n) {
        throw DomainError("box and limit vectors must match the model size");
    }
    if (!(spec.q_min.array() < spec.q_max.array()).all()) throw ConfigError("q_min must be below q_max");
    if (!(spec.nu_min.array() < spec.nu_max.array()).all()) throw ConfigError("nu_min must be below nu_max");
    for (double eps : spec.epsilon) {
        if (!(eps > 0.0)) throw ConfigError("violation probabilities must be positive");
    }
    if (!(spec.xi > 0.0)) throw ConfigError("xi must be positive");
    if (!(spec.d > 0.0)) throw ConfigError("d must be positive");
    if (!(spec.e > 0.0)) throw ConfigError("stop tolerance must be positive");
    if (spec.max_outer < 1) throw ConfigError("max_outer must be at least 1");
    if (spec.step.kind == StepRule::Kind::Constant && !(spec.step.gamma > 0.0 && spec.step.gamma <= 1.0)) {
        throw ConfigError("constant step must lie in (0, 1]");
    }
    if (spec.step.kind == StepRule::Kind::Diminishing && !(spec.step.exponent > 0.0 && spec.step.exponent <= 1.0)) {
        throw ConfigError("step exponent must lie in (0, 1]");
    }
}

DesignProblem make_design_problem(const SensitivityModel& model,
                                  const std::vector<std::vector<Eigen::VectorXd>>& rho_full, const DesignSpec& spec) {
    DesignProblem p;
    p.model = model;
    p.spec = spec;
    p.rho.resize(rho_full.size());
    for (std::size_t m = 0; m < rho_full.size(); ++m) {
        for (const auto& full : rho_full[m]) {
            Eigen::VectorXd r(model.size());
            for (int k = 0; k < model.size(); ++k) {
                const int node = model.nodes.at(k);
                if (node >= full.size()) throw DomainError("voltage sample shorter than the model node list");
                r(k) = full(node);
            }
            p.rho[m].push_back(std::move(r));
        }
    }
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd q_of_x(const Eigen::Vector2d& x, const SensitivityModel& model, const Eigen::VectorXd& rho) {
    const double t = x.sum();
    check_shift(model, t);
    Eigen::VectorXd q;
    modal_q(model, modal_weights(model, rho), t, q, nullptr);
    return q;
}

Eigen::MatrixXd grad_q(const Eigen::Vector2d& x, const SensitivityModel& model, const Eigen::VectorXd& rho) {
    const double t = x.sum();
    check_shift(model, t);
    Eigen::VectorXd q, dq;
    modal_q(model, modal_weights(model, rho), t, q, &dq);
    Eigen::MatrixXd g(2, dq.size());
    g.row(0) = dq.transpose();
    g.row(1) = dq.transpose();
    return g;
}

HValues eval_h(const Eigen::Vector2d& x, const DesignProblem& problem, const Eigen::VectorXd& rho) {
    HValues hv;
    const auto& spec = problem.spec;
    hv.q = q_of_x(x, problem.model, rho);
    const Eigen::VectorXd xq = problem.model.X * hv.q;
    hv.h0 = hv.q.squaredNorm();
    for (Family f : kFamilies) hv.h[static_cast<int>(f)] = family_values(f, hv.q, xq, rho, spec);
    const double t = x.sum();
    if (problem.stability_form() == StabilityForm::Spectral) {
        hv.h5 = (t - 2.0) * Eigen::VectorXd::Ones(problem.model.size()) + problem.model.eig.lambda.real();
        hv.h6 = -t;
    } else {
        hv.h5 = Eigen::VectorXd::Constant(1, t - 2.0 + problem.model.norm2);
        hv.h6 = problem.model.norm2 - t;
    }
    hv.h7 = -x(0);
    hv.h8 = x(1);
    return hv;
}

double smooth_g(double h, double u, double eps, double xi) { return hinge(h + u, xi) - u * eps; }

double cvar_constraint_estimate(const Eigen::Vector2d& x, double u, Family family, int n, int m,
                                const DesignProblem& problem) {
    const auto& samples = problem.rho.at(m);
    const double eps = problem.spec.epsilon[static_cast<int>(family)];
    double sum = 0.0;
    for (const auto& rho : samples) {
        const Eigen::VectorXd q = q_of_x(x, problem.model, rho);
        const Eigen::VectorXd xq = problem.model.X * q;
        const double h = family_values(family, q, xq, rho, problem.spec)(n);
        sum += smooth_g(h, u, eps, problem.spec.xi);
    }
    return sum / static_cast<double>(samples.size());
}

HingeMinimum minimize_hinge_over_u(const Eigen::VectorXd& h, double eps, double xi) {
    const double ns = static_cast<double>(h.size());
    auto slope = [&](double u) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < h.size(); ++i) s += hinge_d1(h(i) + u, xi);
        return s / ns - eps;
    };
    auto value = [&](double u) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < h.size(); ++i) s += hinge(h(i) + u, xi);
        return s / ns - u * eps;
    };
    HingeMinimum best;
    if (slope(0.0) >= 0.0 || eps >= 1.0) {
        best.u = 0.0;
        best.value = value(0.0);
        return best;
    }
    double lo = 0.0;
    double hi = std::max(0.0, -h.minCoeff()) + 10.0 * xi + 1e-3;
    while (slope(hi) <= 0.0) {
        lo = hi;
        hi = 2.0 * hi + 1.0;
        if (hi > 1e12) break;
    }
    double u = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        double s1 = 0.0, s2 = 0.0;
        for (Eigen::Index i = 0; i < h.size(); ++i) {
            s1 += hinge_d1(h(i) + u, xi);
            s2 += hinge_d2(h(i) + u, xi);
        }
        s1 = s1 / ns - eps;
        s2 /= ns;
        if (s1 > 0.0) {
            hi = u;
        } else {
            lo = u;
        }
        if (hi - lo <= 1e-15 * std::max(1.0, hi)) break;
        double next = s2 > 0.0 ? u - s1 / s2 : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        u = next;
    }
    best.u = u;
    best.value = value(u);
    return best;
}

Majorizers majorizer_matrices(const DesignProblem& problem) {
    const auto& model = problem.model;
    const int n = model.size();
    const auto& lambda = model.eig.lambda;
    Majorizers out;
    for (Family f : kFamilies) out[static_cast<int>(f)].assign(problem.rho.size(), Eigen::VectorXd::Zero(n));
    Eigen::VectorXd scale_real(n);
    Eigen::VectorXd scale_abs(n);
    std::vector<bool> real(n);
    for (int k = 0; k < n; ++k) {
        real[k] = std::abs(lambda(k).imag()) <= 1e-12 * std::abs(lambda(k));
        scale_real(k) = 2.0 / std::pow(lambda(k).real(), 3);
        scale_abs(k) = 2.0 / std::pow(std::abs(lambda(k)), 3);
    }
    for (std::size_t m = 0; m < problem.rho.size(); ++m) {
        for (const auto& rho : problem.rho[m]) {
            const Eigen::VectorXcd w = modal_weights(model, rho);
            for (Family f : kFamilies) {
                const double sign = family_sign(f);
                Eigen::VectorXd& bound = out[static_cast<int>(f)][m];
                for (int row = 0; row < n; ++row) {
                    double cbar = 0.0;
                    for (int k = 0; k < n; ++k) {
                        cplx a = model.eig.P(row, k) * w(k) * sign;
                        if (is_voltage(f)) a *= lambda(k);
                        cbar += real[k] ? std::max(0.0, a.real()) * scale_real(k) : std::abs(a) * scale_abs(k);
                    }
                    bound(row) = std::max(bound(row), cbar);
                }
            }
        }
    }
    return out;
}

std::vector<LinearRow> linear_constraints(const DesignProblem& problem) {
    std::vector<LinearRow> rows;
    if (problem.stability_form() == StabilityForm::Spectral) {
        rows.push_back({{1.0, 1.0}, 2.0 - problem.model.lambda_max(), "stability"});
        rows.push_back({{-1.0, -1.0}, 0.0, "sum_nonnegative"});
    } else {
        rows.push_back({{1.0, 1.0}, 2.0 - problem.model.norm2, "stability_upper"});
        rows.push_back({{-1.0, -1.0}, -problem.model.norm2, "stability_lower"});
    }
    rows.push_back({{-1.0, 0.0}, 0.0, "x1_nonnegative"});
    rows.push_back({{0.0, 1.0}, 0.0, "x2_nonpositive"});
    return rows;
}

// ---------------------------------------------------------------------------

double Surrogates::objective(const Eigen::Vector2d& x) const {
    const Eigen::Vector2d dx = x - x_p;
    const double dt = dx.sum();
    return a2 * dt * dt + a1 * dt + a0 + prox * dx.squaredNorm();
}

double Surrogates::h_tilde(std::size_t c, int s, const Eigen::Vector2d& x) const {
    const auto& k = constraints[c];
    const Eigen::Vector2d dx = x - x_p;
    return k.h(s) + k.slope(s) * dx.sum() + k.curvature * dx.squaredNorm();
}

double Surrogates::g_tilde(std::size_t c, const Eigen::Vector2d& x, double u) const {
    const auto& k = constraints[c];
    const Eigen::Vector2d dx = x - x_p;
    const double shift = k.curvature * dx.squaredNorm() + u;
    const double dt = dx.sum();
    double sum = 0.0;
    for (Eigen::Index s = 0; s < k.h.size(); ++s) sum += hinge(k.h(s) + k.slope(s) * dt + shift, xi);
    return sum / static_cast<double>(k.h.size()) - u * k.eps;
}

Surrogates build_surrogates(const Eigen::Vector2d& x_p, const DesignProblem& problem) {
    return build_surrogates(x_p, problem, majorizer_matrices(problem));
}

Surrogates build_surrogates(const Eigen::Vector2d& x_p, const DesignProblem& problem, const Majorizers& maj) {
    const auto& model = problem.model;
    const auto& spec = problem.spec;
    const int n = model.size();
    const double t = x_p.sum();
    check_shift(model, t);

    Surrogates s;
    s.x_p = x_p;
    s.xi = spec.xi;
    s.linear = linear_constraints(problem);

    Eigen::VectorXd q, dq;
    for (std::size_t m = 0; m < problem.rho.size(); ++m) {
        const auto& samples = problem.rho[m];
        const int ns = static_cast<int>(samples.size());
        std::array<std::vector<Surrogates::Constraint>, 4> block;
        for (Family f : kFamilies) {
            if (!active(spec, f)) continue;
            auto& list = block[static_cast<int>(f)];
            list.resize(n);
            for (int row = 0; row < n; ++row) {
                auto& c = list[row];
                c.family = f;
                c.node = row;
                c.interval = static_cast<int>(m);
                c.eps = spec.epsilon[static_cast<int>(f)];
                c.curvature = maj[static_cast<int>(f)][m](row);
                c.h.resize(ns);
                c.slope.resize(ns);
            }
        }
        for (int si = 0; si < ns; ++si) {
            const auto& rho = samples[si];
            modal_q(model, modal_weights(model, rho), t, q, &dq);
            s.a2 += dq.squaredNorm() / ns;
            s.a1 += 2.0 * q.dot(dq) / ns;
            s.a0 += q.squaredNorm() / ns;
            const Eigen::VectorXd xq = model.X * q;
            const Eigen::VectorXd xdq = model.X * dq;
            for (Family f : kFamilies) {
                if (!active(spec, f)) continue;
                const Eigen::VectorXd h = family_values(f, q, xq, rho, spec);
                const Eigen::VectorXd slope = family_sign(f) * (is_voltage(f) ? xdq : dq);
                auto& list = block[static_cast<int>(f)];
                for (int row = 0; row < n; ++row) {
                    list[row].h(si) = h(row);
                    list[row].slope(si) = slope(row);
                }
            }
        }
        s.prox += 0.5 * spec.d;
        for (auto& list : block) {
            for (auto& c : list) s.constraints.push_back(std::move(c));
        }
    }
    return s;
}

double g_original(const Surrogates::Constraint& c, const Eigen::Vector2d& x, double u, const DesignProblem& problem) {
    return cvar_constraint_estimate(x, u, c.family, c.node, c.interval, problem);
}

// ---------------------------------------------------------------------------
// Barrier method for min F(x) s.t. g~_c(x, u_c) <= 0, u_c >= 0, a_l x <= b_l.

namespace {

struct BarrierEval {
    double value = 0.0;
    bool feasible = true;
    Eigen::Vector2d gx = Eigen::Vector2d::Zero();
    Eigen::VectorXd gu;
    Eigen::Matrix2d hxx = Eigen::Matrix2d::Zero();
    Eigen::Matrix2Xd k;  // x-u coupling, one column per constraint
    Eigen::VectorXd huu;
    Eigen::VectorXd g_values;  // g~_c
    Eigen::VectorXd slack;     // b - a x
};

class Barrier {
public:
    Barrier(const Surrogates& s, Eigen::VectorXd u_cap)
        : s_(s), c_(s.constraints.size()), l_(s.linear.size()), u_cap_(std::move(u_cap)) {}

    BarrierEval eval(const Eigen::Vector2d& x, const Eigen::VectorXd& u, double tau, bool derivatives) const {
        BarrierEval out;
        out.g_values.resize(static_cast<Eigen::Index>(c_));
        out.slack.resize(static_cast<Eigen::Index>(l_));
        if (derivatives) {
            out.gu.resize(static_cast<Eigen::Index>(c_));
            out.k.resize(2, static_cast<Eigen::Index>(c_));
            out.huu.resize(static_cast<Eigen::Index>(c_));
        }
        const Eigen::Vector2d dx = x - s_.x_p;
        const double dt = dx.sum();
        const double nrm2 = dx.squaredNorm();
        const Eigen::Vector2d ones(1.0, 1.0);

        out.value = tau * s_.objective(x);
        if (derivatives) {
            out.gx = tau * ((2.0 * s_.a2 * dt + s_.a1) * ones + 2.0 * s_.prox * dx);
            out.hxx = tau * (2.0 * s_.a2 * ones * ones.transpose() + 2.0 * s_.prox * Eigen::Matrix2d::Identity());
        }
        for (std::size_t l = 0; l < l_; ++l) {
            const auto& row = s_.linear[l];
            const double slack = row.b - row.a.dot(x);
            out.slack(static_cast<Eigen::Index>(l)) = slack;
            if (!(slack > 0.0)) {
                out.feasible = false;
                return out;
            }
            out.value -= std::log(slack);
            if (derivatives) {
                out.gx += row.a / slack;
                out.hxx += row.a * row.a.transpose() / (slack * slack);
            }
        }
        for (std::size_t ci = 0; ci < c_; ++ci) {
            const auto& c = s_.constraints[ci];
            const auto idx = static_cast<Eigen::Index>(ci);
            const double u_c = u(idx);
            const double room = u_cap_(idx) - u_c;
            if (!(u_c > 0.0) || !(room > 0.0)) {
                out.feasible = false;
                return out;
            }
            const double shift = c.curvature * nrm2 + u_c;
            double g = 0.0, s1 = 0.0, s1s = 0.0, s2 = 0.0, s2s = 0.0, s2ss = 0.0;
            const auto ns = c.h.size();
            for (Eigen::Index si = 0; si < ns; ++si) {
                const double y = c.h(si) + c.slope(si) * dt + shift;
                g += hinge(y, s_.xi);
                if (derivatives) {
                    const double f1 = hinge_d1(y, s_.xi);
                    const double f2 = hinge_d2(y, s_.xi);
                    const double sl = c.slope(si);
                    s1 += f1;
                    s1s += f1 * sl;
                    s2 += f2;
                    s2s += f2 * sl;
                    s2ss += f2 * sl * sl;
                }
            }
            const double inv_ns = 1.0 / static_cast<double>(ns);
            g = g * inv_ns - u_c * c.eps;
            out.g_values(idx) = g;
            if (!(g < 0.0)) {
                out.feasible = false;
                return out;
            }
            out.value -= std::log(-g) + std::log(u_c) + std::log(room);
            if (!derivatives) continue;
            s1 *= inv_ns;
            s1s *= inv_ns;
            s2 *= inv_ns;
            s2s *= inv_ns;
            s2ss *= inv_ns;
            const double m2 = 2.0 * c.curvature;
            const Eigen::Vector2d gx = s1s * ones + m2 * s1 * dx;
            const double gu = s1 - c.eps;
            const Eigen::Matrix2d hxx = s2ss * ones * ones.transpose() +
                                        m2 * s2s * (ones * dx.transpose() + dx * ones.transpose()) +
                                        m2 * m2 * s2 * dx * dx.transpose() + m2 * s1 * Eigen::Matrix2d::Identity();
            const Eigen::Vector2d hxu = s2s * ones + m2 * s2 * dx;
            const double huu = s2;
            const double w = -1.0 / g;
            out.gx += w * gx;
            out.gu(idx) = w * gu - 1.0 / u_c + 1.0 / room;
            out.hxx += w * hxx + w * w * gx * gx.transpose();
            out.k.col(idx) = w * hxu + w * w * gu * gx;
            out.huu(idx) = w * huu + w * w * gu * gu + 1.0 / (u_c * u_c) + 1.0 / (room * room);
        }
        return out;
    }

    [[nodiscard]] std::size_t constraint_count() const noexcept { return c_; }
    [[nodiscard]] std::size_t linear_count() const noexcept { return l_; }

private:
    const Surrogates& s_;
    std::size_t c_;
    std::size_t l_;
    Eigen::VectorXd u_cap_;
};

// Upper bounds on the auxiliary variables. The objective ignores u, so any
// feasible u serves; the cap keeps the barrier centre finite when eps is
// close to 1. Feasibility survives because g~ only decreases as h decreases.
Eigen::VectorXd auxiliary_caps(const Surrogates& s, const Eigen::VectorXd& u_start) {
    Eigen::VectorXd cap(static_cast<Eigen::Index>(s.constraints.size()));
    for (std::size_t c = 0; c < s.constraints.size(); ++c) {
        const auto idx = static_cast<Eigen::Index>(c);
        cap(idx) = std::max(2.0 * u_start(idx), s.constraints[c].h.cwiseAbs().maxCoeff() + 1.0);
    }
    return cap;
}

}  // namespace

SubproblemResult solve_subproblem(const Surrogates& s, const Eigen::VectorXd& u_start,
                                  const SubproblemOptions& options) {
    const auto nc = static_cast<Eigen::Index>(s.constraints.size());
    if (u_start.size() != nc) {
        throw DomainError(fmt::format("{} auxiliary values for {} constraints", u_start.size(), nc));
    }
    const Barrier barrier(s, auxiliary_caps(s, u_start));
    Eigen::Vector2d x = s.x_p;
    Eigen::VectorXd u = u_start;
    if (!barrier.eval(x, u, 1.0, false).feasible) {
        throw SubproblemInfeasible("the anchor is not strictly feasible for the convex model");
    }
    const double m_total = static_cast<double>(3 * barrier.constraint_count() + barrier.linear_count());
    double tau = 1.0;
    SubproblemResult res;
    BarrierEval cur;
    while (true) {
        int it = 0;
        double best_decrement = std::numeric_limits<double>::infinity();
        int stalled = 0;
        for (; it < options.max_newton; ++it) {
            cur = barrier.eval(x, u, tau, true);
            Eigen::Matrix2d schur = cur.hxx;
            Eigen::Vector2d rhs = -cur.gx;
            for (Eigen::Index c = 0; c < nc; ++c) {
                schur -= cur.k.col(c) * cur.k.col(c).transpose() / cur.huu(c);
                rhs += cur.k.col(c) * cur.gu(c) / cur.huu(c);
            }
            const Eigen::Vector2d dx = schur.ldlt().solve(rhs);
            Eigen::VectorXd du(nc);
            for (Eigen::Index c = 0; c < nc; ++c) du(c) = (-cur.gu(c) - cur.k.col(c).dot(dx)) / cur.huu(c);
            const double decrement = -(cur.gx.dot(dx) + cur.gu.dot(du));
            ++res.newton_iterations;
            // Round-off floor of the barrier value; large tau inflates it.
            const double noise = 1e-14 * std::max(1.0, std::abs(cur.value));
            if (!(decrement > 1e-12)) break;
            const bool near_centre = decrement < std::max(1e-6, 1e3 * noise);
            if (near_centre) {
                stalled = decrement < 0.5 * best_decrement ? 0 : stalled + 1;
                if (stalled >= 3) break;
            }
            best_decrement = std::min(best_decrement, decrement);

            double step = 1.0;
            BarrierEval trial;
            bool accepted = false;
            for (int halving = 0; halving < 80; ++halving, step *= 0.5) {
                trial = barrier.eval(x + step * dx, u + step * du, tau, false);
                if (!trial.feasible) continue;
                // Close to the centre the value change drowns in round-off; take the full step.
                if (near_centre || trial.value <= cur.value - 0.25 * step * decrement) {
                    accepted = true;
                    break;
                }
            }
            if (!accepted) {
                throw MaxNewtonIterations(fmt::format("line search failed (decrement {:.3e})", decrement));
            }
            const Eigen::Vector2d x_next = x + step * dx;
            const Eigen::VectorXd u_next = u + step * du;
            const bool moved = x_next != x || u_next != u;
            x = x_next;
            u = u_next;
            if (!moved) break;
        }
        if (it == options.max_newton) {
            throw MaxNewtonIterations(fmt::format("centering did not converge in {} Newton steps", options.max_newton));
        }
        if (m_total / tau <= options.gap_tol) break;
        tau *= options.barrier_growth;
    }

    cur = barrier.eval(x, u, tau, true);
    res.x = x;
    res.u = u;
    res.multipliers = (-cur.g_values).cwiseInverse() / tau;
    res.linear_multipliers = cur.slack.cwiseInverse() / tau;
    double kkt = cur.gx.cwiseAbs().maxCoeff();
    if (nc > 0) kkt = std::max(kkt, cur.gu.cwiseAbs().maxCoeff());
    res.kkt_residual = kkt / tau;
    res.max_violation = 0.0;
    if (nc > 0) res.max_violation = std::max({0.0, cur.g_values.maxCoeff(), -u.minCoeff()});
    if (cur.slack.size() > 0) res.max_violation = std::max(res.max_violation, -cur.slack.minCoeff());
    return res;
}

// ---------------------------------------------------------------------------

InitialPoint initial_point(const DesignProblem& problem) {
    problem.validate();
    const auto rows = linear_constraints(problem);
    const auto maj = majorizer_matrices(problem);
    double eta = 0.5;
    double alpha = 3.5;
    int increments = 0;
    while (true) {
        const Eigen::Vector2d x(alpha / eta, -alpha);
        bool ok = true;
        for (const auto& row : rows) ok = ok && row.a.dot(x) < row.b;
        if (ok && x.sum() + problem.model.lambda_min() > 1e-12) {
            const auto s = build_surrogates(x, problem, maj);
            Eigen::VectorXd u(static_cast<Eigen::Index>(s.constraints.size()));
            for (std::size_t c = 0; c < s.constraints.size() && ok; ++c) {
                const auto& k = s.constraints[c];
                const auto best = minimize_hinge_over_u(k.h, k.eps, problem.spec.xi);
                ok = best.value < 0.0;
                u(static_cast<Eigen::Index>(c)) = best.u;
            }
            if (ok) return {x, Gains{eta, alpha}, u, increments};
        }
        if (eta >= 0.95 - 1e-12 && alpha <= 0.05 + 1e-12) {
            throw NoFeasibleStart(
                "no gains on the initialization path satisfy the constraints; modify the prescribed probability "
                "epsilon");
        }
        eta = std::min(eta + 0.05, 0.95);
        alpha = std::max(alpha - 0.25, 0.05);
        ++increments;
    }
}

namespace {

double mean_objective(const Eigen::Vector2d& x, const DesignProblem& problem) {
    double total = 0.0;
    for (const auto& samples : problem.rho) {
        double sum = 0.0;
        for (const auto& rho : samples) sum += q_of_x(x, problem.model, rho).squaredNorm();
        total += sum / static_cast<double>(samples.size());
    }
    return total;
}

bool deterministic_ok(const Eigen::Vector2d& x, const std::vector<LinearRow>& rows) {
    for (const auto& row : rows) {
        if (row.a.dot(x) > row.b) return false;
    }
    return true;
}

}  // namespace

DesignSolution ogd_sca(const DesignProblem& problem, const SubproblemOptions& options) {
    problem.validate();
    const auto& spec = problem.spec;
    const auto maj = majorizer_matrices(problem);
    const auto rows = linear_constraints(problem);

    DesignSolution sol;
    sol.start = initial_point(problem);
    sol.reduced_model = problem.model.reduced;
    Eigen::Vector2d x = sol.start.x;
    Eigen::VectorXd u = sol.start.u;

    for (int p = 0; p < spec.max_outer; ++p) {
        const auto s = build_surrogates(x, problem, maj);
        if (!Barrier(s, auxiliary_caps(s, u)).eval(x, u, 1.0, false).feasible) {
            // Rounding can push a carried auxiliary value onto the boundary.
            for (std::size_t c = 0; c < s.constraints.size(); ++c) {
                const auto& k = s.constraints[c];
                u(static_cast<Eigen::Index>(c)) = minimize_hinge_over_u(k.h, k.eps, spec.xi).u;
            }
        }
        const auto sub = solve_subproblem(s, u, options);
        const double gamma = spec.step.at(p);
        const Eigen::Vector2d next = x + gamma * (sub.x - x);
        u += gamma * (sub.u - u);
        const double step = (next - x).norm();
        x = next;
        IterateRecord rec;
        rec.step = step;
        rec.t = x.sum();
        rec.objective = mean_objective(x, problem);
        rec.deterministic_ok = deterministic_ok(x, rows);
        sol.history.push_back(rec);
        sol.iterations = p + 1;
        sol.final_step = step;
        if (step < spec.e) {
            sol.converged = true;
            break;
        }
    }
    if (!sol.converged) {
        sol.warning = fmt::format("stopped after {} outer iterations with step {:.3e}", sol.iterations, sol.final_step);
    }
    sol.x = x;
    sol.u = u;
    const double bound = problem.stability_form() == StabilityForm::Spectral ? problem.model.lambda_max()
                                                                              : problem.model.norm2;
    sol.gains = gains_from_x(x, bound);
    sol.objective = mean_objective(x, problem);
    sol.stability_margin = stability_margin(sol.gains, problem.model.eig.lambda.real());

    // Empirical violation statistics on the design samples.
    const auto s = build_surrogates(x, problem, maj);
    sol.interval_violation_rate.assign(problem.rho.size(), 0.0);
    for (std::size_t c = 0; c < s.constraints.size(); ++c) {
        const auto& k = s.constraints[c];
        ViolationStat v;
        v.family = k.family;
        v.node = k.node;
        v.interval = k.interval;
        v.rate = static_cast<double>((k.h.array() > 0.0).count()) / static_cast<double>(k.h.size());
        v.worst = k.h.maxCoeff();
        v.cvar = s.g_tilde(c, x, u(static_cast<Eigen::Index>(c)));
        sol.interval_violation_rate[k.interval] = std::max(sol.interval_violation_rate[k.interval], v.rate);
        sol.violations.push_back(v);
    }
    return sol;
}

std::string design_report_json(const DesignSolution& sol, const DesignProblem& problem) {
    nlohmann::json j;
    j["eta"] = sol.gains.eta;
    j["alpha"] = sol.gains.alpha;
    j["x"] = {sol.x(0), sol.x(1)};
    j["iterations"] = sol.iterations;
    j["converged"] = sol.converged;
    j["final_step"] = sol.final_step;
    j["objective"] = sol.objective;
    j["stability_margin"] = sol.stability_margin;
    j["stability_form"] = problem.stability_form() == StabilityForm::Spectral ? "spectral" : "norm_bound";
    j["reduced_model"] = sol.reduced_model;
    j["initial_point"] = {{"eta", sol.start.gains.eta}, {"alpha", sol.start.gains.alpha},
                          {"increments", sol.start.increments}};
    j["epsilon"] = problem.spec.epsilon;
    j["interval_violation_rate"] = sol.interval_violation_rate;
    if (!sol.warning.empty()) j["warning"] = sol.warning;
    auto& cons = j["constraints"];
    cons = nlohmann::json::array();
    for (const auto& v : sol.violations) {
        cons.push_back({{"family", family_name(v.family)},
                        {"row", v.node},
                        {"node", problem.model.nodes.at(v.node) + 1},
                        {"interval", v.interval},
                        {"violation_rate", v.rate},
                        {"cvar_estimate", v.cvar},
                        {"worst_margin", -v.worst}});
    }
    return j.dump(2);
}

}  // namespace vvc
