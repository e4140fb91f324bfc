#pragma once
// Action valuation under lexicographic beliefs.
//
// The value of an action is its expected one-shot utility plus the
// discounted value of acting optimally tomorrow under the belief updated on
// today's (model-predicted) observation. The infinite recursion is truncated
// at a finite horizon T; because utilities are bounded, the truncated value
// V_T carries a certified error bound
//
//     |V_T - Val| <= delta^T * U / (1 - delta),   U = max |utility score|,
//
// and any comparison decided by more than twice the bound is a certified
// comparison of the exact values. The introspective variant mixes in a
// subjective value of inexplicable evidence (v*) with per-action weight xi,
// and threads xi through a deterministic update rule tau.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cbs/belief.hpp"
#include "cbs/errors.hpp"
#include "cbs/rational.hpp"
#include "cbs/sem.hpp"

namespace cbs {

// An intervention plus the set of variables whose realized values the agent
// gets to see.
struct Action {
    std::string name;
    Intervention intervention;
    std::vector<int> observe;  // global indices, sorted

    bool operator==(const Action&) const = default;
};

inline Action make_action(const Signature& sig, std::string name, Intervention iv,
                          std::vector<int> observe) {
    detail::check_sorted_assignment(sig, iv.assignments, true);
    std::sort(observe.begin(), observe.end());
    for (std::size_t i = 0; i < observe.size(); ++i) {
        if (observe[i] < 0 || observe[i] >= sig.var_count())
            throw ValidationError("action '" + name + "' observes an unknown variable");
        if (i > 0 && observe[i] == observe[i - 1])
            throw ValidationError("action '" + name + "' observes a variable twice");
    }
    return Action{std::move(name), std::move(iv), std::move(observe)};
}

// (M*, pi, A, Util, delta). The action list order is the global tie-breaking
// order everywhere.
struct Environment {
    ModelSpacePtr space;
    int true_model = -1;
    ContextDistribution pi;
    std::vector<Action> actions;
    int util_var = -1;
    Rational delta;

    const Signature& sig() const { return *space->sig; }
    const CausalModel& truth() const {
        return space->models[static_cast<std::size_t>(true_model)];
    }
    int action_index(const std::string& name) const {
        for (std::size_t i = 0; i < actions.size(); ++i)
            if (actions[i].name == name) return static_cast<int>(i);
        return -1;
    }
    Rational util_max_abs() const {
        const auto& r = sig().range_of(util_var);
        Rational m(0);
        for (int v = 0; v < r.size(); ++v) m = std::max(m, rational_abs(*r.scores[v]));
        return m;
    }
    Rational util_span() const {
        const auto& r = sig().range_of(util_var);
        Rational lo = *r.scores[0], hi = *r.scores[0];
        for (int v = 1; v < r.size(); ++v) {
            lo = std::min(lo, *r.scores[v]);
            hi = std::max(hi, *r.scores[v]);
        }
        return hi - lo;
    }

    bool operator==(const Environment& o) const {
        return *space == *o.space && true_model == o.true_model && pi == o.pi &&
               actions == o.actions && util_var == o.util_var && delta == o.delta;
    }
};

inline Environment make_environment(ModelSpacePtr space, int true_model, ContextDistribution pi,
                                    std::vector<Action> actions, int util_var, Rational delta) {
    const Signature& sig = *space->sig;
    if (true_model < 0 || true_model >= space->size())
        throw ValidationError("true model index out of range");
    if (actions.empty()) throw ValidationError("environment must offer at least one action");
    for (std::size_t i = 0; i < actions.size(); ++i)
        for (std::size_t j = i + 1; j < actions.size(); ++j)
            if (actions[i].name == actions[j].name)
                throw ValidationError("duplicate action name '" + actions[i].name + "'");
    if (util_var < 0 || util_var >= sig.var_count() || !sig.is_endogenous(util_var))
        throw ValidationError("utility variable must be endogenous");
    const auto& ur = sig.range_of(util_var);
    for (int v = 0; v < ur.size(); ++v)
        if (!ur.scores[v])
            throw ValidationError("utility value '" + ur.labels[v] + "' has no score");
    if (!(delta > 0 && delta < 1))
        throw ValidationError("delta must lie strictly between 0 and 1");
    Environment env;
    env.space = std::move(space);
    env.true_model = true_model;
    env.pi = std::move(pi);
    env.actions = std::move(actions);
    env.util_var = util_var;
    env.delta = std::move(delta);
    return env;
}

// Truncation depth. `from_epsilon` picks the smallest T whose certified tail
// delta^T * span/(1-delta) is within eps.
struct ValueConfig {
    int horizon = 20;
};

inline ValueConfig value_config_from_epsilon(const Environment& env, const Rational& eps) {
    if (eps <= 0) throw ValidationError("epsilon must be positive");
    Rational span = env.util_span();
    ValueConfig cfg;
    if (span == 0) {
        cfg.horizon = 1;
        return cfg;
    }
    Rational tail = env.delta * span / (1 - env.delta);
    int t = 1;
    while (tail > eps) {
        tail *= env.delta;
        ++t;
    }
    cfg.horizon = t;
    return cfg;
}

// ---------------------------------------------------------------------------
// Introspective parameters

using XiVector = std::vector<Rational>;  // parallel to Environment::actions

struct TauRule {
    std::string name;
    std::vector<Rational> params;

    bool operator==(const TauRule&) const = default;
};

// Which observation feeds tau inside the recursion's expectation: the
// belief-model prediction (default) or the true-model prediction.
enum class TauObsSource { BeliefModel, TrueModel };

struct IntrospectiveParams {
    Rational v_star;
    XiVector xi;
    TauRule tau;
    TauObsSource tau_obs = TauObsSource::BeliefModel;

    bool operator==(const IntrospectiveParams&) const = default;
};

using TauFn =
    std::function<XiVector(const std::vector<Rational>&, const XiVector&, const Observation&)>;

inline std::map<std::string, TauFn>& tau_registry() {
    static std::map<std::string, TauFn> registry = {
        {"constant",
         [](const std::vector<Rational>&, const XiVector& xi, const Observation&) { return xi; }},
        {"decay",
         [](const std::vector<Rational>& params, const XiVector& xi, const Observation&) {
             if (params.size() != 1 || params[0] < 0 || params[0] > 1)
                 throw ValidationError("decay takes one factor in [0,1]");
             XiVector out = xi;
             for (auto& x : out) x *= params[0];
             return out;
         }},
    };
    return registry;
}

inline void register_tau_rule(const std::string& name, TauFn fn) {
    tau_registry()[name] = std::move(fn);
}

inline XiVector tau_apply(const TauRule& rule, const XiVector& xi, const Observation& obs) {
    auto& reg = tau_registry();
    auto it = reg.find(rule.name);
    if (it == reg.end()) throw UnknownRule("unknown tau rule '" + rule.name + "'");
    return it->second(rule.params, xi, obs);
}

inline IntrospectiveParams make_introspective_params(const Environment& env, Rational v_star,
                                                     XiVector xi, TauRule tau,
                                                     TauObsSource src = TauObsSource::BeliefModel) {
    if (xi.size() != env.actions.size())
        throw ValidationError("xi must assign a weight to every action");
    for (const auto& x : xi)
        if (x < 0 || x > 1) throw ValidationError("xi values must lie in [0,1]");
    if (tau_registry().find(tau.name) == tau_registry().end())
        throw UnknownRule("unknown tau rule '" + tau.name + "'");
    return IntrospectiveParams{std::move(v_star), std::move(xi), std::move(tau), src};
}

// ---------------------------------------------------------------------------
// Core operations

// o^a_{M,u}: the observation action `a` would generate under (M, u).
inline Observation predicted_observation(const CausalModel& model, const Context& context,
                                         const Action& action) {
    FullState state = evaluate(intervene(model, action.intervention), context);
    PartialAssignment observed;
    for (int var : action.observe)
        observed.entries.emplace_back(var, state[static_cast<std::size_t>(var)]);
    return Observation{action.intervention, std::move(observed)};
}

// Util(a, mu): expected utility score of the intervened model under
// mu_bar x pi.
inline Rational one_shot_util(const Action& action, const LexBelief& belief,
                              const Environment& env) {
    Rational total(0);
    for (const auto& [idx, w] : belief.mu_bar()) {
        const CausalModel& model = belief.space->models[static_cast<std::size_t>(idx)];
        CausalModel cut = intervene(model, action.intervention);
        Rational inner(0);
        for (const auto& [ctx, p] : env.pi.support) {
            FullState st = evaluate(cut, ctx);
            inner += p * env.sig().score_of(env.util_var,
                                            st[static_cast<std::size_t>(env.util_var)]);
        }
        total += w * inner;
    }
    return total;
}

namespace detail {

inline int cmp_rational(const Rational& a, const Rational& b) {
    if (a < b) return -1;
    if (b < a) return 1;
    return 0;
}

inline int cmp_distribution(const Distribution& a, const Distribution& b) {
    if (a.size() != b.size()) return a.size() < b.size() ? -1 : 1;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].first != b[i].first) return a[i].first < b[i].first ? -1 : 1;
        if (int c = cmp_rational(a[i].second, b[i].second)) return c;
    }
    return 0;
}

struct MemoKey {
    int depth = 0;
    std::vector<Distribution> levels;
    XiVector xi;
};

struct MemoKeyLess {
    bool operator()(const MemoKey& a, const MemoKey& b) const {
        if (a.depth != b.depth) return a.depth < b.depth;
        if (a.levels.size() != b.levels.size()) return a.levels.size() < b.levels.size();
        for (std::size_t i = 0; i < a.levels.size(); ++i)
            if (int c = cmp_distribution(a.levels[i], b.levels[i])) return c < 0;
        if (a.xi.size() != b.xi.size()) return a.xi.size() < b.xi.size();
        for (std::size_t i = 0; i < a.xi.size(); ++i)
            if (int c = cmp_rational(a.xi[i], b.xi[i])) return c < 0;
        return false;
    }
};

// One continuation branch, keyed by what the future value actually depends
// on: the updated unconditional belief (deeper levels never resurface inside
// the agent's own expectation) and the updated xi.
struct BranchKey {
    Distribution mu_bar;
    XiVector xi;

    bool operator==(const BranchKey&) const = default;
};

struct BranchKeyLess {
    bool operator()(const BranchKey& a, const BranchKey& b) const {
        if (int c = cmp_distribution(a.mu_bar, b.mu_bar)) return c < 0;
        if (a.xi.size() != b.xi.size()) return a.xi.size() < b.xi.size();
        for (std::size_t i = 0; i < a.xi.size(); ++i)
            if (int c = cmp_rational(a.xi[i], b.xi[i])) return c < 0;
        return false;
    }
};

using BranchSummary = std::map<BranchKey, Rational, BranchKeyLess>;

// Exact solve of A x = b over the rationals (Gaussian elimination). A is
// square and invertible for every matrix we pass (I - discounted stochastic).
inline std::vector<Rational> linear_solve(std::vector<std::vector<Rational>> a,
                                          std::vector<Rational> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        while (pivot < n && a[pivot][col] == 0) ++pivot;
        if (pivot == n) throw Error("singular system in exact value solve");
        std::swap(a[pivot], a[col]);
        std::swap(b[pivot], b[col]);
        for (std::size_t row = 0; row < n; ++row) {
            if (row == col || a[row][col] == 0) continue;
            Rational f = a[row][col] / a[col][col];
            for (std::size_t k = col; k < n; ++k) a[row][k] -= f * a[col][k];
            b[row] -= f * b[col];
        }
    }
    std::vector<Rational> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
    return x;
}

}  // namespace detail

// Evaluates actions against one environment at a fixed horizon, memoizing
// continuation values on the canonical (belief levels, xi, depth) key and
// caching per-(action, model) observation profiles.
class ValueComputer {
  public:
    struct ActionEval {
        Rational value;     // V_T (introspective: Val*_T)
        Rational one_shot;  // plain expected one-shot utility
        // Continuation (mu_bar, xi) pairs with their expectation weights.
        // Two actions with identical summaries feed the recursion identical
        // futures, so their exact values differ by exactly the one-shot
        // difference and ties certify without a bound argument.
        detail::BranchSummary branches;
        // Exact infinite-horizon value, available in deterministic
        // environments (and with constant tau): there the reachable beliefs
        // form a finite closure and the Bellman system solves exactly.
        std::optional<Rational> exact;
    };
    struct Argmax {
        int action = 0;
        bool certified = false;
        std::vector<ActionEval> evals;
    };

    ValueComputer(Environment env, ValueConfig cfg,
                  std::optional<IntrospectiveParams> ip = std::nullopt)
        : env_(std::move(env)), horizon_(cfg.horizon), ip_(std::move(ip)) {
        if (horizon_ < 1) throw ValidationError("horizon must be at least 1");
        Rational u = env_.util_max_abs();
        if (ip_) u = std::max(u, rational_abs(ip_->v_star));
        bound_ = rational_pow(env_.delta, static_cast<unsigned>(horizon_)) * u / (1 - env_.delta);
    }

    const Environment& environment() const { return env_; }
    int horizon() const { return horizon_; }
    // delta^T * U_max_abs / (1 - delta); |V_T - Val| never exceeds this.
    const Rational& error_bound() const { return bound_; }
    bool introspective() const { return ip_.has_value(); }
    const std::optional<IntrospectiveParams>& introspective_params() const { return ip_; }

    std::vector<ActionEval> evaluate_actions(const LexBelief& belief) {
        check_space(belief);
        return evaluate_at(belief, ip_ ? &ip_->xi : nullptr);
    }
    std::vector<ActionEval> evaluate_actions(const LexBelief& belief, const XiVector& xi) {
        check_space(belief);
        require_introspective();
        check_xi(xi);
        return evaluate_at(belief, &xi);
    }

    Argmax argmax(const LexBelief& belief) {
        return argmax_impl(belief, ip_ ? &ip_->xi : nullptr);
    }
    Argmax argmax(const LexBelief& belief, const XiVector& xi) {
        require_introspective();
        check_xi(xi);
        return argmax_impl(belief, &xi);
    }

    // Certified Val(a_i) >= Val(a_j) (exact, infinite-horizon values).
    bool cert_geq(const std::vector<ActionEval>& evals, int i, int j,
                  const XiVector* xi = nullptr) const {
        const auto& a = evals[static_cast<std::size_t>(i)];
        const auto& b = evals[static_cast<std::size_t>(j)];
        if (a.exact && b.exact) return *a.exact >= *b.exact;
        if (a.value - b.value >= 2 * bound_) return true;
        if (a.branches != b.branches) return false;
        if (!ip_) return a.one_shot >= b.one_shot;
        const XiVector& x = xi ? *xi : ip_->xi;
        if (x[static_cast<std::size_t>(i)] != x[static_cast<std::size_t>(j)]) return false;
        return x[static_cast<std::size_t>(i)] == 1 || a.one_shot >= b.one_shot;
    }
    // Certified Val(a_i) > Val(a_j).
    bool cert_gt(const std::vector<ActionEval>& evals, int i, int j,
                 const XiVector* xi = nullptr) const {
        const auto& a = evals[static_cast<std::size_t>(i)];
        const auto& b = evals[static_cast<std::size_t>(j)];
        if (a.exact && b.exact) return *a.exact > *b.exact;
        if (a.value - b.value > 2 * bound_) return true;
        if (a.branches != b.branches) return false;
        if (!ip_) return a.one_shot > b.one_shot;
        const XiVector& x = xi ? *xi : ip_->xi;
        if (x[static_cast<std::size_t>(i)] != x[static_cast<std::size_t>(j)]) return false;
        return x[static_cast<std::size_t>(i)] < 1 && a.one_shot > b.one_shot;
    }

    void clear_memo() { memo_.clear(); }

  private:
    struct Profile {
        std::vector<Observation> obs_by_context;             // per pi support entry
        std::vector<std::pair<Observation, Rational>> obs_probs;
        Rational expected_util;
    };

    void check_space(const LexBelief& belief) const {
        if (belief.space != env_.space && !(*belief.space == *env_.space))
            throw ValidationError("belief and environment use different model spaces");
    }
    void require_introspective() const {
        if (!ip_) throw ValidationError("computer was built without introspective parameters");
    }
    void check_xi(const XiVector& xi) const {
        if (xi.size() != env_.actions.size())
            throw ValidationError("xi must assign a weight to every action");
    }

    const std::vector<FullState>& states(int model, const Intervention& iv) {
        auto key = std::make_pair(model, iv);
        auto it = states_.find(key);
        if (it != states_.end()) return it->second;
        CausalModel cut = intervene(env_.space->models[static_cast<std::size_t>(model)], iv);
        std::vector<FullState> out;
        out.reserve(env_.pi.support.size());
        for (const auto& [ctx, p] : env_.pi.support) out.push_back(evaluate(cut, ctx));
        return states_.emplace(std::move(key), std::move(out)).first->second;
    }

    const Profile& profile(int action, int model) {
        auto key = std::make_pair(action, model);
        auto it = profiles_.find(key);
        if (it != profiles_.end()) return it->second;
        const Action& act = env_.actions[static_cast<std::size_t>(action)];
        const auto& sts = states(model, act.intervention);
        Profile p;
        p.expected_util = 0;
        std::map<Observation, Rational> probs;
        for (std::size_t k = 0; k < sts.size(); ++k) {
            PartialAssignment observed;
            for (int var : act.observe)
                observed.entries.emplace_back(var, sts[k][static_cast<std::size_t>(var)]);
            Observation obs{act.intervention, std::move(observed)};
            const Rational& pu = env_.pi.support[k].second;
            probs[obs] += pu;
            p.expected_util +=
                pu * env_.sig().score_of(env_.util_var,
                                         sts[k][static_cast<std::size_t>(env_.util_var)]);
            p.obs_by_context.push_back(std::move(obs));
        }
        p.obs_probs.assign(probs.begin(), probs.end());
        return profiles_.emplace(std::move(key), std::move(p)).first->second;
    }

    Rational cached_likelihood(int model, const Observation& obs) {
        auto key = std::make_pair(model, obs);
        auto it = lh_cache_.find(key);
        if (it != lh_cache_.end()) return it->second;
        const auto& sts = states(model, obs.intervention);
        Rational total(0);
        for (std::size_t k = 0; k < sts.size(); ++k)
            if (agrees(sts[k], obs.observed)) total += env_.pi.support[k].second;
        lh_cache_.emplace(std::move(key), total);
        return total;
    }

    LexBelief update_cached(const LexBelief& belief, const Observation& obs) {
        return detail::update_with_likelihoods(
            belief, [&](int idx) { return cached_likelihood(idx, obs); });
    }

    std::vector<ActionEval> evaluate_at(const LexBelief& belief, const XiVector* xi) {
        std::vector<ActionEval> out;
        for (std::size_t a = 0; a < env_.actions.size(); ++a)
            out.push_back(eval_action(static_cast<int>(a), belief, xi, horizon_, true));
        if (auto exact = exact_action_values(belief, xi)) {
            for (std::size_t a = 0; a < out.size(); ++a) out[a].exact = (*exact)[a];
        }
        return out;
    }

    Argmax argmax_impl(const LexBelief& belief, const XiVector* xi) {
        check_space(belief);
        Argmax r;
        r.evals = evaluate_at(belief, xi);
        auto key = [&](int a) -> const Rational& {
            const auto& ev = r.evals[static_cast<std::size_t>(a)];
            return ev.exact ? *ev.exact : ev.value;
        };
        for (std::size_t a = 1; a < r.evals.size(); ++a)
            if (key(static_cast<int>(a)) > key(r.action)) r.action = static_cast<int>(a);
        r.certified = true;
        for (std::size_t a = 0; a < r.evals.size(); ++a)
            if (static_cast<int>(a) != r.action)
                r.certified = r.certified && cert_geq(r.evals, r.action, static_cast<int>(a), xi);
        return r;
    }

    // Exact per-action values via policy iteration over the finite belief
    // closure. Applicable when pi is a point mass (updates are support
    // restrictions, so the closure is finite) and xi cannot move.
    std::optional<std::vector<Rational>> exact_action_values(const LexBelief& root,
                                                             const XiVector* xi) {
        if (!env_.pi.trivial()) return std::nullopt;
        if (xi && ip_->tau.name != "constant") return std::nullopt;
        constexpr std::size_t state_cap = 64;

        const std::size_t n_actions = env_.actions.size();
        std::map<std::vector<Distribution>, int> index;
        std::vector<LexBelief> states;
        auto intern = [&](const LexBelief& b) -> int {
            auto it = index.find(b.levels);
            if (it != index.end()) return it->second;
            int id = static_cast<int>(states.size());
            index.emplace(b.levels, id);
            states.push_back(b);
            return id;
        };
        intern(root);
        // reward[s][a] and branches[s][a] = (weight, next state)
        std::vector<std::vector<Rational>> reward;
        std::vector<std::vector<std::vector<std::pair<Rational, int>>>> next;
        for (std::size_t s = 0; s < states.size(); ++s) {
            if (states.size() > state_cap) return std::nullopt;
            LexBelief belief = states[s];  // copy: `states` grows below
            reward.emplace_back(n_actions);
            next.emplace_back(n_actions);
            for (std::size_t a = 0; a < n_actions; ++a) {
                Rational r(0);
                for (const auto& [idx, w] : belief.mu_bar())
                    r += w * profile(static_cast<int>(a), idx).expected_util;
                reward[s][a] = std::move(r);
                std::map<Observation, Rational> groups;
                for (const auto& [idx, w] : belief.mu_bar())
                    for (const auto& [obs, p] : profile(static_cast<int>(a), idx).obs_probs)
                        groups[obs] += w * p;
                for (const auto& [obs, weight] : groups)
                    next[s][a].emplace_back(weight, intern(update_cached(belief, obs)));
            }
        }

        const std::size_t n = states.size();
        auto xi_of = [&](std::size_t a) { return xi ? (*xi)[a] : Rational(0); };
        auto v_star = [&] { return ip_ ? ip_->v_star : Rational(0); };
        std::vector<std::size_t> policy(n, 0);
        std::vector<Rational> v;
        for (int round = 0; round < 500; ++round) {
            // Solve v = xi(pi_s) v* + (1 - xi(pi_s)) (r + delta P v).
            std::vector<std::vector<Rational>> m(n, std::vector<Rational>(n, Rational(0)));
            std::vector<Rational> rhs(n);
            for (std::size_t s = 0; s < n; ++s) {
                Rational keep = (1 - xi_of(policy[s])) * env_.delta;
                m[s][s] = 1;
                for (const auto& [w, t] : next[s][policy[s]])
                    m[s][static_cast<std::size_t>(t)] -= keep * w;
                rhs[s] = xi_of(policy[s]) * v_star() +
                         (1 - xi_of(policy[s])) * reward[s][policy[s]];
            }
            v = detail::linear_solve(std::move(m), std::move(rhs));
            bool improved = false;
            for (std::size_t s = 0; s < n; ++s) {
                std::size_t best = 0;
                Rational best_q;
                for (std::size_t a = 0; a < n_actions; ++a) {
                    Rational q = reward[s][a];
                    for (const auto& [w, t] : next[s][a])
                        q += env_.delta * w * v[static_cast<std::size_t>(t)];
                    q = xi_of(a) * v_star() + (1 - xi_of(a)) * q;
                    if (a == 0 || q > best_q) {
                        best_q = std::move(q);
                        best = a;
                    }
                }
                if (best_q > v[s]) {
                    policy[s] = best;
                    improved = true;
                }
            }
            if (!improved) {
                std::vector<Rational> q_root(n_actions);
                for (std::size_t a = 0; a < n_actions; ++a) {
                    Rational q = reward[0][a];
                    for (const auto& [w, t] : next[0][a])
                        q += env_.delta * w * v[static_cast<std::size_t>(t)];
                    q_root[a] = xi_of(a) * v_star() + (1 - xi_of(a)) * q;
                }
                return q_root;
            }
        }
        return std::nullopt;  // did not settle; fall back to the bound
    }

    Rational best_value(const LexBelief& belief, const XiVector* xi, int depth) {
        if (depth == 0) return Rational(0);
        detail::MemoKey key{depth, belief.levels, xi ? *xi : XiVector{}};
        auto it = memo_.find(key);
        if (it != memo_.end()) return it->second;
        Rational best;
        bool first = true;
        for (std::size_t a = 0; a < env_.actions.size(); ++a) {
            Rational v = eval_action(static_cast<int>(a), belief, xi, depth, false).value;
            if (first || v > best) {
                best = std::move(v);
                first = false;
            }
        }
        memo_.emplace(std::move(key), best);
        return best;
    }

    ActionEval eval_action(int action, const LexBelief& belief, const XiVector* xi, int depth,
                           bool want_branches) {
        ActionEval ev;
        ev.one_shot = 0;
        for (const auto& [idx, w] : belief.mu_bar())
            ev.one_shot += w * profile(action, idx).expected_util;

        Rational continuation(0);
        if (depth > 1 || want_branches) {
            // Group (model, context) branches by the observation they yield;
            // the continuation belief depends on the branch only through it.
            // With the true-model tau source, branches also split on the
            // observation that feeds tau.
            bool true_src = ip_ && xi && ip_->tau_obs == TauObsSource::TrueModel;
            std::map<std::pair<Observation, Observation>, Rational> groups;
            if (true_src) {
                const auto& true_prof = profile(action, env_.true_model);
                for (const auto& [idx, w] : belief.mu_bar()) {
                    const auto& prof = profile(action, idx);
                    for (std::size_t k = 0; k < prof.obs_by_context.size(); ++k)
                        groups[{prof.obs_by_context[k], true_prof.obs_by_context[k]}] +=
                            w * env_.pi.support[k].second;
                }
            } else {
                for (const auto& [idx, w] : belief.mu_bar()) {
                    const auto& prof = profile(action, idx);
                    for (const auto& [obs, p] : prof.obs_probs) groups[{obs, obs}] += w * p;
                }
            }
            for (const auto& [key, weight] : groups) {
                LexBelief next = update_cached(belief, key.first);
                XiVector next_xi;
                if (xi) next_xi = tau_apply(ip_->tau, *xi, key.second);
                if (want_branches)
                    ev.branches[detail::BranchKey{next.mu_bar(), next_xi}] += weight;
                if (depth > 1)
                    continuation +=
                        weight * best_value(next, xi ? &next_xi : nullptr, depth - 1);
            }
        }

        Rational inner = ev.one_shot + env_.delta * continuation;
        if (xi) {
            const Rational& x = (*xi)[static_cast<std::size_t>(action)];
            ev.value = x * ip_->v_star + (1 - x) * inner;
        } else {
            ev.value = inner;
        }
        return ev;
    }

    Environment env_;
    int horizon_;
    Rational bound_;
    std::optional<IntrospectiveParams> ip_;
    std::map<std::pair<int, int>, Profile> profiles_;
    std::map<std::pair<int, Intervention>, std::vector<FullState>> states_;
    std::map<std::pair<int, Observation>, Rational> lh_cache_;
    std::map<detail::MemoKey, Rational, detail::MemoKeyLess> memo_;
};

struct ValueEstimate {
    Rational estimate;
    Rational bound;
};

// V_T(a, mu) with its certified truncation bound.
inline ValueEstimate compute_value(const Environment& env, int action, const LexBelief& belief,
                                   ValueConfig cfg) {
    ValueComputer vc(env, cfg);
    auto evals = vc.evaluate_actions(belief);
    return ValueEstimate{evals[static_cast<std::size_t>(action)].value, vc.error_bound()};
}

// Val*_T(a, mu, xi) with its certified truncation bound.
inline ValueEstimate compute_value_star(const Environment& env, int action,
                                        const LexBelief& belief, const IntrospectiveParams& ip,
                                        ValueConfig cfg) {
    ValueComputer vc(env, cfg, ip);
    auto evals = vc.evaluate_actions(belief);
    return ValueEstimate{evals[static_cast<std::size_t>(action)].value, vc.error_bound()};
}

struct ArgmaxResult {
    int action = 0;
    bool certified = false;
};

// First action (in environment order) attaining the maximal truncated value.
inline ArgmaxResult argmax_action(const Environment& env, const LexBelief& belief,
                                  ValueConfig cfg) {
    ValueComputer vc(env, cfg);
    auto r = vc.argmax(belief);
    return ArgmaxResult{r.action, r.certified};
}

}  // namespace cbs
