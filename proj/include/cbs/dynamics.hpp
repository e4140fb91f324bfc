#pragma once
// The belief-action loop against the true model: single steps, seeded
// simulation, the deterministic-environment convergence iteration, and
// steady-state verification.

#include <algorithm>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cbs/belief.hpp"
#include "cbs/decision.hpp"
#include "cbs/errors.hpp"

namespace cbs {

// What to do when a realized observation has zero likelihood under every
// model in the belief's domain. The conditional system cannot resolve such
// evidence; the caller picks the policy.
enum class SurprisePolicy { Halt, FreezeBelief };

struct TrajectoryRecord {
    int period = 0;
    LexBelief belief_before;
    int action = 0;
    bool certified = false;
    Context context;
    Observation observation;   // what the true model produced
    Rational realized_util;
    // The unconditional belief put probability zero on this observation
    // (deeper levels may still explain it).
    bool surprised = false;
    LexBelief belief_after;
    std::optional<XiVector> xi_before;
    std::optional<XiVector> xi_after;
};

namespace detail {

inline TrajectoryRecord step_impl(ValueComputer& vc, const LexBelief& belief,
                                  const Context& context, int period,
                                  const std::optional<XiVector>& xi, SurprisePolicy policy) {
    const Environment& env = vc.environment();
    if (!(env.pi.prob(context) > 0))
        throw ValidationError("context has zero probability under pi");

    TrajectoryRecord rec;
    rec.period = period;
    rec.belief_before = belief;
    rec.context = context;
    rec.xi_before = xi;

    ValueComputer::Argmax choice = xi ? vc.argmax(belief, *xi) : vc.argmax(belief);
    rec.action = choice.action;
    rec.certified = choice.certified;

    const Action& act = env.actions[static_cast<std::size_t>(choice.action)];
    rec.observation = predicted_observation(env.truth(), context, act);
    FullState truth_state = evaluate(intervene(env.truth(), act.intervention), context);
    rec.realized_util =
        env.sig().score_of(env.util_var, truth_state[static_cast<std::size_t>(env.util_var)]);

    auto lh = domain_likelihoods(belief, rec.observation, env.pi);
    rec.surprised = true;
    for (const auto& [idx, w] : belief.mu_bar())
        if (lh.at(idx) > 0) rec.surprised = false;
    bool total = true;
    for (const auto& [idx, l] : lh)
        if (l > 0) total = false;

    if (total) {
        if (policy == SurprisePolicy::Halt)
            throw TotalSurprise("period " + std::to_string(period) +
                                ": observation has zero likelihood under every model in the "
                                "belief's domain");
        rec.belief_after = belief;  // freeze
        rec.xi_after = xi;
        return rec;
    }
    rec.belief_after =
        detail::update_with_likelihoods(belief, [&](int idx) { return lh.at(idx); });
    if (xi && vc.introspective())
        rec.xi_after = tau_apply(vc.introspective_params()->tau, *xi, rec.observation);
    return rec;
}

}  // namespace detail

// One period of play: choose by argmax, observe what the true model
// generates, update (or apply the surprise policy), and record everything.
inline TrajectoryRecord step(const Environment& env, const LexBelief& belief,
                             const Context& context, ValueConfig cfg,
                             std::optional<IntrospectiveParams> ip = std::nullopt,
                             std::optional<XiVector> xi = std::nullopt,
                             SurprisePolicy policy = SurprisePolicy::Halt) {
    if (ip && !xi) xi = ip->xi;
    ValueComputer vc(env, cfg, ip);
    return detail::step_impl(vc, belief, context, 0, xi, policy);
}

// Draws a context from pi by inverting the cumulative distribution at a
// 64-bit uniform draw; exact comparisons keep this reproducible everywhere.
inline const Context& sample_context(const ContextDistribution& pi, std::mt19937_64& rng) {
    if (pi.trivial()) return pi.support.front().first;
    Rational u(rng());
    u /= Rational(BigInt(1) << 64);
    Rational cum(0);
    for (const auto& [ctx, p] : pi.support) {
        cum += p;
        if (u < cum) return ctx;
    }
    return pi.support.back().first;
}

// i.i.d. contexts from a seeded generator, chained through step(); fully
// reproducible given the seed.
inline std::vector<TrajectoryRecord> simulate(const Environment& env, const LexBelief& belief0,
                                              int periods, std::uint64_t seed, ValueConfig cfg,
                                              std::optional<IntrospectiveParams> ip = std::nullopt,
                                              SurprisePolicy policy = SurprisePolicy::Halt) {
    if (periods < 1) throw ValidationError("periods must be at least 1");
    ValueComputer vc(env, cfg, ip);
    std::mt19937_64 rng(seed);
    std::vector<TrajectoryRecord> out;
    out.reserve(static_cast<std::size_t>(periods));
    LexBelief belief = belief0;
    std::optional<XiVector> xi;
    if (ip) xi = ip->xi;
    for (int t = 0; t < periods; ++t) {
        Context ctx = sample_context(env.pi, rng);
        TrajectoryRecord rec = detail::step_impl(vc, belief, ctx, t, xi, policy);
        belief = rec.belief_after;
        xi = rec.xi_after;
        out.push_back(std::move(rec));
        vc.clear_memo();  // beliefs rarely recur across periods; bound the table
    }
    return out;
}

// The Remark-2 iteration: in a deterministic environment, alternate argmax
// and updating on the true observation until the (belief, action) pair
// repeats. Each belief change discards at least one model, so the sequence
// terminates.
struct ConvergenceTrace {
    std::vector<std::pair<LexBelief, int>> steps;  // (belief before acting, action)
    int converged_at = 0;
    int mu_bar_changes = 0;
};

inline ConvergenceTrace iterate_deterministic(const Environment& env, const LexBelief& belief0,
                                              ValueConfig cfg) {
    if (!env.pi.trivial())
        throw NotDeterministic("pi is not a point mass; the convergence iteration requires a "
                               "deterministic environment");
    auto dom = belief0.domain();
    if (!std::binary_search(dom.begin(), dom.end(), env.true_model))
        throw ValidationError("true model is not in the initial belief's domain");

    ValueComputer vc(env, cfg);
    const Context& u = env.pi.support.front().first;
    ConvergenceTrace trace;
    LexBelief belief = belief0;
    int limit = static_cast<int>(dom.size()) + 8;
    for (int i = 0; i < limit; ++i) {
        auto choice = vc.argmax(belief);
        if (!choice.certified)
            throw Uncertified("argmax not certified at horizon " + std::to_string(vc.horizon()) +
                              "; raise the horizon");
        trace.steps.emplace_back(belief, choice.action);
        if (trace.steps.size() >= 2) {
            const auto& prev = trace.steps[trace.steps.size() - 2];
            if (prev.second == choice.action && prev.first == belief) {
                trace.converged_at = static_cast<int>(trace.steps.size()) - 1;
                return trace;
            }
        }
        Observation obs = predicted_observation(
            env.truth(), u, env.actions[static_cast<std::size_t>(choice.action)]);
        LexBelief next = update(belief, obs, env.pi);
        if (!(next.mu_bar() == belief.mu_bar())) ++trace.mu_bar_changes;
        belief = std::move(next);
    }
    throw Error("convergence iteration exceeded its theoretical bound");  // unreachable
}

enum class SteadyStatus { Steady, NotSteady, Undecided };

struct SteadyVerdict {
    SteadyStatus status = SteadyStatus::Undecided;
    std::string reason;
};

// Verifies the steady-state conditions for (belief, action):
//   1. the action certifiably attains the maximal value (value_star when
//      introspective parameters are given);
//   2. for every positive-probability context, updating on the true-model
//      observation leaves mu_bar exactly unchanged (strict: whole hierarchy);
//   3. introspective only: tau leaves xi exactly unchanged on those
//      observations.
// Steady requires certified optimality; an uncertifiable comparison yields
// Undecided, never a silent pass.
inline SteadyVerdict steady_check(const Environment& env, const LexBelief& belief, int action,
                                  ValueConfig cfg,
                                  std::optional<IntrospectiveParams> ip = std::nullopt,
                                  std::optional<XiVector> xi = std::nullopt, bool strict = false) {
    if (action < 0 || action >= static_cast<int>(env.actions.size()))
        throw ValidationError("action index out of range");
    if (ip && !xi) xi = ip->xi;
    const Action& act = env.actions[static_cast<std::size_t>(action)];

    // Condition 2 (and 3): exact, so check before the bounded one.
    for (const auto& [u, p] : env.pi.support) {
        Observation obs = predicted_observation(env.truth(), u, act);
        auto lh = domain_likelihoods(belief, obs, env.pi);
        bool any = false;
        for (const auto& [idx, l] : lh)
            if (l > 0) any = true;
        if (!any)
            return {SteadyStatus::NotSteady,
                    "the true-model observation cannot be explained by any model in the domain"};
        LexBelief updated =
            detail::update_with_likelihoods(belief, [&](int idx) { return lh.at(idx); });
        if (strict ? !(updated == belief) : !(updated.mu_bar() == belief.mu_bar()))
            return {SteadyStatus::NotSteady,
                    strict ? "the true-model observation changes the belief hierarchy"
                           : "the true-model observation changes the unconditional belief"};
        if (ip) {
            XiVector next = tau_apply(ip->tau, *xi, obs);
            if (next != *xi)
                return {SteadyStatus::NotSteady, "tau changes xi on the true-model observation"};
        }
    }

    ValueComputer vc(env, cfg, ip);
    auto evals = xi ? vc.evaluate_actions(belief, *xi) : vc.evaluate_actions(belief);
    const XiVector* xp = xi ? &*xi : nullptr;
    bool all_geq = true;
    for (int j = 0; j < static_cast<int>(evals.size()); ++j) {
        if (j == action) continue;
        if (vc.cert_gt(evals, j, action, xp))
            return {SteadyStatus::NotSteady,
                    "action '" + act.name + "' is certifiably worse than '" +
                        env.actions[static_cast<std::size_t>(j)].name + "'"};
        all_geq = all_geq && vc.cert_geq(evals, action, j, xp);
    }
    if (!all_geq)
        return {SteadyStatus::Undecided,
                "optimality of '" + act.name + "' is within the truncation bound " +
                    to_string(2 * vc.error_bound()) + " at horizon " +
                    std::to_string(vc.horizon())};
    return {SteadyStatus::Steady, "value-optimal and the true observation preserves beliefs"};
}

// Heuristic stabilization evidence for a simulated trace: switch counting
// over a trailing window. Evidence only, never proof of non-convergence.
struct CycleReport {
    int switches = 0;
    int distinct_actions = 0;
    int longest_constant_suffix = 0;
    bool stabilized = true;  // no switch within the trailing window
};

inline CycleReport detect_cycle(const std::vector<TrajectoryRecord>& trace, int window) {
    CycleReport r;
    if (trace.empty()) return r;
    std::vector<int> seen;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        if (std::find(seen.begin(), seen.end(), trace[i].action) == seen.end())
            seen.push_back(trace[i].action);
        if (i > 0 && trace[i].action != trace[i - 1].action) ++r.switches;
    }
    r.distinct_actions = static_cast<int>(seen.size());
    r.longest_constant_suffix = 1;
    for (std::size_t i = trace.size() - 1; i > 0; --i) {
        if (trace[i].action != trace[i - 1].action) break;
        ++r.longest_constant_suffix;
    }
    std::size_t from = trace.size() > static_cast<std::size_t>(window)
                           ? trace.size() - static_cast<std::size_t>(window)
                           : 0;
    for (std::size_t i = from + 1; i < trace.size(); ++i)
        if (trace[i].action != trace[i - 1].action) r.stabilized = false;
    return r;
}

}  // namespace cbs
