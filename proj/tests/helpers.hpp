#pragma once
// Shared test fixtures: in-memory builds of the worked examples, seeded
// environment generators for the property suites, and independent oracles
// (unmemoized full-tree values, brute-force Bayes) that never touch the
// implementation paths they check.

#include <random>
#include <string>
#include <vector>

#include "cbs/belief.hpp"
#include "cbs/decision.hpp"
#include "cbs/dynamics.hpp"
#include "cbs/enumerate.hpp"
#include "cbs/env_format.hpp"

namespace th {

using namespace cbs;

struct Example {
    Environment env;
    LexBelief belief;
};

inline std::string env_path(const std::string& name) {
    return std::string(CBS_ENV_DIR) + "/" + name;
}

// Ritual-and-sunrise: m_dag believes the sun needs the prayer.
inline Example aition_example() {
    auto sig = make_signature({}, {
                                      {"pray", plain_range({"0", "1"})},
                                      {"sun", plain_range({"0", "1"})},
                                      {"Util", scored_range({"-1", "0", "9", "10"})},
                                  });
    int pray = sig->require("pray"), sun = sig->require("sun"), util = sig->require("Util");
    auto util_eq = expr::compile_expression(*sig, util, {pray, sun}, "10*sun - pray");
    CausalModel m_star = make_model(
        sig, {constant_equation(*sig, pray, 0), constant_equation(*sig, sun, 1), util_eq});
    CausalModel m_dag = make_model(sig, {constant_equation(*sig, pray, 0),
                                         expr::compile_expression(*sig, sun, {pray}, "pray"),
                                         util_eq});
    auto space = make_model_space(sig, {m_dag, m_star}, {"m_dag", "m_star"});
    Environment env = make_environment(
        space, 1, trivial_context_distribution(*sig, {}),
        {make_action(*sig, "a0", make_intervention_by_name(*sig, {{"pray", "0"}}),
                     {pray, sun, util}),
         make_action(*sig, "a1", make_intervention_by_name(*sig, {{"pray", "1"}}),
                     {pray, sun, util})},
        util, Rational(1, 2));
    LexBelief belief = make_lex_belief(space, {{{0, Rational(1)}}, {{1, Rational(1)}}});
    return {std::move(env), std::move(belief)};
}

// Snake bounty: m_dag omits the breeding channel.
inline Example cobra_example() {
    auto sig = make_signature({}, {
                                      {"bounty", plain_range({"0", "1"})},
                                      {"hunt", plain_range({"0", "1"})},
                                      {"eggs", plain_range({"0", "1"})},
                                      {"snake", plain_range({"0", "1", "2"})},
                                      {"Util", scored_range({"-5", "-4", "-3", "-2", "-1", "0"})},
                                  });
    int bounty = sig->require("bounty"), hunt = sig->require("hunt"),
        eggs = sig->require("eggs"), snake = sig->require("snake"), util = sig->require("Util");
    auto hunt_eq = expr::compile_expression(*sig, hunt, {bounty}, "bounty");
    auto util_eq =
        expr::compile_expression(*sig, util, {bounty, hunt, snake}, "-(2*snake) - bounty*hunt");
    CausalModel m_star =
        make_model(sig, {constant_equation(*sig, bounty, 0), hunt_eq,
                         expr::compile_expression(*sig, eggs, {bounty}, "bounty"),
                         expr::compile_expression(
                             *sig, snake, {hunt, eggs},
                             "1 - hunt + 2*eggs > 2 ? 2 : 1 - hunt + 2*eggs"),
                         util_eq});
    CausalModel m_dag =
        make_model(sig, {constant_equation(*sig, bounty, 0), hunt_eq,
                         constant_equation(*sig, eggs, 0),
                         expr::compile_expression(*sig, snake, {hunt}, "1 - hunt"), util_eq});
    auto space = make_model_space(sig, {m_dag, m_star}, {"m_dag", "m_star"});
    Environment env = make_environment(
        space, 1, trivial_context_distribution(*sig, {}),
        {make_action(*sig, "a0", make_intervention_by_name(*sig, {{"bounty", "0"}}),
                     {snake, hunt}),
         make_action(*sig, "a1", make_intervention_by_name(*sig, {{"bounty", "1"}}),
                     {snake, hunt})},
        util, Rational(1, 2));
    LexBelief belief = make_lex_belief(space, {{{0, Rational(1)}}, {{1, Rational(1)}}});
    return {std::move(env), std::move(belief)};
}

// Two-armed environment whose feedback drifts beliefs away from the arm
// being played.
inline Example seesaw_example() {
    std::vector<std::string> y_labels;
    for (int v = 0; v < 100; ++v) y_labels.push_back(std::to_string(v));
    auto sig = make_signature({{"Y", plain_range(y_labels)}},
                              {
                                  {"X", plain_range({"r", "l", "m"})},
                                  {"Util", scored_range({"0", "1"})},
                              });
    int x = sig->require("X"), y = sig->require("Y"), util = sig->require("Util");
    auto x_eq = expr::compile_expression(*sig, x, {}, "'m'");
    CausalModel m_r = make_model(
        sig, {x_eq, expr::compile_expression(
                        *sig, util, {y, x},
                        "(X == 'r' && Y >= 25) || (X == 'l' && Y >= 50) ? 1 : 0")});
    CausalModel m_l = make_model(
        sig, {x_eq, expr::compile_expression(
                        *sig, util, {y, x},
                        "(X == 'r' && Y >= 50) || (X == 'l' && Y >= 25) ? 1 : 0")});
    CausalModel m_star =
        make_model(sig, {x_eq, expr::compile_expression(*sig, util, {y}, "Y >= 50 ? 1 : 0")});
    auto space = make_model_space(sig, {m_l, m_r, m_star}, {"m_l", "m_r", "m_star"});
    Environment env = make_environment(
        space, 2, uniform_context_distribution(*sig),
        {make_action(*sig, "a_r", make_intervention_by_name(*sig, {{"X", "r"}}), {util}),
         make_action(*sig, "a_l", make_intervention_by_name(*sig, {{"X", "l"}}), {util})},
        util, Rational(1, 2));
    LexBelief belief =
        make_lex_belief(space, {{{0, Rational(1, 2)}, {1, Rational(1, 2)}}});
    return {std::move(env), std::move(belief)};
}

// ---------------------------------------------------------------------------
// Seeded generators

inline int rand_int(std::mt19937_64& rng, int lo, int hi) {
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

// Random positive weights over `n` entries, normalized to sum 1.
inline std::vector<Rational> rand_weights(std::mt19937_64& rng, int n) {
    std::vector<Rational> w;
    Rational total(0);
    for (int i = 0; i < n; ++i) {
        w.emplace_back(rand_int(rng, 1, 6));
        total += w.back();
    }
    for (auto& x : w) x /= total;
    return w;
}

// Partition `indices` into 1..max_levels belief levels with random weights.
inline LexBelief rand_belief(std::mt19937_64& rng, ModelSpacePtr space, std::vector<int> indices,
                             int max_levels = 2) {
    int levels = rand_int(rng, 1, std::min<int>(max_levels, static_cast<int>(indices.size())));
    std::shuffle(indices.begin(), indices.end(), rng);
    std::vector<std::vector<int>> buckets(static_cast<std::size_t>(levels));
    for (std::size_t i = 0; i < indices.size(); ++i)
        buckets[i < static_cast<std::size_t>(levels) ? i : static_cast<std::size_t>(rand_int(
                                                               rng, 0, levels - 1))]
            .push_back(indices[i]);
    std::vector<Distribution> dists;
    for (auto& bucket : buckets) {
        auto w = rand_weights(rng, static_cast<int>(bucket.size()));
        Distribution d;
        for (std::size_t i = 0; i < bucket.size(); ++i) d.emplace_back(bucket[i], w[i]);
        dists.push_back(std::move(d));
    }
    return make_lex_belief(std::move(space), std::move(dists));
}

struct GenOptions {
    int max_endo = 2;        // binary non-utility endogenous variables
    int max_models = 4;
    int max_actions = 4;
    int exo_range = 0;       // 0: deterministic (no exogenous variable)
    bool truth_in_belief = false;
};

// A small environment drawn from the enumerated model space over a fixed
// signature family, plus a random belief over a sampled subset of models.
// The per-signature enumeration is cached across calls.
inline const std::vector<CausalModel>& enumerated_family(const SignaturePtr& sig, int n_endo,
                                                         int exo_range) {
    static std::map<std::pair<int, int>, std::vector<CausalModel>> cache;
    auto key = std::make_pair(n_endo, exo_range);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, enumerate_models(sig, 1, 2000000)).first;
    return it->second;
}

inline Example generate_env(std::mt19937_64& rng, const GenOptions& opt) {
    int n_endo = rand_int(rng, 1, opt.max_endo);
    std::vector<std::pair<std::string, VariableRange>> exo;
    if (opt.exo_range > 0) exo.push_back({"U", plain_range([&] {
                                              std::vector<std::string> l;
                                              for (int v = 0; v < opt.exo_range; ++v)
                                                  l.push_back(std::to_string(v));
                                              return l;
                                          }())});
    std::vector<std::pair<std::string, VariableRange>> endo;
    for (int i = 0; i < n_endo; ++i)
        endo.push_back({std::string(1, static_cast<char>('A' + i)), plain_range({"0", "1"})});
    endo.push_back({"Util", scored_range({"0", "1", "2", "3"})});
    auto sig = make_signature(std::move(exo), std::move(endo));
    int util = sig->require("Util");

    const auto& all = enumerated_family(sig, n_endo, opt.exo_range);
    int k = rand_int(rng, 2, opt.max_models);
    std::vector<int> picked;
    while (static_cast<int>(picked.size()) < k) {
        int idx = rand_int(rng, 0, static_cast<int>(all.size()) - 1);
        if (std::find(picked.begin(), picked.end(), idx) == picked.end()) picked.push_back(idx);
    }
    std::vector<CausalModel> models;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < picked.size(); ++i) {
        models.push_back(all[static_cast<std::size_t>(picked[i])]);
        names.push_back("m" + std::to_string(i));
    }
    auto space = make_model_space(sig, std::move(models), std::move(names));
    int truth = rand_int(rng, 0, k - 1);

    ContextDistribution pi;
    if (opt.exo_range > 0) {
        auto contexts = all_contexts(*sig);
        auto w = rand_weights(rng, static_cast<int>(contexts.size()));
        std::vector<std::pair<Context, Rational>> entries;
        for (std::size_t i = 0; i < contexts.size(); ++i) entries.emplace_back(contexts[i], w[i]);
        pi = make_context_distribution(*sig, std::move(entries));
    } else {
        pi = trivial_context_distribution(*sig, {});
    }

    // Candidate interventions over the non-utility variables, all distinct.
    std::vector<Intervention> candidates;
    candidates.push_back(Intervention{});  // observe-only
    for (int i = 0; i < n_endo; ++i)
        for (int v = 0; v < 2; ++v)
            candidates.push_back(make_intervention(
                *sig, {{sig->require(std::string(1, static_cast<char>('A' + i))), v}}));
    if (n_endo == 2)
        for (int va = 0; va < 2; ++va)
            for (int vb = 0; vb < 2; ++vb)
                candidates.push_back(make_intervention(
                    *sig, {{sig->require("A"), va}, {sig->require("B"), vb}}));
    std::shuffle(candidates.begin(), candidates.end(), rng);
    int n_actions = rand_int(rng, 2, std::min<int>(opt.max_actions,
                                                   static_cast<int>(candidates.size())));
    std::vector<Action> actions;
    for (int i = 0; i < n_actions; ++i) {
        std::vector<int> observe;
        for (int var = 0; var < sig->var_count(); ++var)
            if (var != util && rng() % 2) observe.push_back(var);
        if (rng() % 4 != 0) observe.push_back(util);  // usually see the utility
        actions.push_back(
            make_action(*sig, "a" + std::to_string(i), candidates[static_cast<std::size_t>(i)],
                        std::move(observe)));
    }

    Environment env = make_environment(space, truth, std::move(pi), std::move(actions), util,
                                       Rational(1, 2));
    std::vector<int> domain;
    if (opt.truth_in_belief) domain.push_back(truth);
    for (int i = 0; i < k; ++i)
        if (i != truth && rng() % 3 != 0) domain.push_back(i);
    if (domain.empty()) domain.push_back(rand_int(rng, 0, k - 1));
    LexBelief belief = rand_belief(rng, space, std::move(domain));
    return {std::move(env), std::move(belief)};
}

// ---------------------------------------------------------------------------
// Oracles

// Unmemoized, ungrouped full-tree expansion of the value recursion. Walks
// every (model, context) branch separately and re-derives each continuation
// belief through the public update().
inline Rational value_oracle(const Environment& env, const LexBelief& belief, int action,
                             int depth) {
    const Action& act = env.actions[static_cast<std::size_t>(action)];
    Rational total(0);
    for (const auto& [idx, w] : belief.mu_bar()) {
        const CausalModel& model = belief.space->models[static_cast<std::size_t>(idx)];
        CausalModel cut = intervene(model, act.intervention);
        for (const auto& [u, p] : env.pi.support) {
            FullState st = evaluate(cut, u);
            Rational branch =
                env.sig().score_of(env.util_var, st[static_cast<std::size_t>(env.util_var)]);
            if (depth > 1) {
                LexBelief next = update(belief, predicted_observation(model, u, act), env.pi);
                Rational best;
                bool first = true;
                for (std::size_t a2 = 0; a2 < env.actions.size(); ++a2) {
                    Rational v = value_oracle(env, next, static_cast<int>(a2), depth - 1);
                    if (first || v > best) {
                        best = v;
                        first = false;
                    }
                }
                branch += env.delta * best;
            }
            total += w * p * branch;
        }
    }
    return total;
}

// Same, for the introspective recursion.
inline Rational value_star_oracle(const Environment& env, const IntrospectiveParams& ip,
                                  const XiVector& xi, const LexBelief& belief, int action,
                                  int depth) {
    const Action& act = env.actions[static_cast<std::size_t>(action)];
    Rational inner(0);
    for (const auto& [idx, w] : belief.mu_bar()) {
        const CausalModel& model = belief.space->models[static_cast<std::size_t>(idx)];
        CausalModel cut = intervene(model, act.intervention);
        for (const auto& [u, p] : env.pi.support) {
            FullState st = evaluate(cut, u);
            Rational branch =
                env.sig().score_of(env.util_var, st[static_cast<std::size_t>(env.util_var)]);
            if (depth > 1) {
                Observation obs = predicted_observation(model, u, act);
                Observation src = ip.tau_obs == TauObsSource::TrueModel
                                      ? predicted_observation(env.truth(), u, act)
                                      : obs;
                LexBelief next = update(belief, obs, env.pi);
                XiVector next_xi = tau_apply(ip.tau, xi, src);
                Rational best;
                bool first = true;
                for (std::size_t a2 = 0; a2 < env.actions.size(); ++a2) {
                    Rational v = value_star_oracle(env, ip, next_xi, next, static_cast<int>(a2),
                                                   depth - 1);
                    if (first || v > best) {
                        best = v;
                        first = false;
                    }
                }
                branch += env.delta * best;
            }
            inner += w * p * branch;
        }
    }
    const Rational& x = xi[static_cast<std::size_t>(action)];
    return x * ip.v_star + (1 - x) * inner;
}

// Ordinary Bayes posterior for a single-level belief, by exhaustive
// enumeration over (model, context) pairs.
inline Distribution bayes_oracle(const LexBelief& belief, const Observation& obs,
                                 const ContextDistribution& pi) {
    Distribution post;
    Rational total(0);
    for (const auto& [idx, w] : belief.mu_bar()) {
        const CausalModel& model = belief.space->models[static_cast<std::size_t>(idx)];
        CausalModel cut = intervene(model, obs.intervention);
        Rational mass(0);
        for (const auto& [u, p] : pi.support)
            if (agrees(evaluate(cut, u), obs.observed)) mass += w * p;
        if (mass > 0) {
            post.emplace_back(idx, mass);
            total += mass;
        }
    }
    for (auto& [idx, w] : post) w /= total;
    return post;
}

}  // namespace th
