#pragma once
// Beliefs over finite model spaces: observation likelihoods, explained sets,
// and conditional probability systems represented as lexicographic
// hierarchies (ordered mutually singular levels whose supports partition the
// domain). Conditioning on an event uses the first level that meets it, which
// yields a well-defined conditional even after probability-zero evidence.

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cbs/errors.hpp"
#include "cbs/rational.hpp"
#include "cbs/sem.hpp"

namespace cbs {

struct ModelSpace {
    SignaturePtr sig;
    std::vector<CausalModel> models;
    std::vector<std::string> names;  // parallel to models, unique

    int size() const { return static_cast<int>(models.size()); }
    int index_of(const std::string& name) const {
        for (int i = 0; i < size(); ++i)
            if (names[i] == name) return i;
        return -1;
    }

    bool operator==(const ModelSpace& o) const {
        return *sig == *o.sig && models == o.models && names == o.names;
    }
};

using ModelSpacePtr = std::shared_ptr<const ModelSpace>;

inline ModelSpacePtr make_model_space(SignaturePtr sig, std::vector<CausalModel> models,
                                      std::vector<std::string> names = {}) {
    if (models.empty()) throw ValidationError("model space must be nonempty");
    if (names.empty())
        for (std::size_t i = 0; i < models.size(); ++i) names.push_back("m" + std::to_string(i));
    if (names.size() != models.size())
        throw ValidationError("model space names do not match models");
    for (std::size_t i = 0; i < models.size(); ++i) {
        if (models[i].sig == nullptr || !(*models[i].sig == *sig))
            throw ValidationError("model '" + names[i] + "' uses a different signature");
        for (std::size_t j = i + 1; j < models.size(); ++j) {
            if (models[i] == models[j])
                throw ValidationError("models '" + names[i] + "' and '" + names[j] +
                                      "' are identical");
            if (names[i] == names[j]) throw ValidationError("duplicate model name '" + names[i] + "'");
        }
    }
    auto space = std::make_shared<ModelSpace>();
    space->sig = std::move(sig);
    space->models = std::move(models);
    space->names = std::move(names);
    return space;
}

// Distribution over contexts; exact positive weights summing to one.
struct ContextDistribution {
    std::vector<std::pair<Context, Rational>> support;  // sorted by context

    bool trivial() const { return support.size() == 1; }
    Rational prob(const Context& c) const {
        for (const auto& [ctx, p] : support)
            if (ctx == c) return p;
        return Rational(0);
    }
    bool operator==(const ContextDistribution&) const = default;
};

inline ContextDistribution make_context_distribution(
    const Signature& sig, std::vector<std::pair<Context, Rational>> entries) {
    std::sort(entries.begin(), entries.end());
    ContextDistribution d;
    Rational total(0);
    for (auto& [ctx, p] : entries) {
        if (static_cast<int>(ctx.size()) != sig.exo_count())
            throw ValidationError("context does not assign every exogenous variable");
        for (int i = 0; i < sig.exo_count(); ++i)
            if (ctx[static_cast<std::size_t>(i)] < 0 ||
                ctx[static_cast<std::size_t>(i)] >= sig.range_of(i).size())
                throw ValidationError("context value out of range for '" + sig.name_of(i) + "'");
        if (p < 0) throw ValidationError("negative context probability");
        if (!d.support.empty() && d.support.back().first == ctx)
            throw ValidationError("duplicate context in distribution");
        total += p;
        if (p > 0) d.support.emplace_back(std::move(ctx), std::move(p));
    }
    if (total != 1) throw ValidationError("context probabilities sum to " + to_string(total) +
                                          ", expected 1");
    if (d.support.empty()) throw ValidationError("context distribution has empty support");
    return d;
}

inline ContextDistribution uniform_context_distribution(const Signature& sig) {
    auto contexts = all_contexts(sig);
    Rational p(1, static_cast<long>(contexts.size()));
    std::vector<std::pair<Context, Rational>> entries;
    for (auto& c : contexts) entries.emplace_back(std::move(c), p);
    return make_context_distribution(sig, std::move(entries));
}

inline ContextDistribution trivial_context_distribution(const Signature& sig, Context c) {
    std::vector<std::pair<Context, Rational>> entries;
    entries.emplace_back(std::move(c), Rational(1));
    return make_context_distribution(sig, std::move(entries));
}

// The evidence one action generates: an intervention together with observed
// values. Values observed for intervened variables must echo the intervention.
struct Observation {
    Intervention intervention;
    PartialAssignment observed;

    bool operator==(const Observation&) const = default;
    auto operator<=>(const Observation&) const = default;
};

inline Observation make_observation(const Signature& sig, Intervention iv,
                                    PartialAssignment observed) {
    detail::check_sorted_assignment(sig, iv.assignments, true);
    detail::check_sorted_assignment(sig, observed.entries, false);
    for (auto [var, val] : observed.entries) {
        auto forced = iv.value_of(var);
        if (forced && *forced != val)
            throw ValidationError("observed value of '" + sig.name_of(var) +
                                  "' contradicts the intervention");
    }
    return Observation{std::move(iv), std::move(observed)};
}

// pi(M, o): the probability that model M generates observation o.
inline Rational likelihood(const CausalModel& model, const Observation& obs,
                           const ContextDistribution& pi) {
    CausalModel cut = intervene(model, obs.intervention);
    Rational total(0);
    for (const auto& [ctx, p] : pi.support)
        if (agrees(evaluate(cut, ctx), obs.observed)) total += p;
    return total;
}

// E(o): indices of models that generate o with positive probability.
inline std::vector<int> explained_set(const ModelSpace& space, const Observation& obs,
                                      const ContextDistribution& pi) {
    std::vector<int> out;
    for (int i = 0; i < space.size(); ++i)
        if (likelihood(space.models[static_cast<std::size_t>(i)], obs, pi) > 0) out.push_back(i);
    return out;
}

// Weighted set of models; entries sorted by model index, weights sum to one.
using Distribution = std::vector<std::pair<int, Rational>>;

inline Rational mass(const Distribution& dist, const std::vector<int>& set) {
    Rational total(0);
    for (const auto& [idx, w] : dist)
        if (std::binary_search(set.begin(), set.end(), idx)) total += w;
    return total;
}

// Lexicographic belief: level 0 is the unconditional distribution; deeper
// levels only surface when evidence rules out everything above them. The
// domain is the union of the level supports.
struct LexBelief {
    ModelSpacePtr space;
    std::vector<Distribution> levels;

    const Distribution& mu_bar() const { return levels.front(); }
    std::vector<int> domain() const {
        std::vector<int> out;
        for (const auto& level : levels)
            for (const auto& [idx, w] : level) out.push_back(idx);
        std::sort(out.begin(), out.end());
        return out;
    }
    bool operator==(const LexBelief& o) const {
        return levels == o.levels && (space == o.space || *space == *o.space);
    }
};

inline LexBelief make_lex_belief(ModelSpacePtr space, std::vector<Distribution> levels) {
    if (levels.empty()) throw ValidationError("belief must have at least one level");
    std::vector<bool> seen(static_cast<std::size_t>(space->size()), false);
    for (auto& level : levels) {
        if (level.empty()) throw ValidationError("belief level has empty support");
        std::sort(level.begin(), level.end());
        Rational total(0);
        for (const auto& [idx, w] : level) {
            if (idx < 0 || idx >= space->size())
                throw ValidationError("belief references a model outside the space");
            if (w <= 0) throw ValidationError("belief weights must be positive");
            if (seen[static_cast<std::size_t>(idx)])
                throw ValidationError("model '" + space->names[static_cast<std::size_t>(idx)] +
                                      "' appears in two belief levels");
            seen[static_cast<std::size_t>(idx)] = true;
            total += w;
        }
        if (total != 1)
            throw ValidationError("belief level sums to " + to_string(total) + ", expected 1");
    }
    return LexBelief{std::move(space), std::move(levels)};
}

inline LexBelief point_mass_belief(ModelSpacePtr space, int model) {
    return make_lex_belief(std::move(space), {{{model, Rational(1)}}});
}

// mu_F: restrict-and-renormalize the first level whose support meets F.
inline Distribution condition(const LexBelief& belief, const std::vector<int>& event) {
    if (event.empty()) throw EmptyEvent("conditioning event is empty");
    std::vector<int> sorted = event;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> dom = belief.domain();
    for (int idx : sorted)
        if (!std::binary_search(dom.begin(), dom.end(), idx))
            throw ValidationError("conditioning event is not a subset of the belief domain");
    for (const auto& level : belief.levels) {
        Distribution hit;
        Rational total(0);
        for (const auto& [idx, w] : level)
            if (std::binary_search(sorted.begin(), sorted.end(), idx)) {
                hit.emplace_back(idx, w);
                total += w;
            }
        if (!hit.empty()) {
            for (auto& [idx, w] : hit) w /= total;
            return hit;
        }
    }
    throw EmptyEvent("conditioning event misses every level");  // unreachable for valid beliefs
}

// Likelihood of `obs` for every model in the belief's domain.
inline std::map<int, Rational> domain_likelihoods(const LexBelief& belief, const Observation& obs,
                                                  const ContextDistribution& pi) {
    std::map<int, Rational> out;
    for (int idx : belief.domain())
        out[idx] = likelihood(belief.space->models[static_cast<std::size_t>(idx)], obs, pi);
    return out;
}

namespace detail {

// Shared update step: reweight each level by model likelihood, drop models
// with zero likelihood, renormalize, and drop empty levels. The updated
// domain is the old domain intersected with the explained set.
inline LexBelief update_with_likelihoods(const LexBelief& belief,
                                         const std::function<Rational(int)>& lh) {
    std::vector<Distribution> levels;
    for (const auto& level : belief.levels) {
        Distribution next;
        Rational total(0);
        for (const auto& [idx, w] : level) {
            Rational l = lh(idx);
            if (l > 0) {
                next.emplace_back(idx, w * l);
                total += w * l;
            }
        }
        if (next.empty()) continue;
        for (auto& [idx, w] : next) w /= total;
        levels.push_back(std::move(next));
    }
    if (levels.empty())
        throw TotalSurprise("observation has zero likelihood under every model in the domain");
    return LexBelief{belief.space, std::move(levels)};
}

}  // namespace detail

// Posterior hierarchy after observing `obs`.
inline LexBelief update(const LexBelief& belief, const Observation& obs,
                        const ContextDistribution& pi) {
    auto lh = domain_likelihoods(belief, obs, pi);
    return detail::update_with_likelihoods(belief, [&](int idx) { return lh.at(idx); });
}

// ---------------------------------------------------------------------------
// CPS axiom checking

struct CpsReport {
    bool ok = true;
    std::string message;
    std::vector<int> f, f_inner, f_innermost;  // witness triple when CP2 fails
    std::size_t checks = 0;
};

// Checks CP1/CP2 for an arbitrary event->distribution family over `domain`.
// Exhaustive when |domain| <= exhaustive_cap, otherwise seeded random triples.
inline CpsReport check_cps_family(
    const std::vector<int>& domain,
    const std::function<Distribution(const std::vector<int>&)>& family,
    int exhaustive_cap = 10, std::size_t samples = 500, std::uint64_t seed = 1) {
    CpsReport report;
    const int n = static_cast<int>(domain.size());

    auto subset_of = [&](std::uint64_t bits) {
        std::vector<int> out;
        for (int i = 0; i < n; ++i)
            if (bits & (1ull << i)) out.push_back(domain[static_cast<std::size_t>(i)]);
        return out;
    };
    auto check_cp1 = [&](const std::vector<int>& f) -> bool {
        Distribution d = family(f);
        ++report.checks;
        Rational total(0);
        for (const auto& [idx, w] : d) {
            if (!std::binary_search(f.begin(), f.end(), idx)) return false;
            total += w;
        }
        return total == 1;
    };
    auto check_cp2 = [&](const std::vector<int>& f, const std::vector<int>& f1,
                         const std::vector<int>& f2) -> bool {
        ++report.checks;
        return mass(family(f), f2) == mass(family(f1), f2) * mass(family(f), f1);
    };

    if (n <= exhaustive_cap) {
        for (std::uint64_t bits = 1; bits < (1ull << n); ++bits) {
            auto f = subset_of(bits);
            if (!check_cp1(f)) {
                report.ok = false;
                report.message = "CP1 violated";
                report.f = f;
                return report;
            }
        }
        // Assign each element to one of: F'' / F'\F'' / F\F' / outside.
        std::vector<int> cat(static_cast<std::size_t>(n), 0);
        while (true) {
            std::vector<int> f, f1, f2;
            for (int i = 0; i < n; ++i) {
                int c = cat[static_cast<std::size_t>(i)];
                if (c <= 2) f.push_back(domain[static_cast<std::size_t>(i)]);
                if (c <= 1) f1.push_back(domain[static_cast<std::size_t>(i)]);
                if (c == 0) f2.push_back(domain[static_cast<std::size_t>(i)]);
            }
            if (!f1.empty() && !check_cp2(f, f1, f2)) {
                report.ok = false;
                report.message = "CP2 violated";
                report.f = f;
                report.f_inner = f1;
                report.f_innermost = f2;
                return report;
            }
            int i = n - 1;
            for (; i >= 0; --i) {
                if (++cat[static_cast<std::size_t>(i)] < 4) break;
                cat[static_cast<std::size_t>(i)] = 0;
            }
            if (i < 0) break;
        }
        return report;
    }

    std::mt19937_64 rng(seed);
    for (std::size_t s = 0; s < samples; ++s) {
        std::vector<int> f, f1, f2;
        do {
            f.clear();
            f1.clear();
            f2.clear();
            for (int i = 0; i < n; ++i) {
                switch (rng() % 4) {
                    case 0: f2.push_back(domain[static_cast<std::size_t>(i)]); [[fallthrough]];
                    case 1: f1.push_back(domain[static_cast<std::size_t>(i)]); [[fallthrough]];
                    case 2: f.push_back(domain[static_cast<std::size_t>(i)]); break;
                    default: break;
                }
            }
        } while (f1.empty());
        std::sort(f.begin(), f.end());
        std::sort(f1.begin(), f1.end());
        std::sort(f2.begin(), f2.end());
        if (!check_cp1(f) || !check_cp2(f, f1, f2)) {
            report.ok = false;
            report.message = "CP violated on sampled triple";
            report.f = f;
            report.f_inner = f1;
            report.f_innermost = f2;
            return report;
        }
    }
    return report;
}

// CP1/CP2 for the family derived from a lexicographic belief via condition().
inline CpsReport validate_cps(const LexBelief& belief, int exhaustive_cap = 10,
                              std::size_t samples = 500, std::uint64_t seed = 1) {
    return check_cps_family(
        belief.domain(), [&](const std::vector<int>& f) { return condition(belief, f); },
        exhaustive_cap, samples, seed);
}

}  // namespace cbs
