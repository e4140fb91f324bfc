#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "helpers.hpp"

using namespace cbs;

namespace {

// A dummy space of n distinct models (constants over one n-valued variable),
// for belief tests that never evaluate the models themselves.
ModelSpacePtr dummy_space(int n) {
    std::vector<std::string> labels;
    for (int v = 0; v < n; ++v) labels.push_back(std::to_string(v));
    auto sig = make_signature({}, {{"X", plain_range(labels)}});
    return make_model_space(sig, enumerate_models(sig, 0));
}

Observation seesaw_obs(const th::Example& ex, const std::string& action_value,
                       const std::string& util_value) {
    const Signature& sig = ex.env.sig();
    return make_observation(sig, make_intervention_by_name(sig, {{"X", action_value}}),
                            make_partial_by_name(sig, {{"Util", util_value}}));
}

}  // namespace

TEST_CASE("likelihood") {
    auto seesaw = th::seesaw_example();
    SECTION("true model produces Util=1 under X<-r with probability 1/2") {
        REQUIRE(likelihood(seesaw.env.truth(), seesaw_obs(seesaw, "r", "1"), seesaw.env.pi) ==
                Rational(1, 2));
    }
    SECTION("empty observed set has likelihood 1") {
        Observation vacuous{make_intervention_by_name(seesaw.env.sig(), {{"X", "r"}}), {}};
        for (const auto& m : seesaw.env.space->models)
            REQUIRE(likelihood(m, vacuous, seesaw.env.pi) == 1);
    }
    SECTION("m_r puts 3/4 on Util=1 under X<-r") {
        // Independent count over the context range.
        int hits = 0;
        for (int y = 0; y < 100; ++y)
            if (y >= 25) ++hits;
        REQUIRE(likelihood(seesaw.env.space->models[1], seesaw_obs(seesaw, "r", "1"),
                           seesaw.env.pi) == Rational(hits, 100));
        REQUIRE(hits == 75);
    }
}

TEST_CASE("explained_set") {
    auto cobra = th::cobra_example();
    const Signature& csig = cobra.env.sig();
    SECTION("the bounty outcome rules out the naive model") {
        Observation o = make_observation(
            csig, make_intervention_by_name(csig, {{"bounty", "1"}}),
            make_partial_by_name(csig, {{"snake", "2"}, {"hunt", "1"}}));
        REQUIRE(explained_set(*cobra.env.space, o, cobra.env.pi) == std::vector<int>{1});
    }
    SECTION("vacuous observation explains everything, preserving order") {
        Observation o{Intervention{}, {}};
        REQUIRE(explained_set(*cobra.env.space, o, cobra.env.pi) == std::vector<int>{0, 1});
    }
    SECTION("all three seesaw models can produce Util=1 under X<-r") {
        auto seesaw = th::seesaw_example();
        REQUIRE(explained_set(*seesaw.env.space, seesaw_obs(seesaw, "r", "1"), seesaw.env.pi) ==
                std::vector<int>{0, 1, 2});
    }
}

TEST_CASE("condition") {
    SECTION("a probability-zero event surfaces the deeper level") {
        auto aition = th::aition_example();
        Distribution d = condition(aition.belief, {1});  // {m_star}
        REQUIRE(d == Distribution{{1, Rational(1)}});
    }
    SECTION("conditioning on the full domain returns level 0 verbatim") {
        auto aition = th::aition_example();
        REQUIRE(condition(aition.belief, {0, 1}) == aition.belief.mu_bar());
    }
    SECTION("first intersecting level wins and is renormalized") {
        auto space = dummy_space(3);
        LexBelief b = make_lex_belief(
            space, {{{0, Rational(1, 2)}, {1, Rational(1, 2)}}, {{2, Rational(1)}}});
        REQUIRE(condition(b, {1, 2}) == Distribution{{1, Rational(1)}});
    }
    SECTION("errors") {
        auto aition = th::aition_example();
        REQUIRE_THROWS_AS(condition(aition.belief, {}), EmptyEvent);
        REQUIRE_THROWS_AS(condition(aition.belief, {7}), ValidationError);
    }
}

TEST_CASE("update on the worked examples") {
    auto aition = th::aition_example();
    const Signature& sig = aition.env.sig();
    SECTION("the ritual observation updates nothing at all") {
        Observation o = make_observation(
            sig, make_intervention_by_name(sig, {{"pray", "1"}}),
            make_partial_by_name(sig, {{"pray", "1"}, {"sun", "1"}}));
        REQUIRE(update(aition.belief, o, aition.env.pi) == aition.belief);
    }
    SECTION("the skipped ritual forces wholesale revision to the true model") {
        Observation o = make_observation(
            sig, make_intervention_by_name(sig, {{"pray", "0"}}),
            make_partial_by_name(sig, {{"pray", "0"}, {"sun", "1"}}));
        LexBelief after = update(aition.belief, o, aition.env.pi);
        REQUIRE(after.levels.size() == 1);
        REQUIRE(after.mu_bar() == Distribution{{1, Rational(1)}});
    }
    SECTION("seesaw likelihood reweighting") {
        auto seesaw = th::seesaw_example();
        LexBelief after = update(seesaw.belief, seesaw_obs(seesaw, "r", "1"), seesaw.env.pi);
        // weights 1/2 * 1/2 (m_l) and 1/2 * 3/4 (m_r), renormalized
        REQUIRE(after.mu_bar() == Distribution{{0, Rational(2, 5)}, {1, Rational(3, 5)}});
    }
    SECTION("total surprise is an explicit error") {
        Observation o = make_observation(
            sig, make_intervention_by_name(sig, {{"pray", "0"}}),
            make_partial_by_name(sig, {{"pray", "0"}, {"sun", "1"}, {"Util", "0"}}));
        REQUIRE_THROWS_AS(update(aition.belief, o, aition.env.pi), TotalSurprise);
    }
}

TEST_CASE("validate_cps") {
    SECTION("single-level full-support beliefs pass") {
        auto space = dummy_space(4);
        LexBelief b = make_lex_belief(space, {{{0, Rational(1, 10)},
                                               {1, Rational(2, 10)},
                                               {2, Rational(3, 10)},
                                               {3, Rational(4, 10)}}});
        REQUIRE(validate_cps(b).ok);
    }
    SECTION("the two-level example belief passes") {
        auto aition = th::aition_example();
        REQUIRE(validate_cps(aition.belief).ok);
    }
    SECTION("an inconsistent hand-built family is caught with a witness") {
        // Uniform everywhere except one reweighted top event; breaks CP2.
        std::vector<int> domain = {0, 1, 2};
        auto family = [](const std::vector<int>& f) {
            Distribution d;
            if (f.size() == 3) {
                d = {{0, Rational(1, 2)}, {1, Rational(1, 4)}, {2, Rational(1, 4)}};
            } else {
                for (int idx : f) d.emplace_back(idx, Rational(1, static_cast<long>(f.size())));
            }
            return d;
        };
        CpsReport r = check_cps_family(domain, family);
        REQUIRE_FALSE(r.ok);
        REQUIRE(r.message == "CP2 violated");
        REQUIRE_FALSE(r.f_inner.empty());
    }
    SECTION("sampled mode also catches the inconsistency") {
        std::vector<int> domain;
        for (int i = 0; i < 12; ++i) domain.push_back(i);
        auto family = [&](const std::vector<int>& f) {
            Distribution d;
            if (f.size() == domain.size()) {
                d.emplace_back(0, Rational(11, 12));
                for (std::size_t i = 1; i < f.size(); ++i)
                    d.emplace_back(f[i], Rational(1, 132));
            } else {
                for (int idx : f) d.emplace_back(idx, Rational(1, static_cast<long>(f.size())));
            }
            return d;
        };
        CpsReport r = check_cps_family(domain, family, 10, 2000, 3);
        REQUIRE_FALSE(r.ok);
    }
}

TEST_CASE("CPS axioms hold for generated lexicographic beliefs") {
    auto space = dummy_space(5);
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        int n = th::rand_int(rng, 1, 5);
        std::vector<int> indices;
        for (int i = 0; i < n; ++i) indices.push_back(i);
        LexBelief b = th::rand_belief(rng, space, indices, 3);
        CpsReport r = validate_cps(b);
        INFO(r.message);
        REQUIRE(r.ok);
    }
}

TEST_CASE("update matches the conditional-reweighting formula on every event") {
    std::mt19937_64 rng(1234);
    th::GenOptions opt;
    opt.exo_range = 3;
    opt.max_endo = 1;
    opt.max_models = 4;
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        auto ex = th::generate_env(rng, opt);
        // Observation generated by a random domain model, so it is explicable.
        auto dom = ex.belief.domain();
        int model = dom[static_cast<std::size_t>(th::rand_int(
            rng, 0, static_cast<int>(dom.size()) - 1))];
        const Context& u =
            ex.env.pi.support[rng() % ex.env.pi.support.size()].first;
        const Action& act = ex.env.actions[rng() % ex.env.actions.size()];
        Observation o = predicted_observation(
            ex.belief.space->models[static_cast<std::size_t>(model)], u, act);

        LexBelief updated = update(ex.belief, o, ex.env.pi);
        auto new_dom = updated.domain();

        // Enumerate all nonempty F subseteq new domain.
        int n = static_cast<int>(new_dom.size());
        for (std::uint64_t bits = 1; bits < (1ull << n); ++bits) {
            std::vector<int> f;
            for (int i = 0; i < n; ++i)
                if (bits & (1ull << i)) f.push_back(new_dom[static_cast<std::size_t>(i)]);
            Distribution lhs = condition(updated, f);
            Distribution prior = condition(ex.belief, f);
            Distribution rhs;
            Rational total(0);
            for (const auto& [idx, w] : prior) {
                Rational l = likelihood(ex.belief.space->models[static_cast<std::size_t>(idx)],
                                        o, ex.env.pi);
                if (w * l > 0) {
                    rhs.emplace_back(idx, w * l);
                    total += w * l;
                }
            }
            for (auto& [idx, w] : rhs) w /= total;
            REQUIRE(lhs == rhs);
            ++checked;
        }
    }
    REQUIRE(checked >= 60);  // at least one event per generated case
}

TEST_CASE("single-level updates match the brute-force Bayes posterior") {
    std::mt19937_64 rng(99);
    th::GenOptions opt;
    opt.exo_range = 4;
    opt.max_endo = 1;
    for (int trial = 0; trial < 60; ++trial) {
        auto ex = th::generate_env(rng, opt);
        auto dom = ex.belief.domain();
        auto weights = th::rand_weights(rng, static_cast<int>(dom.size()));
        Distribution level;
        for (std::size_t i = 0; i < dom.size(); ++i) level.emplace_back(dom[i], weights[i]);
        LexBelief single = make_lex_belief(ex.belief.space, {level});
        int model = dom[rng() % dom.size()];
        const Context& u = ex.env.pi.support[rng() % ex.env.pi.support.size()].first;
        const Action& act = ex.env.actions[rng() % ex.env.actions.size()];
        Observation o = predicted_observation(
            single.space->models[static_cast<std::size_t>(model)], u, act);
        LexBelief updated = update(single, o, ex.env.pi);
        REQUIRE(updated.levels.size() == 1);
        REQUIRE(updated.mu_bar() == th::bayes_oracle(single, o, ex.env.pi));
    }
}

TEST_CASE("vacuous update leaves the belief identical") {
    std::mt19937_64 rng(5);
    th::GenOptions opt;
    opt.exo_range = 2;
    for (int trial = 0; trial < 20; ++trial) {
        auto ex = th::generate_env(rng, opt);
        Observation o{ex.env.actions[0].intervention, {}};
        REQUIRE(update(ex.belief, o, ex.env.pi) == ex.belief);
    }
}

TEST_CASE("likelihoods over a full observed partition sum to 1") {
    auto seesaw = th::seesaw_example();
    const Signature& sig = seesaw.env.sig();
    for (const auto& m : seesaw.env.space->models) {
        for (const std::string& xv : {"r", "l"}) {
            Rational total(0);
            for (const std::string& uv : {"0", "1"})
                total += likelihood(m, seesaw_obs(seesaw, xv, uv), seesaw.env.pi);
            REQUIRE(total == 1);
        }
    }
    // Also with a multi-variable observed set on the cobra example.
    auto cobra = th::cobra_example();
    const Signature& csig = cobra.env.sig();
    for (const auto& m : cobra.env.space->models) {
        Rational total(0);
        for (int s = 0; s < 3; ++s)
            for (int h = 0; h < 2; ++h)
                total += likelihood(
                    m,
                    make_observation(csig, make_intervention_by_name(csig, {{"bounty", "1"}}),
                                     make_partial_by_name(
                                         csig, {{"snake", std::to_string(s)},
                                                {"hunt", std::to_string(h)}})),
                    cobra.env.pi);
        REQUIRE(total == 1);
    }
}

TEST_CASE("belief construction rejects malformed hierarchies") {
    auto space = dummy_space(3);
    REQUIRE_THROWS_AS(make_lex_belief(space, {}), ValidationError);
    REQUIRE_THROWS_AS(make_lex_belief(space, {{{0, Rational(1, 2)}}}), ValidationError);
    REQUIRE_THROWS_AS(
        make_lex_belief(space, {{{0, Rational(1)}}, {{0, Rational(1)}}}), ValidationError);
    REQUIRE_THROWS_AS(make_lex_belief(space, {{{0, Rational(1)}, {1, Rational(0)}}}),
                      ValidationError);
    REQUIRE_THROWS_AS(make_lex_belief(space, {{{5, Rational(1)}}}), ValidationError);
}
