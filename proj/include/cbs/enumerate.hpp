#pragma once
// Exhaustive enumeration of small model spaces, for brute-force testing and
// the `enumerate` CLI command.

#include <vector>

#include "cbs/errors.hpp"
#include "cbs/sem.hpp"

namespace cbs {

namespace detail {

// All canonical equations for `target` with at most `parent_bound` parents,
// deduplicated (tables that ignore a declared parent reduce to a smaller
// parent set). Deterministic order: parent sets by size then lexicographic,
// tables in odometer order.
inline std::vector<EquationTable> enumerate_equations(const Signature& sig, int target,
                                                      int parent_bound, std::size_t cap) {
    std::vector<int> others;
    for (int v = 0; v < sig.var_count(); ++v)
        if (v != target) others.push_back(v);

    std::vector<std::vector<int>> parent_sets;
    std::vector<int> combo;
    auto recurse = [&](auto&& self, std::size_t from, int remaining) -> void {
        parent_sets.push_back(combo);
        if (remaining == 0) return;
        for (std::size_t i = from; i < others.size(); ++i) {
            combo.push_back(others[i]);
            self(self, i + 1, remaining - 1);
            combo.pop_back();
        }
    };
    recurse(recurse, 0, parent_bound);
    std::stable_sort(parent_sets.begin(), parent_sets.end(),
                     [](const auto& a, const auto& b) { return a.size() < b.size(); });

    const int out_range = sig.range_of(target).size();
    std::vector<EquationTable> out;
    for (const auto& parents : parent_sets) {
        std::size_t cells = table_size(sig, parents);
        if (out_range == 1 && !parents.empty()) continue;  // reduces to the constant
        if (cells > 4096)
            throw EnumerationTooLarge("equation table for '" + sig.name_of(target) +
                                      "' would have " + std::to_string(cells) + " cells");
        std::vector<Value> table(cells, 0);
        while (true) {
            EquationTable eq = make_equation(sig, target, parents, table);
            // Keep only tables that genuinely use every declared parent; the
            // reduced form was or will be produced by a smaller parent set.
            if (eq.parents.size() == parents.size()) {
                out.push_back(std::move(eq));
                if (out.size() > cap)
                    throw EnumerationTooLarge("more than " + std::to_string(cap) +
                                              " candidate equations for '" + sig.name_of(target) +
                                              "'");
            }
            int i = static_cast<int>(cells) - 1;
            for (; i >= 0; --i) {
                if (++table[static_cast<std::size_t>(i)] < out_range) break;
                table[static_cast<std::size_t>(i)] = 0;
            }
            if (i < 0) break;
        }
    }
    return out;
}

}  // namespace detail

// All acyclic models over `sig` whose equations use at most `parent_bound`
// parents, deduplicated up to table equality, in deterministic order.
inline std::vector<CausalModel> enumerate_models(SignaturePtr sig, int parent_bound,
                                                 std::size_t cap = 100000) {
    const Signature& s = *sig;
    std::vector<std::vector<EquationTable>> candidates;
    std::size_t combos = 1;
    for (int pos = 0; pos < s.endo_count(); ++pos) {
        candidates.push_back(detail::enumerate_equations(s, s.endo_var(pos), parent_bound, cap));
        if (combos > cap / std::max<std::size_t>(candidates.back().size(), 1))
            throw EnumerationTooLarge("model count exceeds cap of " + std::to_string(cap));
        combos *= candidates.back().size();
    }
    if (combos > cap)
        throw EnumerationTooLarge("model count exceeds cap of " + std::to_string(cap));

    std::vector<CausalModel> out;
    if (s.endo_count() == 0) {
        CausalModel empty;
        empty.sig = sig;
        out.push_back(std::move(empty));
        return out;
    }
    std::vector<std::size_t> pick(static_cast<std::size_t>(s.endo_count()), 0);
    while (true) {
        std::vector<EquationTable> eqs;
        for (int pos = 0; pos < s.endo_count(); ++pos)
            eqs.push_back(candidates[static_cast<std::size_t>(pos)][pick[static_cast<std::size_t>(pos)]]);
        if (detail::analyze_dependencies(s, eqs).acyclic()) out.push_back(make_model(sig, eqs));
        int i = s.endo_count() - 1;
        for (; i >= 0; --i) {
            if (++pick[static_cast<std::size_t>(i)] < candidates[static_cast<std::size_t>(i)].size())
                break;
            pick[static_cast<std::size_t>(i)] = 0;
        }
        if (i < 0) break;
    }
    return out;
}

}  // namespace cbs
