#pragma once
// Finite acyclic structural causal models: signatures, lookup-table
// equations, evaluation, and interventions.
//
// Variables are addressed by a global index (exogenous first, then
// endogenous, in declaration order). Values are indices into the variable's
// ordered range; range entries are named, and utility-bearing variables
// attach an exact rational score to every name.

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cbs/errors.hpp"
#include "cbs/rational.hpp"

namespace cbs {

using Value = int;

struct VariableRange {
    std::vector<std::string> labels;
    std::vector<std::optional<Rational>> scores;  // parallel to labels

    int size() const { return static_cast<int>(labels.size()); }
    bool operator==(const VariableRange&) const = default;
};

struct Signature {
    std::vector<std::string> exogenous;
    std::vector<std::string> endogenous;
    std::vector<VariableRange> ranges;  // by global index: exogenous then endogenous

    int exo_count() const { return static_cast<int>(exogenous.size()); }
    int endo_count() const { return static_cast<int>(endogenous.size()); }
    int var_count() const { return exo_count() + endo_count(); }

    bool is_endogenous(int var) const { return var >= exo_count(); }
    int endo_position(int var) const { return var - exo_count(); }
    int endo_var(int position) const { return exo_count() + position; }

    const std::string& name_of(int var) const {
        return var < exo_count() ? exogenous[var] : endogenous[var - exo_count()];
    }
    const VariableRange& range_of(int var) const { return ranges[var]; }

    int index_of(const std::string& name) const {
        for (int i = 0; i < exo_count(); ++i)
            if (exogenous[i] == name) return i;
        for (int i = 0; i < endo_count(); ++i)
            if (endogenous[i] == name) return exo_count() + i;
        return -1;
    }
    int require(const std::string& name) const {
        int i = index_of(name);
        if (i < 0) throw ValidationError("unknown variable '" + name + "'");
        return i;
    }
    Value value_index(int var, const std::string& label) const {
        const auto& r = ranges[var];
        for (int i = 0; i < r.size(); ++i)
            if (r.labels[i] == label) return i;
        throw ValidationError("value '" + label + "' not in range of '" + name_of(var) + "'");
    }
    const Rational& score_of(int var, Value v) const {
        const auto& s = ranges[var].scores[v];
        if (!s)
            throw ValidationError("value '" + ranges[var].labels[v] + "' of '" + name_of(var) +
                                  "' has no score");
        return *s;
    }

    bool operator==(const Signature&) const = default;
};

using SignaturePtr = std::shared_ptr<const Signature>;

inline SignaturePtr make_signature(std::vector<std::pair<std::string, VariableRange>> exo,
                                   std::vector<std::pair<std::string, VariableRange>> endo) {
    auto sig = std::make_shared<Signature>();
    std::vector<std::string> seen;
    auto add = [&](std::vector<std::string>& names, std::pair<std::string, VariableRange>& v) {
        if (v.first.empty()) throw ValidationError("empty variable name");
        if (std::find(seen.begin(), seen.end(), v.first) != seen.end())
            throw ValidationError("duplicate variable '" + v.first + "'");
        if (v.second.labels.empty())
            throw ValidationError("variable '" + v.first + "' has empty range");
        if (v.second.scores.size() != v.second.labels.size())
            throw ValidationError("range/score length mismatch for '" + v.first + "'");
        for (std::size_t i = 0; i < v.second.labels.size(); ++i)
            for (std::size_t j = i + 1; j < v.second.labels.size(); ++j)
                if (v.second.labels[i] == v.second.labels[j])
                    throw ValidationError("duplicate range value '" + v.second.labels[i] +
                                          "' for '" + v.first + "'");
        seen.push_back(v.first);
        names.push_back(v.first);
        sig->ranges.push_back(std::move(v.second));
    };
    for (auto& v : exo) add(sig->exogenous, v);
    for (auto& v : endo) add(sig->endogenous, v);
    return sig;
}

// Unscored range from a list of labels.
inline VariableRange plain_range(std::vector<std::string> labels) {
    VariableRange r;
    r.scores.assign(labels.size(), std::nullopt);
    r.labels = std::move(labels);
    return r;
}

// Range whose labels are integer literals that double as scores.
inline VariableRange scored_range(std::vector<std::string> labels) {
    VariableRange r;
    for (auto& l : labels) r.scores.push_back(parse_rational(l));
    r.labels = std::move(labels);
    return r;
}

// Total assignment to the exogenous variables, in signature order.
using Context = std::vector<Value>;
// Total assignment to all variables, in global index order.
using FullState = std::vector<Value>;

// Sorted, duplicate-free (variable, value) pairs.
struct PartialAssignment {
    std::vector<std::pair<int, Value>> entries;

    bool operator==(const PartialAssignment&) const = default;
    auto operator<=>(const PartialAssignment&) const = default;
    bool empty() const { return entries.empty(); }
    std::optional<Value> value_of(int var) const {
        for (const auto& [v, val] : entries)
            if (v == var) return val;
        return std::nullopt;
    }
};

struct Intervention {
    std::vector<std::pair<int, Value>> assignments;  // endogenous vars only

    bool operator==(const Intervention&) const = default;
    auto operator<=>(const Intervention&) const = default;
    bool empty() const { return assignments.empty(); }
    std::optional<Value> value_of(int var) const {
        for (const auto& [v, val] : assignments)
            if (v == var) return val;
        return std::nullopt;
    }
};

namespace detail {
inline void check_sorted_assignment(const Signature& sig,
                                    std::vector<std::pair<int, Value>>& entries,
                                    bool endogenous_only) {
    std::sort(entries.begin(), entries.end());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto [var, val] = entries[i];
        if (var < 0 || var >= sig.var_count()) throw ValidationError("unknown variable index");
        if (i > 0 && entries[i - 1].first == var)
            throw ValidationError("variable '" + sig.name_of(var) + "' assigned twice");
        if (endogenous_only && !sig.is_endogenous(var))
            throw ValidationError("cannot intervene on exogenous variable '" + sig.name_of(var) +
                                  "'");
        if (val < 0 || val >= sig.range_of(var).size())
            throw ValidationError("value out of range for '" + sig.name_of(var) + "'");
    }
}
}  // namespace detail

inline PartialAssignment make_partial(const Signature& sig,
                                      std::vector<std::pair<int, Value>> entries) {
    detail::check_sorted_assignment(sig, entries, false);
    return PartialAssignment{std::move(entries)};
}

inline PartialAssignment make_partial_by_name(
    const Signature& sig, const std::vector<std::pair<std::string, std::string>>& named) {
    std::vector<std::pair<int, Value>> entries;
    for (const auto& [var, label] : named) {
        int v = sig.require(var);
        entries.emplace_back(v, sig.value_index(v, label));
    }
    return make_partial(sig, std::move(entries));
}

inline Intervention make_intervention(const Signature& sig,
                                      std::vector<std::pair<int, Value>> assignments) {
    detail::check_sorted_assignment(sig, assignments, true);
    return Intervention{std::move(assignments)};
}

inline Intervention make_intervention_by_name(
    const Signature& sig, const std::vector<std::pair<std::string, std::string>>& named) {
    std::vector<std::pair<int, Value>> entries;
    for (const auto& [var, label] : named) {
        int v = sig.require(var);
        entries.emplace_back(v, sig.value_index(v, label));
    }
    return make_intervention(sig, std::move(entries));
}

// One structural equation, stored as a dense table over the declared parent
// list. Canonical form: parents sorted by global index and restricted to the
// ones the table actually depends on, so table equality is semantic equality.
struct EquationTable {
    int target = -1;                 // global index (endogenous)
    std::vector<int> parents;        // global indices
    std::vector<Value> table;        // dense, row-major, first parent most significant

    bool operator==(const EquationTable&) const = default;
    auto operator<=>(const EquationTable&) const = default;
};

namespace detail {

inline std::size_t table_size(const Signature& sig, const std::vector<int>& parents) {
    std::size_t n = 1;
    for (int p : parents) n *= static_cast<std::size_t>(sig.range_of(p).size());
    return n;
}

inline std::size_t tuple_to_index(const Signature& sig, const std::vector<int>& parents,
                                  const std::vector<Value>& tuple) {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < parents.size(); ++i)
        idx = idx * static_cast<std::size_t>(sig.range_of(parents[i]).size()) +
              static_cast<std::size_t>(tuple[i]);
    return idx;
}

inline bool next_tuple(const Signature& sig, const std::vector<int>& parents,
                       std::vector<Value>& tuple) {
    for (int i = static_cast<int>(parents.size()) - 1; i >= 0; --i) {
        if (++tuple[i] < sig.range_of(parents[i]).size()) return true;
        tuple[i] = 0;
    }
    return false;
}

// True iff the table output changes with parent position `pos`.
inline bool depends_on_position(const Signature& sig, const EquationTable& eq, std::size_t pos) {
    std::vector<Value> tuple(eq.parents.size(), 0);
    do {
        if (tuple[pos] != 0) continue;
        std::vector<Value> probe = tuple;
        Value base = eq.table[tuple_to_index(sig, eq.parents, tuple)];
        for (int v = 1; v < sig.range_of(eq.parents[pos]).size(); ++v) {
            probe[pos] = v;
            if (eq.table[tuple_to_index(sig, eq.parents, probe)] != base) return true;
        }
    } while (next_tuple(sig, eq.parents, tuple));
    return false;
}

}  // namespace detail

// Validates an equation and reduces it to canonical form.
inline EquationTable make_equation(const Signature& sig, int target, std::vector<int> parents,
                                   std::vector<Value> table) {
    if (target < 0 || !sig.is_endogenous(target))
        throw ValidationError("equation target must be endogenous");
    for (std::size_t i = 0; i < parents.size(); ++i) {
        int p = parents[i];
        if (p < 0 || p >= sig.var_count())
            throw ValidationError("unknown parent index in equation for '" + sig.name_of(target) +
                                  "'");
        if (p == target)
            throw ValidationError("variable '" + sig.name_of(target) + "' cannot be its own parent");
        for (std::size_t j = i + 1; j < parents.size(); ++j)
            if (parents[j] == p)
                throw ValidationError("duplicate parent '" + sig.name_of(p) + "' in equation for '" +
                                      sig.name_of(target) + "'");
    }
    if (table.size() != detail::table_size(sig, parents))
        throw ValidationError("equation table for '" + sig.name_of(target) +
                              "' is not total over its parent ranges");
    for (Value v : table)
        if (v < 0 || v >= sig.range_of(target).size())
            throw ValidationError("equation table for '" + sig.name_of(target) +
                                  "' outputs a value outside the target range");

    EquationTable eq{target, std::move(parents), std::move(table)};

    // Drop parents the output never depends on.
    for (std::size_t pos = 0; pos < eq.parents.size();) {
        if (detail::depends_on_position(sig, eq, pos)) {
            ++pos;
            continue;
        }
        std::vector<int> np(eq.parents);
        np.erase(np.begin() + static_cast<std::ptrdiff_t>(pos));
        std::vector<Value> nt(detail::table_size(sig, np));
        std::vector<Value> tuple(np.size(), 0);
        if (np.empty()) {
            nt[0] = eq.table[0];
        } else {
            do {
                std::vector<Value> full(tuple);
                full.insert(full.begin() + static_cast<std::ptrdiff_t>(pos), 0);
                nt[detail::tuple_to_index(sig, np, tuple)] =
                    eq.table[detail::tuple_to_index(sig, eq.parents, full)];
            } while (detail::next_tuple(sig, np, tuple));
        }
        eq.parents = std::move(np);
        eq.table = std::move(nt);
    }

    // Sort surviving parents by global index, permuting the table to match.
    std::vector<std::size_t> perm(eq.parents.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::sort(perm.begin(), perm.end(),
              [&](std::size_t a, std::size_t b) { return eq.parents[a] < eq.parents[b]; });
    bool sorted = true;
    for (std::size_t i = 0; i < perm.size(); ++i) sorted = sorted && perm[i] == i;
    if (!sorted) {
        std::vector<int> np(eq.parents.size());
        for (std::size_t i = 0; i < perm.size(); ++i) np[i] = eq.parents[perm[i]];
        std::vector<Value> nt(eq.table.size());
        std::vector<Value> tuple(np.size(), 0);
        do {
            std::vector<Value> old(tuple.size());
            for (std::size_t i = 0; i < perm.size(); ++i) old[perm[i]] = tuple[i];
            nt[detail::tuple_to_index(sig, np, tuple)] =
                eq.table[detail::tuple_to_index(sig, eq.parents, old)];
        } while (detail::next_tuple(sig, np, tuple));
        eq.parents = std::move(np);
        eq.table = std::move(nt);
    }
    return eq;
}

inline EquationTable constant_equation(const Signature& sig, int target, Value v) {
    return make_equation(sig, target, {}, {v});
}

struct CausalModel {
    SignaturePtr sig;
    std::vector<EquationTable> equations;  // one per endogenous variable, in position order
    std::vector<int> eval_order;           // endogenous positions, topologically sorted (derived)

    bool operator==(const CausalModel& o) const { return equations == o.equations; }
    bool operator<(const CausalModel& o) const { return equations < o.equations; }
};

// Dependency structure of a model: edges (parent -> target, global indices),
// a topological order of endogenous variables when acyclic, or a cycle
// witness otherwise.
struct GraphAnalysis {
    std::vector<std::pair<int, int>> edges;
    std::vector<int> order;  // global indices of endogenous variables
    std::vector<int> cycle;  // nonempty iff cyclic

    bool acyclic() const { return cycle.empty(); }
};

namespace detail {

inline GraphAnalysis analyze_dependencies(const Signature& sig,
                                          const std::vector<EquationTable>& equations) {
    GraphAnalysis g;
    int n = sig.endo_count();
    std::vector<std::vector<int>> children(n);  // endo position -> endo positions
    std::vector<int> indegree(n, 0);
    for (const auto& eq : equations) {
        for (int p : eq.parents) {
            g.edges.emplace_back(p, eq.target);
            if (sig.is_endogenous(p)) {
                children[sig.endo_position(p)].push_back(sig.endo_position(eq.target));
                ++indegree[sig.endo_position(eq.target)];
            }
        }
    }
    std::vector<int> queue;
    for (int i = 0; i < n; ++i)
        if (indegree[i] == 0) queue.push_back(i);
    std::vector<int> order;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        int u = queue[head];
        order.push_back(u);
        for (int c : children[u])
            if (--indegree[c] == 0) queue.push_back(c);
    }
    if (static_cast<int>(order.size()) == n) {
        for (int pos : order) g.order.push_back(sig.endo_var(pos));
        return g;
    }
    // Walk parent links among the unresolved variables until one repeats.
    std::vector<bool> resolved(n, false);
    for (int pos : order) resolved[pos] = true;
    int start = 0;
    while (resolved[start]) ++start;
    std::vector<int> path;
    std::vector<int> mark(n, -1);
    int cur = start;
    while (mark[cur] < 0) {
        mark[cur] = static_cast<int>(path.size());
        path.push_back(cur);
        const auto& eq = equations[static_cast<std::size_t>(cur)];
        int next = -1;
        for (int p : eq.parents)
            if (sig.is_endogenous(p) && !resolved[sig.endo_position(p)]) {
                next = sig.endo_position(p);
                break;
            }
        cur = next;
    }
    for (std::size_t i = static_cast<std::size_t>(mark[cur]); i < path.size(); ++i)
        g.cycle.push_back(sig.endo_var(path[i]));
    return g;
}

}  // namespace detail

inline GraphAnalysis check_acyclic(const CausalModel& model) {
    return detail::analyze_dependencies(*model.sig, model.equations);
}

// Builds a model from one equation per endogenous variable (any order),
// canonicalizing each equation and rejecting cyclic dependency graphs.
inline CausalModel make_model(SignaturePtr sig, std::vector<EquationTable> raw) {
    if (static_cast<int>(raw.size()) != sig->endo_count())
        throw ValidationError("model must define exactly one equation per endogenous variable");
    std::vector<EquationTable> eqs(raw.size());
    std::vector<bool> defined(raw.size(), false);
    for (auto& eq : raw) {
        EquationTable canon = make_equation(*sig, eq.target, eq.parents, eq.table);
        int pos = sig->endo_position(canon.target);
        if (defined[pos])
            throw ValidationError("two equations for variable '" + sig->name_of(canon.target) +
                                  "'");
        defined[pos] = true;
        eqs[pos] = std::move(canon);
    }
    GraphAnalysis g = detail::analyze_dependencies(*sig, eqs);
    if (!g.acyclic()) {
        std::vector<std::string> names;
        std::string msg = "cyclic dependencies:";
        for (int v : g.cycle) {
            names.push_back(sig->name_of(v));
            msg += " " + sig->name_of(v);
        }
        throw CycleError(msg, std::move(names));
    }
    CausalModel m;
    m.sig = std::move(sig);
    m.equations = std::move(eqs);
    for (int v : g.order) m.eval_order.push_back(m.sig->endo_position(v));
    return m;
}

// The unique simultaneous solution of all equations under `context`.
inline FullState evaluate(const CausalModel& model, const Context& context) {
    const Signature& sig = *model.sig;
    if (static_cast<int>(context.size()) != sig.exo_count())
        throw ValidationError("context must assign every exogenous variable");
    FullState state(static_cast<std::size_t>(sig.var_count()), -1);
    for (int i = 0; i < sig.exo_count(); ++i) {
        if (context[i] < 0 || context[i] >= sig.range_of(i).size())
            throw ValidationError("context value out of range for '" + sig.name_of(i) + "'");
        state[i] = context[i];
    }
    for (int pos : model.eval_order) {
        const EquationTable& eq = model.equations[static_cast<std::size_t>(pos)];
        std::size_t idx = 0;
        for (int p : eq.parents)
            idx = idx * static_cast<std::size_t>(sig.range_of(p).size()) +
                  static_cast<std::size_t>(state[p]);
        state[sig.endo_var(pos)] = eq.table[idx];
    }
    return state;
}

// The counterfactual model: each intervened variable's equation becomes the
// constant function picked by the intervention.
inline CausalModel intervene(const CausalModel& model, const Intervention& iv) {
    const Signature& sig = *model.sig;
    for (auto [var, val] : iv.assignments) {
        if (var < 0 || var >= sig.var_count() || !sig.is_endogenous(var))
            throw ValidationError("intervention targets a non-endogenous variable");
        if (val < 0 || val >= sig.range_of(var).size())
            throw ValidationError("intervention value out of range for '" + sig.name_of(var) +
                                  "'");
    }
    if (iv.empty()) return model;
    std::vector<EquationTable> eqs = model.equations;
    for (auto [var, val] : iv.assignments)
        eqs[static_cast<std::size_t>(sig.endo_position(var))] = EquationTable{var, {}, {val}};
    return make_model(model.sig, std::move(eqs));
}

inline bool agrees(const FullState& state, const PartialAssignment& partial) {
    for (auto [var, val] : partial.entries)
        if (state[static_cast<std::size_t>(var)] != val) return false;
    return true;
}

// (M, u) |= partial
inline bool satisfies(const CausalModel& model, const Context& context,
                      const PartialAssignment& partial) {
    return agrees(evaluate(model, context), partial);
}

// All contexts in mixed-radix order over the exogenous ranges.
inline std::vector<Context> all_contexts(const Signature& sig) {
    std::vector<Context> out;
    Context c(static_cast<std::size_t>(sig.exo_count()), 0);
    while (true) {
        out.push_back(c);
        int i = sig.exo_count() - 1;
        for (; i >= 0; --i) {
            if (++c[static_cast<std::size_t>(i)] < sig.range_of(i).size()) break;
            c[static_cast<std::size_t>(i)] = 0;
        }
        if (i < 0) break;
    }
    return out;
}

}  // namespace cbs
