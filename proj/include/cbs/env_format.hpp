#pragma once
// The .env.json environment format (schema version "1"): declarative
// signatures, models, context distributions, actions, beliefs and optional
// introspective parameters. Equations may be written as dense tables or as
// expressions over parent values; expressions are compiled to tables at load
// time and the table is the single source of truth afterward.
//
// All probabilities and scores are exact rational strings ("p/q" or an
// integer literal); floating-point values are rejected.

#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cbs/belief.hpp"
#include "cbs/decision.hpp"
#include "cbs/dynamics.hpp"
#include "cbs/errors.hpp"
#include "cbs/rational.hpp"
#include "cbs/sem.hpp"

namespace cbs {

// ---------------------------------------------------------------------------
// Expression compiler
//
// Grammar (loosest to tightest): ?:  ||  &&  comparisons  + -  * /  unary - !
// Operands: integer literals, parent variables, 'quoted' range values.
// Range values that parse as rationals are numeric in expressions; all other
// values are symbolic and admit only == and != against quoted literals.

namespace expr {

struct ExprValue {
    enum Kind { Num, Sym, Bool } kind = Num;
    Rational num;
    std::string sym;
    bool truth = false;
};

struct Node {
    enum Type { Literal, Variable, Unary, Binary, Ternary } type = Literal;
    ExprValue literal;
    std::string var;
    std::string op;
    std::unique_ptr<Node> a, b, c;
};

namespace detail {

struct Token {
    enum Type { Ident, Number, Str, Op, End } type = End;
    std::string text;
};

inline std::vector<Token> tokenize(const std::string& src) {
    std::vector<Token> out;
    std::size_t i = 0;
    auto two = [&](char a, char b) {
        return i + 1 < src.size() && src[i] == a && src[i + 1] == b;
    };
    while (i < src.size()) {
        char c = src[i];
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            ++i;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
            out.push_back({Token::Number, src.substr(i, j - i)});
            i = j;
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < src.size() &&
                   (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_'))
                ++j;
            out.push_back({Token::Ident, src.substr(i, j - i)});
            i = j;
            continue;
        }
        if (c == '\'') {
            std::size_t j = src.find('\'', i + 1);
            if (j == std::string::npos) throw ParseError("unterminated quote in expression");
            out.push_back({Token::Str, src.substr(i + 1, j - i - 1)});
            i = j + 1;
            continue;
        }
        if (two('<', '=') || two('>', '=') || two('=', '=') || two('!', '=') || two('&', '&') ||
            two('|', '|')) {
            out.push_back({Token::Op, src.substr(i, 2)});
            i += 2;
            continue;
        }
        if (std::string("+-*/()<>!?:").find(c) != std::string::npos) {
            out.push_back({Token::Op, std::string(1, c)});
            ++i;
            continue;
        }
        throw ParseError(std::string("unexpected character '") + c + "' in expression");
    }
    out.push_back({Token::End, ""});
    return out;
}

struct Parser {
    const std::vector<Token>& toks;
    std::size_t pos = 0;

    const Token& peek() const { return toks[pos]; }
    bool eat(const std::string& op) {
        if (toks[pos].type == Token::Op && toks[pos].text == op) {
            ++pos;
            return true;
        }
        return false;
    }
    void expect(const std::string& op) {
        if (!eat(op)) throw ParseError("expected '" + op + "' in expression");
    }

    std::unique_ptr<Node> parse() {
        auto n = ternary();
        if (peek().type != Token::End) throw ParseError("trailing input in expression");
        return n;
    }
    std::unique_ptr<Node> ternary() {
        auto cond = logical_or();
        if (!eat("?")) return cond;
        auto node = std::make_unique<Node>();
        node->type = Node::Ternary;
        node->a = std::move(cond);
        node->b = ternary();
        expect(":");
        node->c = ternary();
        return node;
    }
    std::unique_ptr<Node> logical_or() {
        auto n = logical_and();
        while (eat("||")) n = binary("||", std::move(n), logical_and());
        return n;
    }
    std::unique_ptr<Node> logical_and() {
        auto n = comparison();
        while (eat("&&")) n = binary("&&", std::move(n), comparison());
        return n;
    }
    std::unique_ptr<Node> comparison() {
        auto n = additive();
        for (const char* op : {"<=", ">=", "==", "!=", "<", ">"}) {
            if (eat(op)) return binary(op, std::move(n), additive());
        }
        return n;
    }
    std::unique_ptr<Node> additive() {
        auto n = multiplicative();
        while (true) {
            if (eat("+")) n = binary("+", std::move(n), multiplicative());
            else if (eat("-")) n = binary("-", std::move(n), multiplicative());
            else return n;
        }
    }
    std::unique_ptr<Node> multiplicative() {
        auto n = unary();
        while (true) {
            if (eat("*")) n = binary("*", std::move(n), unary());
            else if (eat("/")) n = binary("/", std::move(n), unary());
            else return n;
        }
    }
    std::unique_ptr<Node> unary() {
        if (eat("-")) {
            auto node = std::make_unique<Node>();
            node->type = Node::Unary;
            node->op = "-";
            node->a = unary();
            return node;
        }
        if (eat("!")) {
            auto node = std::make_unique<Node>();
            node->type = Node::Unary;
            node->op = "!";
            node->a = unary();
            return node;
        }
        return primary();
    }
    std::unique_ptr<Node> primary() {
        auto node = std::make_unique<Node>();
        const Token& t = peek();
        if (t.type == Token::Number) {
            node->type = Node::Literal;
            node->literal.kind = ExprValue::Num;
            node->literal.num = parse_rational(t.text);
            ++pos;
            return node;
        }
        if (t.type == Token::Str) {
            node->type = Node::Literal;
            node->literal.kind = ExprValue::Sym;
            node->literal.sym = t.text;
            ++pos;
            return node;
        }
        if (t.type == Token::Ident) {
            node->type = Node::Variable;
            node->var = t.text;
            ++pos;
            return node;
        }
        if (eat("(")) {
            auto inner = ternary();
            expect(")");
            return inner;
        }
        throw ParseError("expected a value in expression");
    }
    std::unique_ptr<Node> binary(const std::string& op, std::unique_ptr<Node> a,
                                 std::unique_ptr<Node> b) {
        auto node = std::make_unique<Node>();
        node->type = Node::Binary;
        node->op = op;
        node->a = std::move(a);
        node->b = std::move(b);
        return node;
    }
};

inline void collect_variables(const Node& n, std::vector<std::string>& out) {
    if (n.type == Node::Variable) {
        if (std::find(out.begin(), out.end(), n.var) == out.end()) out.push_back(n.var);
    }
    if (n.a) collect_variables(*n.a, out);
    if (n.b) collect_variables(*n.b, out);
    if (n.c) collect_variables(*n.c, out);
}

inline ExprValue eval(const Node& n, const std::map<std::string, ExprValue>& vars) {
    switch (n.type) {
        case Node::Literal: return n.literal;
        case Node::Variable: {
            auto it = vars.find(n.var);
            if (it == vars.end())
                throw ValidationError("expression references '" + n.var +
                                      "', which is not a declared parent");
            return it->second;
        }
        case Node::Unary: {
            ExprValue v = eval(*n.a, vars);
            if (n.op == "-") {
                if (v.kind != ExprValue::Num) throw ValidationError("unary '-' needs a number");
                v.num = -v.num;
                return v;
            }
            if (v.kind != ExprValue::Bool) throw ValidationError("'!' needs a boolean");
            v.truth = !v.truth;
            return v;
        }
        case Node::Ternary: {
            ExprValue cond = eval(*n.a, vars);
            if (cond.kind != ExprValue::Bool)
                throw ValidationError("'?:' condition must be boolean");
            return eval(cond.truth ? *n.b : *n.c, vars);
        }
        case Node::Binary: break;
    }
    ExprValue a = eval(*n.a, vars);
    if (n.op == "&&" || n.op == "||") {
        if (a.kind != ExprValue::Bool) throw ValidationError("'" + n.op + "' needs booleans");
        // No short-circuit: operands are total over finite tuples anyway.
        ExprValue b = eval(*n.b, vars);
        if (b.kind != ExprValue::Bool) throw ValidationError("'" + n.op + "' needs booleans");
        a.truth = n.op == "&&" ? (a.truth && b.truth) : (a.truth || b.truth);
        return a;
    }
    ExprValue b = eval(*n.b, vars);
    if (n.op == "==" || n.op == "!=") {
        bool eq;
        if (a.kind == ExprValue::Num && b.kind == ExprValue::Num) eq = a.num == b.num;
        else if (a.kind == ExprValue::Sym && b.kind == ExprValue::Sym) eq = a.sym == b.sym;
        else if (a.kind == ExprValue::Bool && b.kind == ExprValue::Bool) eq = a.truth == b.truth;
        else throw ValidationError("'" + n.op + "' compares values of different kinds");
        ExprValue out;
        out.kind = ExprValue::Bool;
        out.truth = n.op == "==" ? eq : !eq;
        return out;
    }
    if (a.kind != ExprValue::Num || b.kind != ExprValue::Num)
        throw ValidationError("'" + n.op + "' needs numeric operands");
    ExprValue out;
    if (n.op == "<" || n.op == "<=" || n.op == ">" || n.op == ">=") {
        out.kind = ExprValue::Bool;
        if (n.op == "<") out.truth = a.num < b.num;
        else if (n.op == "<=") out.truth = a.num <= b.num;
        else if (n.op == ">") out.truth = a.num > b.num;
        else out.truth = a.num >= b.num;
        return out;
    }
    out.kind = ExprValue::Num;
    if (n.op == "+") out.num = a.num + b.num;
    else if (n.op == "-") out.num = a.num - b.num;
    else if (n.op == "*") out.num = a.num * b.num;
    else if (n.op == "/") {
        if (b.num == 0) throw ValidationError("division by zero in expression");
        out.num = a.num / b.num;
    } else {
        throw ParseError("unknown operator '" + n.op + "'");
    }
    return out;
}

}  // namespace detail

// A range value as seen by expressions: numeric if its label parses as a
// rational, symbolic otherwise.
inline ExprValue range_value(const std::string& label) {
    ExprValue v;
    try {
        v.num = parse_rational(label);
        v.kind = ExprValue::Num;
    } catch (const ParseError&) {
        v.kind = ExprValue::Sym;
        v.sym = label;
    }
    return v;
}

// Names referenced by an expression, in first-use order.
inline std::vector<std::string> referenced_variables(const std::string& text) {
    auto toks = detail::tokenize(text);
    detail::Parser p{toks};
    auto root = p.parse();
    std::vector<std::string> out;
    detail::collect_variables(*root, out);
    return out;
}

// Compiles an expression over the given parents into a dense table.
inline EquationTable compile_expression(const Signature& sig, int target,
                                        const std::vector<int>& parents,
                                        const std::string& text) {
    auto toks = detail::tokenize(text);
    detail::Parser parser{toks};
    auto root = parser.parse();

    const VariableRange& out_range = sig.range_of(target);
    std::vector<Value> table(cbs::detail::table_size(sig, parents));
    std::vector<Value> tuple(parents.size(), 0);
    while (true) {
        std::map<std::string, ExprValue> vars;
        for (std::size_t i = 0; i < parents.size(); ++i)
            vars[sig.name_of(parents[i])] =
                range_value(sig.range_of(parents[i]).labels[static_cast<std::size_t>(tuple[i])]);
        ExprValue result = detail::eval(*root, vars);
        std::string label;
        if (result.kind == ExprValue::Num) label = to_string(result.num);
        else if (result.kind == ExprValue::Sym) label = result.sym;
        else
            throw ValidationError("expression for '" + sig.name_of(target) +
                                  "' yields a boolean; use '?:' to pick a range value");
        int v = -1;
        for (int k = 0; k < out_range.size(); ++k)
            if (out_range.labels[static_cast<std::size_t>(k)] == label) v = k;
        if (v < 0)
            throw ValidationError("expression for '" + sig.name_of(target) + "' yields '" + label +
                                  "', which is not in its range");
        table[cbs::detail::tuple_to_index(sig, parents, tuple)] = v;
        if (!cbs::detail::next_tuple(sig, parents, tuple)) break;
    }
    return make_equation(sig, target, parents, std::move(table));
}

}  // namespace expr

// ---------------------------------------------------------------------------
// Loading

struct LoadResult {
    Environment env;
    LexBelief belief;
    std::optional<IntrospectiveParams> introspective;
    std::vector<std::string> warnings;
    std::string comment;
};

namespace detail {

using njson = nlohmann::json;

inline const njson& need(const njson& j, const char* key, const std::string& loc) {
    auto it = j.find(key);
    if (it == j.end()) throw ValidationError("missing field '" + std::string(key) + "'", loc);
    return *it;
}

inline std::string need_string(const njson& j, const char* key, const std::string& loc) {
    const njson& v = need(j, key, loc);
    if (!v.is_string())
        throw ValidationError("field '" + std::string(key) + "' must be a string", loc);
    return v.get<std::string>();
}

inline Rational need_rational(const njson& j, const char* key, const std::string& loc) {
    std::string s = need_string(j, key, loc);
    try {
        return parse_rational(s);
    } catch (const ParseError& e) {
        throw ValidationError(e.what(), loc + "." + key);
    }
}

inline VariableRange parse_range(const njson& j, bool scored, const std::string& loc) {
    VariableRange r;
    if (j.is_object() && j.contains("int_range")) {
        const njson& ir = j.at("int_range");
        if (!ir.is_array() || ir.size() != 2 || !ir[0].is_number_integer() ||
            !ir[1].is_number_integer())
            throw ValidationError("int_range must be [lo, hi]", loc);
        long lo = ir[0].get<long>(), hi = ir[1].get<long>();
        if (lo > hi) throw ValidationError("int_range is empty", loc);
        for (long v = lo; v <= hi; ++v) {
            r.labels.push_back(std::to_string(v));
            r.scores.push_back(scored ? std::optional<Rational>(Rational(v)) : std::nullopt);
        }
        return r;
    }
    if (!j.is_array() || j.empty())
        throw ValidationError("range must be a nonempty array or {\"int_range\": [lo, hi]}", loc);
    for (const njson& e : j) {
        if (e.is_string()) {
            r.labels.push_back(e.get<std::string>());
            r.scores.push_back(scored ? std::optional<Rational>(parse_rational(r.labels.back()))
                                      : std::nullopt);
        } else if (e.is_object()) {
            r.labels.push_back(need_string(e, "value", loc));
            r.scores.push_back(need_rational(e, "score", loc));
        } else {
            throw ValidationError("range entries must be strings or {value, score} objects", loc);
        }
    }
    return r;
}

inline SignaturePtr parse_signature(const njson& j, const std::string& loc) {
    if (!j.is_object()) throw ValidationError("signature must be an object", loc);
    auto parse_vars = [&](const char* key) {
        std::vector<std::pair<std::string, VariableRange>> out;
        auto it = j.find(key);
        if (it == j.end()) return out;
        if (!it->is_array())
            throw ValidationError("signature." + std::string(key) + " must be an array", loc);
        int i = 0;
        for (const njson& e : *it) {
            std::string eloc = loc + "." + key + "[" + std::to_string(i++) + "]";
            std::string name = need_string(e, "name", eloc);
            bool scored = e.value("scored", false);
            out.emplace_back(name, parse_range(need(e, "range", eloc), scored, eloc));
        }
        return out;
    };
    auto exo = parse_vars("exogenous");
    auto endo = parse_vars("endogenous");
    if (endo.empty()) throw ValidationError("signature declares no endogenous variables", loc);
    try {
        return make_signature(std::move(exo), std::move(endo));
    } catch (const ValidationError& e) {
        throw ValidationError(e.what(), loc);
    }
}

inline EquationTable parse_equation(const Signature& sig, const njson& j,
                                    const std::string& loc) {
    std::string target_name = need_string(j, "target", loc);
    int target = sig.index_of(target_name);
    if (target < 0 || !sig.is_endogenous(target))
        throw ValidationError("equation target '" + target_name + "' is not endogenous", loc);

    std::vector<int> parents;
    bool parents_given = j.contains("parents");
    if (parents_given) {
        const njson& pj = j.at("parents");
        if (!pj.is_array()) throw ValidationError("parents must be an array of names", loc);
        for (const njson& p : pj) {
            if (!p.is_string()) throw ValidationError("parents must be an array of names", loc);
            parents.push_back(sig.require(p.get<std::string>()));
        }
    }

    if (j.contains("expr")) {
        if (j.contains("rows"))
            throw ValidationError("equation declares both 'expr' and 'rows'", loc);
        std::string text = j.at("expr").is_string()
                               ? j.at("expr").get<std::string>()
                               : throw ValidationError("expr must be a string", loc);
        try {
            if (!parents_given)
                for (const std::string& name : expr::referenced_variables(text))
                    parents.push_back(sig.require(name));
            return expr::compile_expression(sig, target, parents, text);
        } catch (const CycleError&) {
            throw;
        } catch (const Error& e) {
            throw ValidationError(e.what(), loc);
        }
    }
    if (!j.contains("rows"))
        throw ValidationError("equation needs either 'expr' or 'rows'", loc);
    if (!parents_given) throw ValidationError("'rows' form requires an explicit parent list", loc);
    const njson& rows = j.at("rows");
    if (!rows.is_array()) throw ValidationError("rows must be an array", loc);

    std::size_t cells = table_size(sig, parents);
    std::vector<Value> table(cells, -1);
    int ri = 0;
    for (const njson& row : rows) {
        std::string rloc = loc + ".rows[" + std::to_string(ri++) + "]";
        const njson& when = need(row, "when", rloc);
        if (!when.is_object()) throw ValidationError("'when' must be an object", rloc);
        if (when.size() != parents.size())
            throw ValidationError("'when' must assign every declared parent", rloc);
        std::vector<Value> tuple(parents.size());
        for (std::size_t i = 0; i < parents.size(); ++i) {
            const std::string& pname = sig.name_of(parents[i]);
            if (!when.contains(pname))
                throw ValidationError("'when' is missing parent '" + pname + "'", rloc);
            tuple[i] = sig.value_index(parents[i], when.at(pname).get<std::string>());
        }
        std::size_t idx = tuple_to_index(sig, parents, tuple);
        if (table[idx] != -1) throw ValidationError("duplicate row", rloc);
        table[idx] = sig.value_index(target, need_string(row, "then", rloc));
    }
    for (std::size_t i = 0; i < cells; ++i)
        if (table[i] == -1)
            throw ValidationError("equation table for '" + target_name +
                                      "' is not total over its parent ranges",
                                  loc);
    try {
        return make_equation(sig, target, parents, std::move(table));
    } catch (const Error& e) {
        throw ValidationError(e.what(), loc);
    }
}

inline Context parse_context(const Signature& sig, const njson& j, const std::string& loc) {
    if (!j.is_object()) throw ValidationError("context must be an object", loc);
    Context ctx(static_cast<std::size_t>(sig.exo_count()), -1);
    for (auto it = j.begin(); it != j.end(); ++it) {
        int var = sig.index_of(it.key());
        if (var < 0 || sig.is_endogenous(var))
            throw ValidationError("context assigns non-exogenous '" + it.key() + "'", loc);
        ctx[static_cast<std::size_t>(var)] = sig.value_index(var, it->get<std::string>());
    }
    for (int i = 0; i < sig.exo_count(); ++i)
        if (ctx[static_cast<std::size_t>(i)] < 0)
            throw ValidationError("context does not assign '" + sig.name_of(i) + "'", loc);
    return ctx;
}

inline ContextDistribution parse_pi(const Signature& sig, const njson& j,
                                    const std::string& loc) {
    try {
        if (j.is_string()) {
            std::string s = j.get<std::string>();
            if (s == "uniform") return uniform_context_distribution(sig);
            if (s == "trivial") {
                if (sig.exo_count() != 0)
                    throw ValidationError(
                        "pi \"trivial\" needs a context when exogenous variables exist; use "
                        "{\"trivial\": {...}}",
                        loc);
                return trivial_context_distribution(sig, Context{});
            }
            throw ValidationError("pi must be \"uniform\", \"trivial\", {\"trivial\": ctx} or an "
                                  "array of {context, prob}",
                                  loc);
        }
        if (j.is_object() && j.contains("trivial"))
            return trivial_context_distribution(sig, parse_context(sig, j.at("trivial"), loc));
        if (!j.is_array()) throw ValidationError("pi has an unrecognized form", loc);
        std::vector<std::pair<Context, Rational>> entries;
        int i = 0;
        for (const njson& e : j) {
            std::string eloc = loc + "[" + std::to_string(i++) + "]";
            entries.emplace_back(parse_context(sig, need(e, "context", eloc), eloc),
                                 need_rational(e, "prob", eloc));
        }
        return make_context_distribution(sig, std::move(entries));
    } catch (const ValidationError& e) {
        if (e.location.empty()) throw ValidationError(e.what(), loc);
        throw;
    }
}

}  // namespace detail

namespace detail {
LoadResult parse_environment_doc(const njson& doc, const std::string& origin);
}

inline LoadResult parse_environment(const std::string& text, const std::string& origin) {
    detail::njson doc;
    try {
        doc = detail::njson::parse(text);
    } catch (const std::exception& e) {
        throw ParseError(origin + ": " + e.what());
    }
    if (!doc.is_object()) throw ParseError(origin + ": top level must be an object");
    try {
        return detail::parse_environment_doc(doc, origin);
    } catch (const detail::njson::exception& e) {
        throw ValidationError(e.what(), origin);
    }
}

inline LoadResult detail::parse_environment_doc(const detail::njson& doc,
                                                const std::string& origin) {
    std::string version = detail::need_string(doc, "format_version", origin);
    if (version != "1")
        throw VersionMismatch(origin + ": unsupported format_version '" + version + "'");

    LoadResult result;
    result.comment = doc.value("comment", "");

    SignaturePtr sig = detail::parse_signature(detail::need(doc, "signature", origin),
                                               origin + ": signature");

    // Models, in canonical name order.
    const detail::njson& mj = detail::need(doc, "models", origin);
    if (!mj.is_array() || mj.empty())
        throw ValidationError("models must be a nonempty array", origin);
    std::vector<std::pair<std::string, const detail::njson*>> named;
    int mi = 0;
    for (const detail::njson& m : mj) {
        std::string mloc = origin + ": models[" + std::to_string(mi++) + "]";
        named.emplace_back(detail::need_string(m, "name", mloc), &m);
    }
    std::sort(named.begin(), named.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<CausalModel> models;
    std::vector<std::string> names;
    for (const auto& [name, m] : named) {
        std::string mloc = origin + ": models." + name;
        const detail::njson& eqs = detail::need(*m, "equations", mloc);
        if (!eqs.is_array()) throw ValidationError("equations must be an array", mloc);
        std::vector<EquationTable> tables;
        int ei = 0;
        for (const detail::njson& e : eqs)
            tables.push_back(detail::parse_equation(
                *sig, e, mloc + ".equations[" + std::to_string(ei++) + "]"));
        try {
            models.push_back(make_model(sig, std::move(tables)));
        } catch (const CycleError& e) {
            throw CycleError(mloc + ": " + e.what(), e.witness);
        } catch (const Error& e) {
            throw ValidationError(e.what(), mloc);
        }
        names.push_back(name);
    }
    ModelSpacePtr space;
    try {
        space = make_model_space(sig, std::move(models), std::move(names));
    } catch (const Error& e) {
        throw ValidationError(e.what(), origin + ": models");
    }

    std::string true_name = detail::need_string(doc, "true_model", origin);
    int true_model = space->index_of(true_name);
    if (true_model < 0)
        throw ValidationError("true_model '" + true_name + "' is not a declared model", origin);

    ContextDistribution pi =
        detail::parse_pi(*sig, detail::need(doc, "pi", origin), origin + ": pi");

    std::string util_name = detail::need_string(doc, "util_var", origin);
    int util_var = sig->index_of(util_name);
    if (util_var < 0) throw ValidationError("unknown util_var '" + util_name + "'", origin);

    const detail::njson& aj = detail::need(doc, "actions", origin);
    if (!aj.is_array() || aj.empty())
        throw ValidationError("actions must be a nonempty array", origin);
    std::vector<Action> actions;
    int ai = 0;
    for (const detail::njson& a : aj) {
        std::string aloc = origin + ": actions[" + std::to_string(ai++) + "]";
        std::string name = detail::need_string(a, "name", aloc);
        std::vector<std::pair<std::string, std::string>> set;
        if (a.contains("set")) {
            if (!a.at("set").is_object()) throw ValidationError("'set' must be an object", aloc);
            for (auto it = a.at("set").begin(); it != a.at("set").end(); ++it)
                set.emplace_back(it.key(), it->get<std::string>());
        }
        std::vector<int> observe;
        if (a.contains("observe")) {
            if (!a.at("observe").is_array())
                throw ValidationError("'observe' must be an array of names", aloc);
            for (const detail::njson& o : a.at("observe")) {
                int var = sig->index_of(o.get<std::string>());
                if (var < 0)
                    throw ValidationError("action observes unknown variable '" +
                                              o.get<std::string>() + "'",
                                          aloc);
                observe.push_back(var);
            }
        }
        try {
            actions.push_back(
                make_action(*sig, name, make_intervention_by_name(*sig, set), std::move(observe)));
        } catch (const Error& e) {
            throw ValidationError(e.what(), aloc);
        }
        bool sees_util = std::find(actions.back().observe.begin(), actions.back().observe.end(),
                                   util_var) != actions.back().observe.end();
        if (!sees_util)
            result.warnings.push_back("action '" + name +
                                      "' does not observe the utility variable");
    }

    Rational delta = detail::need_rational(doc, "delta", origin);
    try {
        result.env = make_environment(space, true_model, std::move(pi), std::move(actions),
                                      util_var, std::move(delta));
    } catch (const Error& e) {
        throw ValidationError(e.what(), origin);
    }

    const detail::njson& bj = detail::need(doc, "belief", origin);
    const detail::njson& levels = detail::need(bj, "levels", origin + ": belief");
    if (!levels.is_array() || levels.empty())
        throw ValidationError("belief.levels must be a nonempty array", origin);
    std::vector<Distribution> parsed_levels;
    int li = 0;
    for (const detail::njson& level : levels) {
        std::string lloc = origin + ": belief.levels[" + std::to_string(li++) + "]";
        if (!level.is_array()) throw ValidationError("belief level must be an array", lloc);
        Distribution d;
        for (const detail::njson& entry : level) {
            std::string mname = detail::need_string(entry, "model", lloc);
            int idx = space->index_of(mname);
            if (idx < 0)
                throw ValidationError("belief references unknown model '" + mname + "'", lloc);
            d.emplace_back(idx, detail::need_rational(entry, "weight", lloc));
        }
        parsed_levels.push_back(std::move(d));
    }
    try {
        result.belief = make_lex_belief(space, std::move(parsed_levels));
    } catch (const Error& e) {
        throw ValidationError(e.what(), origin + ": belief");
    }

    if (doc.contains("introspective")) {
        const detail::njson& ij = doc.at("introspective");
        std::string iloc = origin + ": introspective";
        Rational v_star = detail::need_rational(ij, "v_star", iloc);
        const detail::njson& xij = detail::need(ij, "xi", iloc);
        if (!xij.is_object()) throw ValidationError("xi must map action names to rationals", iloc);
        XiVector xi;
        for (const Action& a : result.env.actions) {
            if (!xij.contains(a.name))
                throw ValidationError("xi is missing action '" + a.name + "'", iloc);
            xi.push_back(parse_rational(xij.at(a.name).get<std::string>()));
        }
        if (xij.size() != result.env.actions.size())
            throw ValidationError("xi mentions an unknown action", iloc);
        const detail::njson& tj = detail::need(ij, "tau", iloc);
        TauRule tau;
        tau.name = detail::need_string(tj, "rule", iloc + ".tau");
        if (tj.contains("params"))
            for (const detail::njson& p : tj.at("params"))
                tau.params.push_back(parse_rational(p.get<std::string>()));
        TauObsSource src = TauObsSource::BeliefModel;
        if (ij.contains("tau_observation")) {
            std::string s = ij.at("tau_observation").get<std::string>();
            if (s == "true-model") src = TauObsSource::TrueModel;
            else if (s != "belief-model")
                throw ValidationError("tau_observation must be 'belief-model' or 'true-model'",
                                      iloc);
        }
        try {
            result.introspective = make_introspective_params(result.env, std::move(v_star),
                                                             std::move(xi), std::move(tau), src);
        } catch (const Error& e) {
            throw ValidationError(e.what(), iloc);
        }
    }
    return result;
}

inline LoadResult load_environment(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_environment(buf.str(), path);
}

// A bare signature block (the schema's "signature" object).
inline SignaturePtr parse_signature_text(const std::string& text, const std::string& origin) {
    detail::njson doc;
    try {
        doc = detail::njson::parse(text);
    } catch (const std::exception& e) {
        throw ParseError(origin + ": " + e.what());
    }
    try {
        return detail::parse_signature(doc.contains("signature") ? doc.at("signature") : doc,
                                       origin);
    } catch (const detail::njson::exception& e) {
        throw ValidationError(e.what(), origin);
    }
}

// ---------------------------------------------------------------------------
// Canonical dump: models sorted by name, contexts in range order, explicit
// tables, explicit pi. load(dump(x)) == x.

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson range_to_json(const VariableRange& r) {
    ojson out = ojson::array();
    for (int v = 0; v < r.size(); ++v) {
        if (r.scores[static_cast<std::size_t>(v)]) {
            ojson e;
            e["value"] = r.labels[static_cast<std::size_t>(v)];
            e["score"] = to_string(*r.scores[static_cast<std::size_t>(v)]);
            out.push_back(std::move(e));
        } else {
            out.push_back(r.labels[static_cast<std::size_t>(v)]);
        }
    }
    return out;
}

inline ojson assignment_to_json(const Signature& sig,
                                const std::vector<std::pair<int, Value>>& entries) {
    ojson out = ojson::object();
    for (auto [var, val] : entries)
        out[sig.name_of(var)] = sig.range_of(var).labels[static_cast<std::size_t>(val)];
    return out;
}

inline ojson equation_to_json(const Signature& sig, const EquationTable& eq) {
    ojson out;
    out["target"] = sig.name_of(eq.target);
    ojson parents = ojson::array();
    for (int p : eq.parents) parents.push_back(sig.name_of(p));
    out["parents"] = std::move(parents);
    ojson rows = ojson::array();
    std::vector<Value> tuple(eq.parents.size(), 0);
    while (true) {
        ojson row;
        ojson when = ojson::object();
        for (std::size_t i = 0; i < eq.parents.size(); ++i)
            when[sig.name_of(eq.parents[i])] =
                sig.range_of(eq.parents[i]).labels[static_cast<std::size_t>(tuple[i])];
        row["when"] = std::move(when);
        row["then"] = sig.range_of(eq.target)
                          .labels[static_cast<std::size_t>(
                              eq.table[tuple_to_index(sig, eq.parents, tuple)])];
        rows.push_back(std::move(row));
        if (eq.parents.empty() || !next_tuple(sig, eq.parents, tuple)) break;
    }
    out["rows"] = std::move(rows);
    return out;
}

}  // namespace detail

inline std::string dump_environment(const Environment& env, const LexBelief& belief,
                                    const std::optional<IntrospectiveParams>& ip = std::nullopt,
                                    const std::string& comment = {}) {
    using detail::ojson;
    const Signature& sig = env.sig();
    ojson doc;
    doc["format_version"] = "1";
    if (!comment.empty()) doc["comment"] = comment;

    ojson sj;
    ojson exo = ojson::array();
    for (int i = 0; i < sig.exo_count(); ++i) {
        ojson v;
        v["name"] = sig.exogenous[static_cast<std::size_t>(i)];
        v["range"] = detail::range_to_json(sig.range_of(i));
        exo.push_back(std::move(v));
    }
    ojson endo = ojson::array();
    for (int i = 0; i < sig.endo_count(); ++i) {
        ojson v;
        v["name"] = sig.endogenous[static_cast<std::size_t>(i)];
        v["range"] = detail::range_to_json(sig.range_of(sig.endo_var(i)));
        endo.push_back(std::move(v));
    }
    sj["exogenous"] = std::move(exo);
    sj["endogenous"] = std::move(endo);
    doc["signature"] = std::move(sj);

    std::vector<int> order(static_cast<std::size_t>(env.space->size()));
    for (int i = 0; i < env.space->size(); ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return env.space->names[static_cast<std::size_t>(a)] <
                                         env.space->names[static_cast<std::size_t>(b)]; });
    ojson models = ojson::array();
    for (int idx : order) {
        ojson m;
        m["name"] = env.space->names[static_cast<std::size_t>(idx)];
        ojson eqs = ojson::array();
        for (const EquationTable& eq : env.space->models[static_cast<std::size_t>(idx)].equations)
            eqs.push_back(detail::equation_to_json(sig, eq));
        m["equations"] = std::move(eqs);
        models.push_back(std::move(m));
    }
    doc["models"] = std::move(models);
    doc["true_model"] = env.space->names[static_cast<std::size_t>(env.true_model)];

    ojson pi = ojson::array();
    for (const auto& [ctx, p] : env.pi.support) {
        ojson e;
        ojson cj = ojson::object();
        for (int i = 0; i < sig.exo_count(); ++i)
            cj[sig.name_of(i)] = sig.range_of(i).labels[static_cast<std::size_t>(ctx[static_cast<std::size_t>(i)])];
        e["context"] = std::move(cj);
        e["prob"] = to_string(p);
        pi.push_back(std::move(e));
    }
    doc["pi"] = std::move(pi);

    ojson actions = ojson::array();
    for (const Action& a : env.actions) {
        ojson aj;
        aj["name"] = a.name;
        aj["set"] = detail::assignment_to_json(sig, a.intervention.assignments);
        ojson obs = ojson::array();
        for (int var : a.observe) obs.push_back(sig.name_of(var));
        aj["observe"] = std::move(obs);
        actions.push_back(std::move(aj));
    }
    doc["actions"] = std::move(actions);
    doc["util_var"] = sig.name_of(env.util_var);
    doc["delta"] = to_string(env.delta);

    ojson levels = ojson::array();
    for (const Distribution& level : belief.levels) {
        ojson lj = ojson::array();
        for (const auto& [idx, w] : level) {
            ojson e;
            e["model"] = belief.space->names[static_cast<std::size_t>(idx)];
            e["weight"] = to_string(w);
            lj.push_back(std::move(e));
        }
        levels.push_back(std::move(lj));
    }
    doc["belief"] = ojson{{"levels", std::move(levels)}};

    if (ip) {
        ojson ij;
        ij["v_star"] = to_string(ip->v_star);
        ojson xj = ojson::object();
        for (std::size_t i = 0; i < env.actions.size(); ++i)
            xj[env.actions[i].name] = to_string(ip->xi[i]);
        ij["xi"] = std::move(xj);
        ojson tj;
        tj["rule"] = ip->tau.name;
        ojson params = ojson::array();
        for (const Rational& p : ip->tau.params) params.push_back(to_string(p));
        tj["params"] = std::move(params);
        ij["tau"] = std::move(tj);
        ij["tau_observation"] =
            ip->tau_obs == TauObsSource::TrueModel ? "true-model" : "belief-model";
        doc["introspective"] = std::move(ij);
    }
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Trajectory logging (JSONL, one record per line, schema_version 1)

inline detail::ojson belief_levels_json(const LexBelief& belief) {
    detail::ojson levels = detail::ojson::array();
    for (std::size_t li = 0; li < belief.levels.size(); ++li) {
        detail::ojson lj = detail::ojson::array();
        for (const auto& [idx, w] : belief.levels[li]) {
            detail::ojson e;
            e["model"] = belief.space->names[static_cast<std::size_t>(idx)];
            if (li == 0) e["weight"] = to_string(w);  // deeper levels: supports only
            lj.push_back(std::move(e));
        }
        levels.push_back(std::move(lj));
    }
    return levels;
}

inline std::string trajectory_to_jsonl(const TrajectoryRecord& rec, const Environment& env) {
    using detail::ojson;
    const Signature& sig = env.sig();
    ojson line;
    line["schema_version"] = 1;
    line["period"] = rec.period;
    line["action_id"] = env.actions[static_cast<std::size_t>(rec.action)].name;
    line["certified"] = rec.certified;
    ojson ctx = ojson::object();
    for (int i = 0; i < sig.exo_count(); ++i)
        ctx[sig.name_of(i)] =
            sig.range_of(i).labels[static_cast<std::size_t>(rec.context[static_cast<std::size_t>(i)])];
    line["context"] = std::move(ctx);
    ojson obs;
    obs["set"] = detail::assignment_to_json(sig, rec.observation.intervention.assignments);
    obs["observed"] = detail::assignment_to_json(sig, rec.observation.observed.entries);
    line["observation"] = std::move(obs);
    line["util"] = to_string(rec.realized_util);
    line["surprised"] = rec.surprised;
    line["belief_levels"] = belief_levels_json(rec.belief_after);
    if (rec.xi_after) {
        ojson xj = ojson::object();
        for (std::size_t i = 0; i < env.actions.size(); ++i)
            xj[env.actions[i].name] = to_string((*rec.xi_after)[i]);
        line["xi"] = std::move(xj);
    }
    return line.dump();
}

}  // namespace cbs
