// cbs: inspect, value, simulate and steady-check causal-belief environments.
//
// Exit codes: 0 success (or Steady), 1 usage error, 2 validation failure,
// 3 NotSteady, 4 Undecided/uncertified, 5 halt on total surprise.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cbs/belief.hpp"
#include "cbs/decision.hpp"
#include "cbs/dynamics.hpp"
#include "cbs/enumerate.hpp"
#include "cbs/env_format.hpp"

namespace {

using nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNotSteady = 3;
constexpr int kExitUndecided = 4;
constexpr int kExitSurprise = 5;

std::string approx(const cbs::Rational& r) {
    std::ostringstream out;
    out << std::setprecision(6) << r.convert_to<double>();
    return out.str();
}

std::string render_belief(const cbs::LexBelief& belief) {
    std::string out;
    for (std::size_t li = 0; li < belief.levels.size(); ++li) {
        if (li > 0) out += " | ";
        out += "[";
        bool first = true;
        for (const auto& [idx, w] : belief.levels[li]) {
            if (!first) out += ", ";
            out += belief.space->names[static_cast<std::size_t>(idx)];
            if (li == 0) out += ": " + cbs::to_string(w);
            first = false;
        }
        out += "]";
    }
    return out;
}

const char* status_name(cbs::SteadyStatus s) {
    switch (s) {
        case cbs::SteadyStatus::Steady: return "Steady";
        case cbs::SteadyStatus::NotSteady: return "NotSteady";
        default: return "Undecided";
    }
}

int status_exit(cbs::SteadyStatus s) {
    switch (s) {
        case cbs::SteadyStatus::Steady: return kExitOk;
        case cbs::SteadyStatus::NotSteady: return kExitNotSteady;
        default: return kExitUndecided;
    }
}

cbs::ValueConfig pick_config(const cbs::Environment& env, int horizon,
                             const std::string& eps_text) {
    if (!eps_text.empty())
        return cbs::value_config_from_epsilon(env, cbs::parse_rational(eps_text));
    return cbs::ValueConfig{horizon};
}

int require_action(const cbs::Environment& env, const std::string& name) {
    int idx = env.action_index(name);
    if (idx < 0) throw cbs::ValidationError("unknown action '" + name + "'");
    return idx;
}

std::optional<cbs::IntrospectiveParams> pick_introspective(const cbs::LoadResult& loaded,
                                                           bool wanted) {
    if (!wanted) return std::nullopt;
    if (!loaded.introspective)
        throw cbs::ValidationError("--introspective requires an 'introspective' block in the file");
    return loaded.introspective;
}

int cmd_validate(const std::string& path, bool json) {
    cbs::LoadResult loaded = cbs::load_environment(path);
    if (json) {
        ordered_json doc;
        doc["ok"] = true;
        doc["models"] = loaded.env.space->size();
        doc["actions"] = loaded.env.actions.size();
        doc["contexts"] = loaded.env.pi.support.size();
        doc["belief_levels"] = loaded.belief.levels.size();
        doc["introspective"] = loaded.introspective.has_value();
        doc["warnings"] = loaded.warnings;
        std::cout << doc.dump(2) << "\n";
    } else {
        std::cout << "OK: " << path << " (" << loaded.env.space->size() << " models, "
                  << loaded.env.actions.size() << " actions, " << loaded.env.pi.support.size()
                  << " contexts in pi)\n";
        for (const auto& w : loaded.warnings) std::cout << "warning: " << w << "\n";
    }
    return kExitOk;
}

int cmd_value(const std::string& path, const std::string& action, int horizon,
              const std::string& eps, bool introspective, bool json) {
    cbs::LoadResult loaded = cbs::load_environment(path);
    auto ip = pick_introspective(loaded, introspective);
    cbs::ValueConfig cfg = pick_config(loaded.env, horizon, eps);
    if (!action.empty()) require_action(loaded.env, action);

    cbs::ValueComputer vc(loaded.env, cfg, ip);
    auto evals = vc.evaluate_actions(loaded.belief);
    auto optimality = [&](int i) -> std::string {
        bool geq_all = true;
        for (int j = 0; j < static_cast<int>(evals.size()); ++j) {
            if (j == i) continue;
            if (vc.cert_gt(evals, j, i)) return "no";
            geq_all = geq_all && vc.cert_geq(evals, i, j);
        }
        return geq_all ? "yes" : "uncertain";
    };

    if (json) {
        ordered_json doc;
        doc["horizon"] = vc.horizon();
        doc["bound"] = cbs::to_string(vc.error_bound());
        ordered_json rows = ordered_json::array();
        for (std::size_t i = 0; i < evals.size(); ++i) {
            if (!action.empty() && loaded.env.actions[i].name != action) continue;
            ordered_json row;
            row["action"] = loaded.env.actions[i].name;
            row["value"] = cbs::to_string(evals[i].value);
            row["value_approx"] = evals[i].value.convert_to<double>();
            row["one_shot"] = cbs::to_string(evals[i].one_shot);
            row["optimal"] = optimality(static_cast<int>(i));
            rows.push_back(std::move(row));
        }
        doc["actions"] = std::move(rows);
        std::cout << doc.dump(2) << "\n";
    } else {
        std::cout << "horizon " << vc.horizon() << ", certified bound "
                  << cbs::to_string(vc.error_bound()) << " (~" << approx(vc.error_bound())
                  << ")\n";
        for (std::size_t i = 0; i < evals.size(); ++i) {
            if (!action.empty() && loaded.env.actions[i].name != action) continue;
            std::cout << "  " << loaded.env.actions[i].name << ": value "
                      << cbs::to_string(evals[i].value) << " (~" << approx(evals[i].value)
                      << "), one-shot " << cbs::to_string(evals[i].one_shot) << ", optimal: "
                      << optimality(static_cast<int>(i)) << "\n";
        }
    }
    return kExitOk;
}

int cmd_simulate(const std::string& path, int periods, std::uint64_t seed, int horizon,
                 const std::string& log_path, const std::string& policy_name, int window,
                 bool introspective, bool json) {
    cbs::LoadResult loaded = cbs::load_environment(path);
    auto ip = pick_introspective(loaded, introspective);
    cbs::SurprisePolicy policy = cbs::SurprisePolicy::Halt;
    if (policy_name == "freeze") policy = cbs::SurprisePolicy::FreezeBelief;
    else if (policy_name != "halt")
        throw cbs::ValidationError("--surprise-policy must be 'halt' or 'freeze'");

    auto trace =
        cbs::simulate(loaded.env, loaded.belief, periods, seed, cbs::ValueConfig{horizon}, ip,
                      policy);

    if (!log_path.empty()) {
        std::ofstream out(log_path, std::ios::binary);
        if (!out) throw cbs::ValidationError("cannot open log file '" + log_path + "'");
        for (const auto& rec : trace) out << cbs::trajectory_to_jsonl(rec, loaded.env) << "\n";
    }

    std::map<std::string, int> counts;
    int surprises = 0;
    for (const auto& rec : trace) {
        ++counts[loaded.env.actions[static_cast<std::size_t>(rec.action)].name];
        if (rec.surprised) ++surprises;
    }
    cbs::CycleReport cyc = cbs::detect_cycle(trace, window);

    if (json) {
        ordered_json doc;
        doc["periods"] = periods;
        doc["seed"] = seed;
        doc["action_counts"] = counts;
        doc["switches"] = cyc.switches;
        doc["distinct_actions"] = cyc.distinct_actions;
        doc["longest_constant_suffix"] = cyc.longest_constant_suffix;
        doc["stabilized"] = cyc.stabilized;
        doc["window"] = window;
        doc["surprises"] = surprises;
        doc["final_belief"] = cbs::belief_levels_json(trace.back().belief_after);
        if (!log_path.empty()) doc["log"] = log_path;
        std::cout << doc.dump(2) << "\n";
    } else {
        std::cout << "periods " << periods << ", seed " << seed << "\n";
        std::cout << "action counts:";
        for (const auto& [name, n] : counts) std::cout << " " << name << "=" << n;
        std::cout << "\nswitches " << cyc.switches << ", surprises " << surprises
                  << ", longest constant suffix " << cyc.longest_constant_suffix << "\n";
        std::cout << (cyc.stabilized ? "stabilized" : "no stabilization") << " within the final "
                  << window << " periods\n";
        std::cout << "final belief: " << render_belief(trace.back().belief_after) << "\n";
        if (!log_path.empty())
            std::cout << "log: " << log_path << " (" << trace.size() << " lines)\n";
    }
    return kExitOk;
}

int cmd_steady(const std::string& path, const std::string& action, int horizon,
               const std::string& eps, bool introspective, bool strict, bool json) {
    cbs::LoadResult loaded = cbs::load_environment(path);
    auto ip = pick_introspective(loaded, introspective);
    cbs::ValueConfig cfg = pick_config(loaded.env, horizon, eps);
    int idx = require_action(loaded.env, action);
    cbs::SteadyVerdict v =
        cbs::steady_check(loaded.env, loaded.belief, idx, cfg, ip, std::nullopt, strict);
    if (json) {
        ordered_json doc;
        doc["action"] = action;
        doc["status"] = status_name(v.status);
        doc["reason"] = v.reason;
        std::cout << doc.dump(2) << "\n";
    } else {
        std::cout << status_name(v.status) << ": (" << render_belief(loaded.belief) << ", "
                  << action << ") — " << v.reason << "\n";
    }
    return status_exit(v.status);
}

int cmd_converge(const std::string& path, int horizon, bool json) {
    cbs::LoadResult loaded = cbs::load_environment(path);
    cbs::ValueConfig cfg{horizon};
    cbs::ConvergenceTrace trace = cbs::iterate_deterministic(loaded.env, loaded.belief, cfg);
    const auto& terminal = trace.steps.back();
    cbs::SteadyVerdict v = cbs::steady_check(loaded.env, terminal.first, terminal.second, cfg);
    if (json) {
        ordered_json doc;
        ordered_json steps = ordered_json::array();
        for (const auto& [belief, action] : trace.steps) {
            ordered_json s;
            s["action"] = loaded.env.actions[static_cast<std::size_t>(action)].name;
            s["belief"] = cbs::belief_levels_json(belief);
            steps.push_back(std::move(s));
        }
        doc["steps"] = std::move(steps);
        doc["converged_at"] = trace.converged_at;
        doc["mu_bar_changes"] = trace.mu_bar_changes;
        doc["terminal_status"] = status_name(v.status);
        doc["terminal_reason"] = v.reason;
        std::cout << doc.dump(2) << "\n";
    } else {
        for (std::size_t i = 0; i < trace.steps.size(); ++i)
            std::cout << "step " << i << ": belief " << render_belief(trace.steps[i].first)
                      << "  action "
                      << loaded.env.actions[static_cast<std::size_t>(trace.steps[i].second)].name
                      << "\n";
        std::cout << "converged at step " << trace.converged_at << "; unconditional belief changed "
                  << trace.mu_bar_changes << " time(s)\n";
        std::cout << "terminal pair: " << status_name(v.status) << " — " << v.reason << "\n";
    }
    return status_exit(v.status);
}

int cmd_enumerate(const std::string& sig_spec, int parent_bound, std::size_t cap, bool dump,
                  bool json) {
    std::string text = sig_spec;
    std::string origin = "<signature>";
    if (!sig_spec.empty() && sig_spec[0] == '@') {
        origin = sig_spec.substr(1);
        std::ifstream in(origin, std::ios::binary);
        if (!in) throw cbs::ParseError("cannot open '" + origin + "'");
        std::ostringstream buf;
        buf << in.rdbuf();
        text = buf.str();
    }
    cbs::SignaturePtr sig = cbs::parse_signature_text(text, origin);
    auto models = cbs::enumerate_models(sig, parent_bound, cap);
    if (json || dump) {
        ordered_json doc;
        doc["count"] = models.size();
        doc["parent_bound"] = parent_bound;
        if (dump) {
            ordered_json list = ordered_json::array();
            for (const auto& m : models) {
                ordered_json eqs = ordered_json::array();
                for (const auto& eq : m.equations)
                    eqs.push_back(cbs::detail::equation_to_json(*sig, eq));
                list.push_back(std::move(eqs));
            }
            doc["models"] = std::move(list);
        }
        std::cout << doc.dump(2) << "\n";
    } else {
        std::cout << models.size() << " acyclic model(s) with parent bound " << parent_bound
                  << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cbs — agents with causal beliefs: values, simulation, steady states"};
    app.require_subcommand(1);
    bool json = false;
    app.add_flag("--json", json, "machine-readable output");

    std::string path, action, eps, log_path, sig_spec;
    std::string policy = "halt";
    int horizon = 20;
    int periods = 1;
    int parent_bound = 2;
    int window = 100;
    std::uint64_t seed = 0;
    std::size_t cap = 100000;
    bool introspective = false, strict = false, dump = false;

    auto* validate = app.add_subcommand("validate", "load a file and run all structural checks");
    validate->add_option("path", path, "environment file")->required();

    auto* value = app.add_subcommand("value", "per-action truncated values with certified bounds");
    value->add_option("path", path)->required();
    value->add_option("--action", action, "restrict output to one action");
    auto* vh = value->add_option("--horizon", horizon, "truncation depth T");
    value->add_option("--eps", eps, "pick T from a target tail bound")->excludes(vh);
    value->add_flag("--introspective", introspective, "use the file's introspective parameters");

    auto* simulate = app.add_subcommand("simulate", "seeded repeated play against the true model");
    simulate->add_option("path", path)->required();
    simulate->add_option("--periods", periods, "number of periods")->required()
        ->check(CLI::PositiveNumber);
    simulate->add_option("--seed", seed, "context sampling seed");
    simulate->add_option("--horizon", horizon, "truncation depth T");
    simulate->add_option("--log", log_path, "write a JSONL trajectory log here");
    simulate->add_option("--surprise-policy", policy, "halt | freeze");
    simulate->add_option("--window", window, "stabilization window for switch detection");
    simulate->add_flag("--introspective", introspective);

    auto* steady = app.add_subcommand("steady", "verify the steady-state conditions for an action");
    steady->add_option("path", path)->required();
    steady->add_option("--action", action, "action name")->required();
    auto* sh = steady->add_option("--horizon", horizon);
    steady->add_option("--eps", eps)->excludes(sh);
    steady->add_flag("--introspective", introspective);
    steady->add_flag("--strict", strict, "compare whole hierarchies, not just mu_bar");

    auto* converge = app.add_subcommand("converge",
                                        "deterministic-environment convergence iteration");
    converge->add_option("path", path)->required();
    converge->add_option("--horizon", horizon);

    auto* enumerate = app.add_subcommand("enumerate", "count acyclic models over a signature");
    enumerate->add_option("--signature", sig_spec, "inline JSON or @file")->required();
    enumerate->add_option("--parent-bound", parent_bound);
    enumerate->add_option("--cap", cap, "abort above this many models");
    enumerate->add_flag("--dump", dump, "print the models");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*validate) return cmd_validate(path, json);
        if (*value) return cmd_value(path, action, horizon, eps, introspective, json);
        if (*simulate)
            return cmd_simulate(path, periods, seed, horizon, log_path, policy, window,
                                introspective, json);
        if (*steady) return cmd_steady(path, action, horizon, eps, introspective, strict, json);
        if (*converge) return cmd_converge(path, horizon, json);
        if (*enumerate) return cmd_enumerate(sig_spec, parent_bound, cap, dump, json);
    } catch (const cbs::TotalSurprise& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSurprise;
    } catch (const cbs::Uncertified& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUndecided;
    } catch (const cbs::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitUsage;
}
