#pragma once

#include <filesystem>
#include <fstream>
#include <set>

#include "sbn/model.hpp"
#include "sbn/state.hpp"

namespace sbn {

// ---------------------------------------------------------------------------
// Tiny arithmetic expressions in the variable t: numbers, + - * / and unary
// minus, parentheses, sin/cos/exp/sqrt. Used for config values like the
// inflow pressure p_in(t).
// ---------------------------------------------------------------------------

class Expression {
  public:
    static Expression parse(const std::string& text) {
        Expression e;
        e.text_ = text;
        Parser p{text, 0};
        e.root_ = p.parse_sum();
        p.skip_ws();
        if (p.pos != text.size())
            throw ParseError("expression: trailing characters in '" + text + "'");
        return e;
    }

    double operator()(double t) const { return eval(root_, t); }
    const std::string& text() const { return text_; }

  private:
    struct Node {
        char op = 0;  // 0 number, 't' variable, +-*/ binary, 'f' function
        double value = 0.0;
        int fn = 0;  // 0 sin, 1 cos, 2 exp, 3 sqrt
        std::unique_ptr<Node> lhs, rhs;
    };
    using NodePtr = std::unique_ptr<Node>;

    struct Parser {
        const std::string& s;
        size_t pos;

        void skip_ws() {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
                ++pos;
        }
        bool eat(char c) {
            skip_ws();
            if (pos < s.size() && s[pos] == c) {
                ++pos;
                return true;
            }
            return false;
        }
        NodePtr parse_sum() {
            NodePtr n = parse_product();
            while (true) {
                if (eat('+')) n = binary('+', std::move(n), parse_product());
                else if (eat('-')) n = binary('-', std::move(n), parse_product());
                else return n;
            }
        }
        NodePtr parse_product() {
            NodePtr n = parse_unary();
            while (true) {
                if (eat('*')) n = binary('*', std::move(n), parse_unary());
                else if (eat('/')) n = binary('/', std::move(n), parse_unary());
                else return n;
            }
        }
        NodePtr parse_unary() {
            if (eat('-')) return binary('-', number(0.0), parse_unary());
            return parse_atom();
        }
        NodePtr parse_atom() {
            skip_ws();
            if (eat('(')) {
                NodePtr n = parse_sum();
                if (!eat(')')) throw ParseError("expression: missing ')'");
                return n;
            }
            if (pos < s.size() &&
                (std::isalpha(static_cast<unsigned char>(s[pos])))) {
                size_t start = pos;
                while (pos < s.size() &&
                       std::isalnum(static_cast<unsigned char>(s[pos])))
                    ++pos;
                const std::string name = s.substr(start, pos - start);
                if (name == "t") {
                    auto n = std::make_unique<Node>();
                    n->op = 't';
                    return n;
                }
                int fn = -1;
                if (name == "sin") fn = 0;
                else if (name == "cos") fn = 1;
                else if (name == "exp") fn = 2;
                else if (name == "sqrt") fn = 3;
                if (fn < 0) throw ParseError("expression: unknown name '" + name + "'");
                if (!eat('(')) throw ParseError("expression: expected '(' after " + name);
                NodePtr arg = parse_sum();
                if (!eat(')')) throw ParseError("expression: missing ')'");
                auto n = std::make_unique<Node>();
                n->op = 'f';
                n->fn = fn;
                n->lhs = std::move(arg);
                return n;
            }
            size_t start = pos;
            while (pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) ||
                                      s[pos] == '.' || s[pos] == 'e' || s[pos] == 'E' ||
                                      ((s[pos] == '+' || s[pos] == '-') && pos > start &&
                                       (s[pos - 1] == 'e' || s[pos - 1] == 'E'))))
                ++pos;
            if (pos == start) throw ParseError("expression: expected a number in '" + s + "'");
            bool ok = false;
            const double v = parse_double(std::string_view(s).substr(start, pos - start), ok);
            if (!ok) throw ParseError("expression: bad number in '" + s + "'");
            return number(v);
        }
        static NodePtr number(double v) {
            auto n = std::make_unique<Node>();
            n->value = v;
            return n;
        }
        static NodePtr binary(char op, NodePtr a, NodePtr b) {
            auto n = std::make_unique<Node>();
            n->op = op;
            n->lhs = std::move(a);
            n->rhs = std::move(b);
            return n;
        }
    };

    static double eval(const NodePtr& n, double t) {
        switch (n->op) {
            case 0: return n->value;
            case 't': return t;
            case '+': return eval(n->lhs, t) + eval(n->rhs, t);
            case '-': return eval(n->lhs, t) - eval(n->rhs, t);
            case '*': return eval(n->lhs, t) * eval(n->rhs, t);
            case '/': return eval(n->lhs, t) / eval(n->rhs, t);
            case 'f':
                switch (n->fn) {
                    case 0: return std::sin(eval(n->lhs, t));
                    case 1: return std::cos(eval(n->lhs, t));
                    case 2: return std::exp(eval(n->lhs, t));
                    default: return std::sqrt(eval(n->lhs, t));
                }
        }
        return 0.0;
    }

    std::string text_;
    NodePtr root_;
};

// ---------------------------------------------------------------------------
// Run configuration, populated from an INI file. Unknown sections or keys
// are errors; missing optional keys take the documented defaults.
// ---------------------------------------------------------------------------

enum class Scenario : std::uint8_t { test1, test2_external_mesh, custom };
enum class FluidExtBc : std::uint8_t { noslip, traction_free };

struct RunConfig {
    Scenario scenario = Scenario::test1;

    // [mesh]
    std::string mesh_source = "channel";  // channel | file
    ChannelSpec channel{8, 8, 0.0, 1.0, -1.0, 0.0, 1.0};
    std::string mesh_path;
    std::string mesh_map = "none";  // none | test2
    Pairing pairing = Pairing::p2_p1;

    PhysicalParameters physics;
    NitscheParameters nitsche;

    // [time]
    double dt = 1e-4;
    double T = 1e-3;

    // [output]
    std::string out_dir = "out";
    int stride = 1;
    bool dump_dofs = false;

    // [bc]
    FluidExtBc fluid_ext_bc = FluidExtBc::noslip;
    std::string p_in_expr = "0";
    double injection_rate = 0.0;  // distributed mass source over the fluid region

    void validate() const {
        physics.validate();
        nitsche.validate();
        if (!(dt > 0.0)) throw ParameterError("dt must be > 0");
        if (!(T >= dt)) throw ParameterError("T must be >= dt");
        if (stride < 1) throw ParameterError("output stride must be >= 1");
        if (mesh_source == "file" && !std::filesystem::exists(mesh_path))
            throw ParameterError("mesh file does not exist: " + mesh_path);
        Expression::parse(p_in_expr);
    }
};

namespace detail {

struct IniEntry {
    std::string value;
    int line = 0;
    mutable bool used = false;
};

class IniFile {
  public:
    IniFile(std::istream& in, std::string name) : name_(std::move(name)) {
        std::string line;
        std::string section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto trim = [](std::string s) {
                const auto a = s.find_first_not_of(" \t\r");
                if (a == std::string::npos) return std::string();
                const auto b = s.find_last_not_of(" \t\r");
                return s.substr(a, b - a + 1);
            };
            const std::string t = trim(line);
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    fail(lineno, "malformed section header '" + t + "'");
                section = t.substr(1, t.size() - 2);
                sections_.insert(section);
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos) fail(lineno, "expected 'key = value'");
            const std::string key = trim(t.substr(0, eq));
            const std::string value = trim(t.substr(eq + 1));
            if (key.empty()) fail(lineno, "empty key");
            if (section.empty()) fail(lineno, "key outside any [section]");
            entries_[section + "." + key] = {value, lineno, false};
        }
    }

    std::optional<std::string> get(const std::string& key) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        it->second.used = true;
        return it->second.value;
    }

    double get_double(const std::string& key, double fallback) const {
        auto v = get(key);
        if (!v) return fallback;
        bool ok = false;
        const double d = parse_double(*v, ok);
        if (!ok) fail(entries_.at(key).line, "expected a number for " + key);
        return d;
    }

    int get_int(const std::string& key, int fallback) const {
        const double d = get_double(key, fallback);
        if (d != std::floor(d)) fail(entries_.at(key).line, key + " must be an integer");
        return static_cast<int>(d);
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto v = get(key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        fail(entries_.at(key).line, "expected true/false for " + key);
        return false;
    }

    void check_all_used() const {
        static const std::set<std::string> known_sections = {
            "mesh", "physics", "nitsche", "time", "output", "bc"};
        for (const std::string& s : sections_)
            if (!known_sections.count(s))
                throw ParseError(name_ + ": unknown section [" + s + "]");
        for (const auto& [key, e] : entries_)
            if (!e.used)
                fail(e.line, "unknown key '" + key + "'");
    }

    [[noreturn]] void fail(int line, const std::string& what) const {
        throw ParseError(name_ + ":" + std::to_string(line) + ": " + what);
    }

  private:
    std::string name_;
    std::map<std::string, IniEntry> entries_;
    std::set<std::string> sections_;
};

}  // namespace detail

inline RunConfig parse_config_stream(std::istream& in, const std::string& name) {
    detail::IniFile ini(in, name);
    RunConfig c;

    if (auto v = ini.get("bc.scenario")) {
        if (*v == "test1") c.scenario = Scenario::test1;
        else if (*v == "test2_external_mesh") c.scenario = Scenario::test2_external_mesh;
        else if (*v == "custom") c.scenario = Scenario::custom;
        else throw ParseError(name + ": unknown scenario '" + *v + "'");
    }

    if (auto v = ini.get("mesh.source")) {
        if (*v != "channel" && *v != "file")
            throw ParseError(name + ": mesh source must be channel or file");
        c.mesh_source = *v;
    }
    c.channel.nx = ini.get_int("mesh.nx", c.channel.nx);
    c.channel.ny_half = ini.get_int("mesh.ny_half", c.channel.ny_half);
    c.channel.x0 = ini.get_double("mesh.x0", c.channel.x0);
    c.channel.x1 = ini.get_double("mesh.x1", c.channel.x1);
    c.channel.y_lo = ini.get_double("mesh.y_lo", c.channel.y_lo);
    c.channel.y_split = ini.get_double("mesh.y_split", c.channel.y_split);
    c.channel.y_hi = ini.get_double("mesh.y_hi", c.channel.y_hi);
    if (auto v = ini.get("mesh.path")) c.mesh_path = *v;
    if (auto v = ini.get("mesh.map")) {
        if (*v != "none" && *v != "test2")
            throw ParseError(name + ": mesh map must be none or test2");
        c.mesh_map = *v;
    }
    if (auto v = ini.get("mesh.pairing")) {
        if (*v == "p2p1") c.pairing = Pairing::p2_p1;
        else if (*v == "p1p1") c.pairing = Pairing::p1_p1;
        else throw ParseError(name + ": pairing must be p2p1 or p1p1");
    }

    c.physics.mu_f = ini.get_double("physics.mu_f", c.physics.mu_f);
    c.physics.mu_p = ini.get_double("physics.mu_p", c.physics.mu_p);
    c.physics.lambda_p = ini.get_double("physics.lambda_p", c.physics.lambda_p);
    c.physics.s0 = ini.get_double("physics.s0", c.physics.s0);
    c.physics.alpha = ini.get_double("physics.alpha", c.physics.alpha);
    if (auto v = ini.get("physics.k")) {
        bool ok = false;
        const double k = parse_double(*v, ok);
        if (!ok) throw ParseError(name + ": physics.k must be a number");
        c.physics.conductivity = PhysicalParameters::scalar_conductivity(k);
    }
    const double kxx = ini.get_double("physics.kxx", c.physics.conductivity.a);
    const double kxy = ini.get_double("physics.kxy", c.physics.conductivity.b);
    const double kyy = ini.get_double("physics.kyy", c.physics.conductivity.d);
    c.physics.conductivity = {kxx, kxy, kxy, kyy};
    c.physics.beta = ini.get_double("physics.beta", c.physics.beta);

    c.nitsche.gamma_f = ini.get_double("nitsche.gamma_f", 1500.0);
    c.nitsche.varsigma = ini.get_int("nitsche.varsigma", 1);
    c.nitsche.gamma_stab = ini.get_double("nitsche.gamma_stab", 1.0);
    c.nitsche.gamma_stab_prime = ini.get_double("nitsche.gamma_stab_prime", 0.0);
    c.nitsche.gamma_q = ini.get_double("nitsche.gamma_q", 1e-3);
    c.nitsche.use_bjs = ini.get_bool("nitsche.use_bjs", false);

    c.dt = ini.get_double("time.dt", c.dt);
    c.T = ini.get_double("time.T", c.T);

    if (auto v = ini.get("output.dir")) c.out_dir = *v;
    c.stride = ini.get_int("output.stride", c.stride);
    c.dump_dofs = ini.get_bool("output.dump_dofs", c.dump_dofs);

    if (auto v = ini.get("bc.fluid_ext_bc")) {
        if (*v == "noslip") c.fluid_ext_bc = FluidExtBc::noslip;
        else if (*v == "traction_free") c.fluid_ext_bc = FluidExtBc::traction_free;
        else throw ParseError(name + ": fluid_ext_bc must be noslip or traction_free");
    }
    if (auto v = ini.get("bc.p_in")) c.p_in_expr = *v;
    c.injection_rate = ini.get_double("bc.injection_rate", c.injection_rate);

    ini.check_all_used();
    c.validate();
    return c;
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("parse_config: cannot open " + path);
    return parse_config_stream(f, path);
}

}  // namespace sbn
