// config.hpp
// Flat key=value run configuration. '#' starts a comment; unknown keys are
// errors. serialize() writes every key in a fixed order, so
// parse(serialize(c)) == c.

#pragma once

#include "nlch/diagnostics.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace nlch {

struct ParseError : std::runtime_error {
    ParseError(int line_, std::string key_, std::string reason_)
        : std::runtime_error(format(line_, key_, reason_)), line(line_), key(std::move(key_)), reason(std::move(reason_))
    {
    }
    int line;
    std::string key;
    std::string reason;

private:
    static std::string format(int line, const std::string& key, const std::string& reason)
    {
        return "line " + std::to_string(line) + (key.empty() ? "" : ", key '" + key + "'") + ": " + reason;
    }
};

struct RunConfig {
    // domain
    std::string mode;                  // sixth | fourth | phasefield (required)
    std::vector<int> cells;            // one entry per axis (required)
    std::vector<double> lengths;       // defaults to 1 per axis
    std::string bc = "noflux";         // noflux | periodic
    // potential
    std::string potential = "logarithmic"; // logarithmic | sixth | linear
    double lambda = 0.0;
    double h0 = 0.0;
    double linear_coeff = 1.0;
    // model
    double delta = 0.0;
    double epsilon = 0.0;
    double sigma = 0.0;
    double mobility = 1.0;
    std::string coefficient = "constant"; // constant | even_quadratic | general_quadratic
    double a_const = 1.0;
    double g0 = 1.0, g2 = 0.0;
    double a0 = 1.0, a1 = 0.0, a2 = 0.0;
    std::string gradient_form = "variational"; // variational | pointwise
    // stepper
    double tau = 1e-4;
    double t_end = 0.0;
    double newton_tol = 1e-10;
    int newton_max = 30;
    double krylov_tol = 1e-8;
    int krylov_max = 500;
    int krylov_restart = 30;
    double tau_min = 0.0; // 0 = tau / 1024
    bool domain_guard = true;
    double energy_slack = 1e-9;
    std::string preconditioner = "sparse_lu"; // sparse_lu | spectral
    // initial data
    std::string initial = "noise"; // constant | noise | cosine | tanh
    double initial_mean = 0.0;
    double initial_amplitude = 0.05;
    std::uint64_t initial_seed = 0;
    int initial_k = 1;
    double initial_position = 0.5;
    double initial_width = 0.05;
    std::string smoothing = "none"; // none | h1 | h2
    double smoothing_sigma = 1e-3;
    // output
    std::string output_dir = "out";
    int diagnostics_every = 1;
    int checkpoint_every = 0;
    int snapshot_every = 0;

    bool operator==(const RunConfig&) const = default;

    Domain domain() const;
    ModelParams model() const;
    StepperConfig stepper() const;
    InitialKind initial_kind() const;
    /// Initial field including the optional smoothing.
    Field initial_field() const;
    Scenario scenario() const;
    /// Throws ValidationError naming the offending keys.
    void validate() const;
};

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string fmt_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
bool parse_number(const std::string& s, T& out)
{
    if (s.empty())
        return false;
    if constexpr (std::is_floating_point_v<T>) {
        // strtod accepts the %.17g output including inf/nan spellings we reject below
        char* end = nullptr;
        errno = 0;
        const double v = std::strtod(s.c_str(), &end);
        if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v))
            return false;
        out = v;
        return true;
    } else {
        const char* b = s.data();
        const char* e = b + s.size();
        if (*b == '+')
            ++b;
        auto [p, ec] = std::from_chars(b, e, out);
        return ec == std::errc() && p == e;
    }
}

template <class T>
std::string join(const std::vector<T>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i)
            s += ',';
        if constexpr (std::is_floating_point_v<T>)
            s += fmt_double(v[i]);
        else
            s += std::to_string(v[i]);
    }
    return s;
}

/// Binds each key to a member so parse and serialize share one table.
struct KeyTable {
    struct Entry {
        std::function<void(const std::string&, int)> set;
        std::function<std::string()> get;
    };
    std::vector<std::pair<std::string, Entry>> entries;

    template <class T>
    void num(const std::string& key, T& ref)
    {
        entries.push_back({key, Entry{[&ref, key](const std::string& v, int line) {
                                          if (!parse_number(v, ref))
                                              throw ParseError(line, key, "expected a number, got '" + v + "'");
                                      },
                                      [&ref] {
                                          if constexpr (std::is_floating_point_v<T>)
                                              return fmt_double(ref);
                                          else
                                              return std::to_string(ref);
                                      }}});
    }

    void flag(const std::string& key, bool& ref)
    {
        entries.push_back({key, Entry{[&ref, key](const std::string& v, int line) {
                                          if (v == "true" || v == "1")
                                              ref = true;
                                          else if (v == "false" || v == "0")
                                              ref = false;
                                          else
                                              throw ParseError(line, key, "expected true or false, got '" + v + "'");
                                      },
                                      [&ref] { return std::string(ref ? "true" : "false"); }}});
    }

    void choice(const std::string& key, std::string& ref, std::vector<std::string> allowed)
    {
        entries.push_back({key, Entry{[&ref, key, allowed](const std::string& v, int line) {
                                          if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
                                              std::string list;
                                              for (const auto& a : allowed)
                                                  list += (list.empty() ? "" : ", ") + a;
                                              throw ParseError(line, key, "'" + v + "' is not one of: " + list);
                                          }
                                          ref = v;
                                      },
                                      [&ref] { return ref; }}});
    }

    void text(const std::string& key, std::string& ref)
    {
        entries.push_back({key, Entry{[&ref, key](const std::string& v, int line) {
                                          if (v.empty())
                                              throw ParseError(line, key, "empty value");
                                          ref = v;
                                      },
                                      [&ref] { return ref; }}});
    }

    template <class T>
    void list(const std::string& key, std::vector<T>& ref)
    {
        entries.push_back({key, Entry{[&ref, key](const std::string& v, int line) {
                                          std::vector<T> out;
                                          std::stringstream ss(v);
                                          std::string item;
                                          while (std::getline(ss, item, ',')) {
                                              T x{};
                                              if (!parse_number(trim(item), x))
                                                  throw ParseError(line, key, "bad list entry '" + item + "'");
                                              out.push_back(x);
                                          }
                                          if (out.empty())
                                              throw ParseError(line, key, "empty list");
                                          ref = std::move(out);
                                      },
                                      [&ref] { return join(ref); }}});
    }

    const Entry* find(const std::string& key) const
    {
        for (const auto& [k, e] : entries)
            if (k == key)
                return &e;
        return nullptr;
    }
};

inline KeyTable key_table(RunConfig& c)
{
    KeyTable t;
    t.choice("mode", c.mode, {"sixth", "fourth", "phasefield"});
    t.list("cells", c.cells);
    t.list("lengths", c.lengths);
    t.choice("bc", c.bc, {"noflux", "periodic"});
    t.choice("potential", c.potential, {"logarithmic", "sixth", "linear"});
    t.num("lambda", c.lambda);
    t.num("h0", c.h0);
    t.num("linear_coeff", c.linear_coeff);
    t.num("delta", c.delta);
    t.num("epsilon", c.epsilon);
    t.num("sigma", c.sigma);
    t.num("mobility", c.mobility);
    t.choice("coefficient", c.coefficient, {"constant", "even_quadratic", "general_quadratic"});
    t.num("a_const", c.a_const);
    t.num("g0", c.g0);
    t.num("g2", c.g2);
    t.num("a0", c.a0);
    t.num("a1", c.a1);
    t.num("a2", c.a2);
    t.choice("gradient_form", c.gradient_form, {"variational", "pointwise"});
    t.num("tau", c.tau);
    t.num("t_end", c.t_end);
    t.num("newton_tol", c.newton_tol);
    t.num("newton_max", c.newton_max);
    t.num("krylov_tol", c.krylov_tol);
    t.num("krylov_max", c.krylov_max);
    t.num("krylov_restart", c.krylov_restart);
    t.num("tau_min", c.tau_min);
    t.flag("domain_guard", c.domain_guard);
    t.num("energy_slack", c.energy_slack);
    t.choice("preconditioner", c.preconditioner, {"sparse_lu", "spectral"});
    t.choice("initial", c.initial, {"constant", "noise", "cosine", "tanh"});
    t.num("initial_mean", c.initial_mean);
    t.num("initial_amplitude", c.initial_amplitude);
    t.num("initial_seed", c.initial_seed);
    t.num("initial_k", c.initial_k);
    t.num("initial_position", c.initial_position);
    t.num("initial_width", c.initial_width);
    t.choice("smoothing", c.smoothing, {"none", "h1", "h2"});
    t.num("smoothing_sigma", c.smoothing_sigma);
    t.text("output_dir", c.output_dir);
    t.num("diagnostics_every", c.diagnostics_every);
    t.num("checkpoint_every", c.checkpoint_every);
    t.num("snapshot_every", c.snapshot_every);
    return t;
}

} // namespace detail

inline Domain RunConfig::domain() const
{
    const int dim = static_cast<int>(cells.size());
    if (dim < 1 || dim > 3)
        throw ValidationError({"cells"}, "cells must list 1 to 3 axis counts");
    if (!lengths.empty() && lengths.size() != cells.size())
        throw ValidationError({"cells", "lengths"}, "lengths must have one entry per axis of cells");
    std::array<int, 3> c{1, 1, 1};
    std::array<double, 3> l{1.0, 1.0, 1.0};
    for (int d = 0; d < dim; ++d) {
        if (cells[d] < 4)
            throw ValidationError({"cells"}, "cells must be >= 4 per axis");
        c[d] = cells[d];
        if (!lengths.empty()) {
            if (!(lengths[d] > 0.0))
                throw ValidationError({"lengths"}, "lengths must be > 0");
            l[d] = lengths[d];
        }
    }
    return Domain(dim, c, l, bc == "periodic" ? Boundary::Periodic : Boundary::NoFlux);
}

inline ModelParams RunConfig::model() const
{
    ModelParams p;
    p.delta = delta;
    p.epsilon = epsilon;
    p.sigma = sigma;
    p.mobility = mobility;
    if (mode.empty())
        throw ValidationError({"mode"}, "mode is required");
    p.mode = mode == "sixth" ? Mode::Sixth : mode == "fourth" ? Mode::Fourth : Mode::PhaseField;
    p.gradient_form = gradient_form == "pointwise" ? GradientForm::Pointwise : GradientForm::Variational;
    try {
        if (potential == "logarithmic")
            p.potential = PotentialSpec::logarithmic(lambda);
        else if (potential == "sixth")
            p.potential = PotentialSpec::sixth_polynomial(h0, lambda);
        else
            p.potential = PotentialSpec::linear(linear_coeff, lambda);
    } catch (const std::invalid_argument& e) {
        throw ValidationError({"potential", "lambda", "h0"}, e.what());
    }
    try {
        if (coefficient == "constant")
            p.coefficient = CoefficientSpec::constant(a_const);
        else if (coefficient == "even_quadratic")
            p.coefficient = CoefficientSpec::even_quadratic(g0, g2);
        else
            p.coefficient = CoefficientSpec::general_quadratic(a0, a1, a2);
    } catch (const std::invalid_argument& e) {
        throw ValidationError({"coefficient"}, e.what());
    }
    return p;
}

inline StepperConfig RunConfig::stepper() const
{
    StepperConfig s;
    s.tau = tau;
    s.t_end = t_end;
    s.newton_tol = newton_tol;
    s.newton_max = newton_max;
    s.krylov_tol = krylov_tol;
    s.krylov_max = krylov_max;
    s.krylov_restart = krylov_restart;
    s.tau_min = tau_min;
    s.domain_guard = domain_guard;
    s.accept_energy_slack = energy_slack;
    s.preconditioner = preconditioner == "spectral" ? Preconditioner::Spectral : Preconditioner::SparseLU;
    return s;
}

inline InitialKind RunConfig::initial_kind() const
{
    if (initial == "constant")
        return init::Constant{initial_mean};
    if (initial == "noise")
        return init::SeededNoise{initial_mean, initial_amplitude, initial_seed};
    if (initial == "cosine")
        return init::CosineMode{initial_mean, initial_amplitude, initial_k};
    return init::TanhInterface{initial_position, initial_width};
}

inline Field RunConfig::initial_field() const
{
    const Domain dom = domain();
    const bool singular = model().potential.singular();
    Field u;
    try {
        u = make_initial(initial_kind(), dom, singular);
        if (smoothing != "none")
            u = smooth_initial_datum(u, smoothing_sigma, smoothing == "h1" ? 1 : 2);
    } catch (const MeanOutOfRange& e) {
        throw ValidationError({"initial_mean"}, e.what());
    } catch (const AmplitudeTooLarge& e) {
        throw ValidationError({"initial_amplitude"}, e.what());
    } catch (const std::invalid_argument& e) {
        throw ValidationError({"initial", "smoothing_sigma"}, e.what());
    }
    return u;
}

inline Scenario RunConfig::scenario() const
{
    Scenario s;
    s.domain = domain();
    s.params = model();
    s.stepper = stepper();
    s.initial = initial_kind();
    s.diagnostics_every = diagnostics_every;
    return s;
}

inline void RunConfig::validate() const
{
    domain();
    const ModelParams p = model();
    p.validate(domain_guard);
    stepper().validate();
    if (diagnostics_every < 1)
        throw ValidationError({"diagnostics_every"}, "diagnostics_every must be >= 1");
    if (checkpoint_every < 0)
        throw ValidationError({"checkpoint_every"}, "checkpoint_every must be >= 0");
    if (snapshot_every < 0)
        throw ValidationError({"snapshot_every"}, "snapshot_every must be >= 0");
    if (initial_k < 0)
        throw ValidationError({"initial_k"}, "initial_k must be >= 0");
    if (initial == "tanh" && !(initial_width > 0.0))
        throw ValidationError({"initial_width"}, "initial_width must be > 0");
    if (smoothing != "none" && !(smoothing_sigma > 0.0))
        throw ValidationError({"smoothing_sigma"}, "smoothing_sigma must be > 0");
    initial_field();
}

inline RunConfig parse_config_text(const std::string& text)
{
    RunConfig c;
    auto table = detail::key_table(c);
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string body = detail::trim(std::string_view(raw).substr(0, hash));
        if (body.empty())
            continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ParseError(line, "", "expected key=value");
        const std::string key = detail::trim(std::string_view(body).substr(0, eq));
        const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
        const auto* entry = table.find(key);
        if (!entry)
            throw ParseError(line, key, "unknown key");
        if (!seen.insert(key).second)
            throw ParseError(line, key, "duplicate key");
        entry->set(value, line);
    }
    if (!seen.count("mode"))
        throw ValidationError({"mode"}, "mode is required");
    if (!seen.count("cells"))
        throw ValidationError({"cells"}, "cells is required");
    c.validate();
    return c;
}

inline RunConfig parse_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ParseError(0, "", "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// Canonical form: every key, table order, doubles with 17 significant digits.
inline std::string serialize_config(const RunConfig& c)
{
    RunConfig copy = c;
    const auto table = detail::key_table(copy);
    std::string out;
    for (const auto& [key, entry] : table.entries) {
        if (key == "lengths" && copy.lengths.empty())
            continue;
        out += key + "=" + entry.get() + "\n";
    }
    return out;
}

} // namespace nlch
