#include "calderon/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "calderon/error.hpp"

namespace calderon {

using nlohmann::json;

namespace {

json toml_to_json(const toml::node& node)
{
    if (auto t = node.as_table()) {
        json out = json::object();
        for (const auto& [k, v] : *t)
            out[std::string(k.str())] = toml_to_json(v);
        return out;
    }
    if (auto a = node.as_array()) {
        json out = json::array();
        for (const auto& v : *a)
            out.push_back(toml_to_json(v));
        return out;
    }
    if (auto v = node.as_string())
        return v->get();
    if (auto v = node.as_integer())
        return v->get();
    if (auto v = node.as_floating_point())
        return v->get();
    if (auto v = node.as_boolean())
        return v->get();
    throw ConfigError("unsupported TOML value type (dates are not accepted)");
}

// Reads one section, rejecting keys it does not know.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name))
    {
        if (!j_.is_object())
            throw ConfigError("'" + name_ + "' must be a table");
    }

    ~Section() noexcept(false)
    {
        if (std::uncaught_exceptions())
            return;
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k))
                throw ConfigError("unknown key '" + where(k) + "'");
    }

    bool has(const std::string& k)
    {
        seen_.insert(k);
        return j_.contains(k);
    }

    const json& at(const std::string& k) { return seen_.insert(k), j_.at(k); }

    template <class T>
    void read(const std::string& k, T& out)
    {
        if (!has(k))
            return;
        try {
            out = j_.at(k).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("bad value for '" + where(k) + "'");
        }
    }

    void number(const std::string& k, double& out)
    {
        if (!has(k))
            return;
        if (!j_.at(k).is_number())
            throw ConfigError("'" + where(k) + "' must be a number");
        out = j_.at(k).get<double>();
    }

    void count(const std::string& k, long& out)
    {
        if (!has(k))
            return;
        if (!j_.at(k).is_number_integer())
            throw ConfigError("'" + where(k) + "' must be an integer");
        out = j_.at(k).get<long>();
    }

    void numbers(const std::string& k, std::vector<double>& out)
    {
        if (!has(k))
            return;
        const json& a = j_.at(k);
        if (!a.is_array())
            throw ConfigError("'" + where(k) + "' must be an array of numbers");
        out.clear();
        for (const auto& v : a) {
            if (!v.is_number())
                throw ConfigError("'" + where(k) + "' must be an array of numbers");
            out.push_back(v.get<double>());
        }
    }

    std::string where(const std::string& k) const { return name_.empty() ? k : name_ + "." + k; }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& message)
{
    if (!ok)
        throw ConfigError(message);
}

void require_increasing(const std::vector<double>& v, const std::string& name, double min_value)
{
    require(!v.empty(), name + " must not be empty");
    for (size_t i = 0; i < v.size(); ++i) {
        require(v[i] >= min_value, name + " entries must be at least " + std::to_string(min_value));
        require(i == 0 || v[i] > v[i - 1], name + " must be increasing");
    }
}

void validate(const ExperimentConfig& c)
{
    require(c.domain.kind == "disk" || c.domain.kind == "perturbed", "domain.kind must be 'disk' or 'perturbed'");
    require(c.theta > 0.0 && c.theta < 1.0, "theta must lie in (0, 1)");
    require(!c.seeds.empty(), "seeds must not be empty");
    require(c.noise.K >= 0, "noise.K must be 'auto' or positive");
    require(c.solver.mode == "fem" || c.solver.mode == "analytic", "solver.mode must be 'fem' or 'analytic'");
    require(c.solver.tolerance > 0.0 && c.solver.tolerance < 1.0, "solver.tolerance must lie in (0, 1)");
    require(c.solver.ppw >= 2.0, "solver.ppw must be at least 2");
    require(c.solver.h_far > 0.0 && c.solver.h_far <= 1.0, "solver.h_far must lie in (0, 1]");
    require(c.solver.max_triangles >= 100, "solver.max_triangles must be at least 100");
    require(c.solver.depth_factor > 0.0, "solver.depth_factor must be positive");
    require_increasing(c.gamma.N, "gamma.N", 1.0);
    require_increasing(c.grad.N, "grad.N", 1.0);
    require(c.grad.Q >= 0, "grad.Q must be nonnegative");
    require(c.grad.gamma_boundary == "truth" || c.grad.gamma_boundary == "stage1",
            "grad.gamma_boundary must be 'truth' or 'stage1'");
    require(c.grad.stage1_offsets.size() >= 3, "grad.stage1_offsets needs at least three points");
    require(c.noise_stats.K >= 1 && c.noise_stats.seeds >= 2 && c.noise_stats.pairs >= 1 && c.noise_stats.band >= 0,
            "noise_stats needs K >= 1, seeds >= 2, pairs >= 1, band >= 0");
    require(basis_count_covering(c.noise_stats.band) <= c.noise_stats.K, "noise_stats.band must fit inside K");
    require_increasing(c.noise_stats.T, "noise_stats.T", 1.0);
    require(c.noise_stats.filtering_seeds >= 2, "noise_stats.filtering_seeds must be at least 2");
    require(c.rates.mode == "gamma" || c.rates.mode == "grad", "rates.mode must be 'gamma' or 'grad'");
    require_increasing(c.rates.N, "rates.N", 1.0);
    require(c.rates.N.size() >= 4, "rates.N needs at least four entries");
    require_increasing(c.rates.quantile_N, "rates.quantile_N", 1.0);
    require(c.rates.seeds >= 1 && c.rates.margin > 0.0, "rates needs seeds >= 1 and margin > 0");
    require(c.validate.h > 0.0 && c.validate.max_mode >= 1 && c.validate.tolerance > 0.0,
            "validate needs h > 0, max_mode >= 1, tolerance > 0");
    WindowPolicy::parse(c.t_override);
    // Builds the field to surface a nonpositive lower bound as a config error.
    make_conductivity(c);
    make_domain(c);
}

} // namespace

ExperimentConfig config_from_json(const json& j)
{
    ExperimentConfig c;
    Section top(j, "");
    top.number("anchor", c.anchor);
    top.number("theta", c.theta);
    top.read("t_override", c.t_override);
    top.read("output", c.output);
    if (top.has("seeds")) {
        const json& s = top.at("seeds");
        c.seeds.clear();
        if (s.is_array()) {
            for (const auto& v : s) {
                require(v.is_number_integer() && v.get<long long>() >= 0, "seeds must be nonnegative integers");
                c.seeds.push_back(v.get<std::uint64_t>());
            }
        } else if (s.is_object()) {
            Section ss(s, "seeds");
            long start = 1, count = 1;
            ss.count("start", start);
            ss.count("count", count);
            require(start >= 0 && count >= 1, "seeds.start must be >= 0 and seeds.count >= 1");
            for (long i = 0; i < count; ++i)
                c.seeds.push_back(std::uint64_t(start + i));
        } else {
            throw ConfigError("seeds must be an array or a {start, count} table");
        }
    }
    if (top.has("domain")) {
        Section s(top.at("domain"), "domain");
        s.read("kind", c.domain.kind);
        if (s.has("modes")) {
            const json& modes = s.at("modes");
            require(modes.is_array(), "domain.modes must be an array of tables");
            for (const auto& m : modes) {
                Section ms(m, "domain.modes");
                RadialMode r;
                long k = 0;
                ms.count("k", k);
                ms.number("a", r.a);
                ms.number("b", r.b);
                r.k = int(k);
                require(k >= 1, "domain.modes.k must be at least 1");
                c.domain.modes.push_back(r);
            }
        }
    }
    if (top.has("conductivity")) {
        Section s(top.at("conductivity"), "conductivity");
        s.read("name", c.conductivity.name);
        if (s.has("params")) {
            const json& p = s.at("params");
            require(p.is_object(), "conductivity.params must be a table");
            c.conductivity.params.clear();
            for (const auto& [k, v] : p.items()) {
                require(v.is_number(), "conductivity.params." + k + " must be a number");
                c.conductivity.params[k] = v.get<double>();
            }
        }
    }
    if (top.has("noise")) {
        Section s(top.at("noise"), "noise");
        s.read("enabled", c.noise.enabled);
        if (s.has("seed")) {
            require(s.at("seed").is_number_integer() && s.at("seed").get<long long>() >= 0,
                    "noise.seed must be a nonnegative integer");
            c.noise.seed = s.at("seed").get<std::uint64_t>();
            if (!top.has("seeds"))
                c.seeds = {c.noise.seed};
        }
        if (s.has("K")) {
            const json& k = s.at("K");
            if (k.is_string()) {
                require(k.get<std::string>() == "auto", "noise.K must be 'auto' or a positive integer");
                c.noise.K = 0;
            } else {
                require(k.is_number_integer() && k.get<long>() >= 1, "noise.K must be 'auto' or a positive integer");
                c.noise.K = k.get<long>();
            }
        }
    }
    if (top.has("solver")) {
        Section s(top.at("solver"), "solver");
        s.read("mode", c.solver.mode);
        s.number("tolerance", c.solver.tolerance);
        s.number("ppw", c.solver.ppw);
        s.number("h_far", c.solver.h_far);
        s.number("collar", c.solver.collar);
        s.number("depth_factor", c.solver.depth_factor);
        s.count("max_triangles", c.solver.max_triangles);
    }
    if (top.has("gamma")) {
        Section s(top.at("gamma"), "gamma");
        s.numbers("N", c.gamma.N);
    }
    if (top.has("grad")) {
        Section s(top.at("grad"), "grad");
        s.numbers("N", c.grad.N);
        s.count("Q", c.grad.Q);
        s.read("extrapolate", c.grad.extrapolate);
        s.read("gamma_boundary", c.grad.gamma_boundary);
        s.number("stage1_N", c.grad.stage1_N);
        s.numbers("stage1_offsets", c.grad.stage1_offsets);
    }
    if (top.has("noise_stats")) {
        Section s(top.at("noise_stats"), "noise_stats");
        s.count("K", c.noise_stats.K);
        s.count("seeds", c.noise_stats.seeds);
        s.count("pairs", c.noise_stats.pairs);
        s.count("band", c.noise_stats.band);
        s.numbers("T", c.noise_stats.T);
        s.count("filtering_seeds", c.noise_stats.filtering_seeds);
    }
    if (top.has("rates")) {
        Section s(top.at("rates"), "rates");
        s.read("mode", c.rates.mode);
        s.numbers("N", c.rates.N);
        s.numbers("quantile_N", c.rates.quantile_N);
        s.count("seeds", c.rates.seeds);
        s.number("margin", c.rates.margin);
    }
    if (top.has("validate")) {
        Section s(top.at("validate"), "validate");
        s.number("h", c.validate.h);
        s.count("max_mode", c.validate.max_mode);
        s.number("tolerance", c.validate.tolerance);
        s.number("alpha", c.validate.alpha);
    }
    validate(c);
    return c;
}

json ExperimentConfig::to_json() const
{
    json modes = json::array();
    for (const auto& m : domain.modes)
        modes.push_back({{"k", m.k}, {"a", m.a}, {"b", m.b}});
    json params = json::object();
    for (const auto& [k, v] : conductivity.params)
        params[k] = v;
    return {
        {"anchor", anchor},
        {"theta", theta},
        {"seeds", seeds},
        {"t_override", t_override},
        {"output", output},
        {"domain", {{"kind", domain.kind}, {"modes", modes}}},
        {"conductivity", {{"name", conductivity.name}, {"params", params}}},
        {"noise", {{"enabled", noise.enabled}, {"seed", noise.seed}, {"K", noise.K > 0 ? json(noise.K) : json("auto")}}},
        {"solver",
         {{"mode", solver.mode},
          {"tolerance", solver.tolerance},
          {"ppw", solver.ppw},
          {"h_far", solver.h_far},
          {"collar", solver.collar},
          {"depth_factor", solver.depth_factor},
          {"max_triangles", solver.max_triangles}}},
        {"gamma", {{"N", gamma.N}}},
        {"grad",
         {{"N", grad.N},
          {"Q", grad.Q},
          {"extrapolate", grad.extrapolate},
          {"gamma_boundary", grad.gamma_boundary},
          {"stage1_N", grad.stage1_N},
          {"stage1_offsets", grad.stage1_offsets}}},
        {"noise_stats",
         {{"K", noise_stats.K},
          {"seeds", noise_stats.seeds},
          {"pairs", noise_stats.pairs},
          {"band", noise_stats.band},
          {"T", noise_stats.T},
          {"filtering_seeds", noise_stats.filtering_seeds}}},
        {"rates",
         {{"mode", rates.mode},
          {"N", rates.N},
          {"quantile_N", rates.quantile_N},
          {"seeds", rates.seeds},
          {"margin", rates.margin}}},
        {"validate",
         {{"h", validate.h},
          {"max_mode", validate.max_mode},
          {"tolerance", validate.tolerance},
          {"alpha", validate.alpha}}},
    };
}

std::uint64_t fnv1a(const std::string& bytes)
{
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::string ExperimentConfig::hash() const
{
    json j = to_json();
    j.erase("output");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

ExperimentConfig parse_config(const std::string& text)
{
    const size_t first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("JSON parse error: ") + e.what());
        }
        return config_from_json(j);
    }
    try {
        const toml::table t = toml::parse(text);
        return config_from_json(toml_to_json(t));
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "TOML parse error: " << e.description() << " at line " << e.source().begin.line;
        throw ConfigError(msg.str());
    }
}

ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

DomainGeometry make_domain(const ExperimentConfig& c)
{
    if (c.domain.kind == "disk") {
        if (!c.domain.modes.empty())
            throw ConfigError("domain.modes requires domain.kind = 'perturbed'");
        return DomainGeometry::unit_disk();
    }
    return DomainGeometry::perturbed_disk(c.domain.modes);
}

ConductivityField make_conductivity(const ExperimentConfig& c)
{
    return builtin_field(c.conductivity.name, c.conductivity.params);
}

CleanOracle make_oracle(const ExperimentConfig& c)
{
    MeshPolicy policy;
    policy.h_far = c.solver.h_far;
    policy.ppw = c.solver.ppw;
    policy.collar = c.solver.collar;
    policy.depth_factor = c.solver.depth_factor;
    policy.max_triangles = c.solver.max_triangles;
    SolverSettings settings;
    settings.tolerance = c.solver.tolerance;
    const OracleMode mode = c.solver.mode == "analytic" ? OracleMode::AnalyticDisk : OracleMode::Fem;
    return CleanOracle(make_domain(c), make_conductivity(c), policy, mode, settings);
}

ProbeSpec make_spec(const ExperimentConfig& c, const DomainGeometry& domain, ProbeMode mode)
{
    const BoundaryChart chart = build_chart(domain, c.anchor);
    return make_probe_spec(chart, select_xi(chart), c.theta, mode);
}

} // namespace calderon
