#include "pssgm/run_config.hpp"

#include <set>

#include <json.hpp>

#include "pssgm/text_io.hpp"

namespace pssgm {

namespace {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

// Reads keys out of one JSON object and rejects anything left unread.
class Section {
public:
    Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw Error(ErrorKind::schema_violation, path_ + " must be an object");
    }

    ~Section() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [key, _] : obj_.items()) {
            if (!used_.count(key)) {
                throw Error(ErrorKind::schema_violation, "unknown key '" + path_ + "." + key + "'");
            }
        }
    }

    template <class T>
    void get(const char* key, T& out) {
        used_.insert(key);
        if (!obj_.contains(key)) return;
        try {
            out = obj_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw Error(ErrorKind::schema_violation, path_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        used_.insert(key);
        return obj_.contains(key) ? &obj_.at(key) : nullptr;
    }

    std::string path(const char* key) const { return path_ + "." + key; }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> used_;
};

MixtureSpec parse_mixture(const json& j, const std::string& path) {
    Section s(j, path);
    std::vector<double> weights;
    std::vector<std::vector<double>> means;
    std::vector<std::vector<std::vector<double>>> covs;
    s.get("weights", weights);
    s.get("means", means);
    s.get("covariances", covs);
    if (weights.empty() || weights.size() != means.size() || weights.size() != covs.size()) {
        throw Error(ErrorKind::schema_violation, path + ": weights, means and covariances need equal nonzero length");
    }
    std::vector<MixtureComponent> comps;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const auto d = static_cast<Eigen::Index>(means[i].size());
        MixtureComponent c{weights[i], Eigen::VectorXd(d), Eigen::MatrixXd(d, d)};
        for (Eigen::Index a = 0; a < d; ++a) c.mean[a] = means[i][static_cast<std::size_t>(a)];
        if (covs[i].size() != static_cast<std::size_t>(d)) {
            throw Error(ErrorKind::schema_violation, path + ": covariance " + std::to_string(i) + " has wrong shape");
        }
        for (Eigen::Index a = 0; a < d; ++a) {
            if (covs[i][static_cast<std::size_t>(a)].size() != static_cast<std::size_t>(d)) {
                throw Error(ErrorKind::schema_violation, path + ": covariance " + std::to_string(i) + " has wrong shape");
            }
            for (Eigen::Index b = 0; b < d; ++b) {
                c.cov(a, b) = covs[i][static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
            }
        }
        comps.push_back(std::move(c));
    }
    return MixtureSpec(std::move(comps));
}

ojson mixture_json(const MixtureSpec& m) {
    ojson j;
    j["weights"] = ojson::array();
    j["means"] = ojson::array();
    j["covariances"] = ojson::array();
    for (const auto& c : m.components()) {
        j["weights"].push_back(c.weight);
        std::vector<double> mu(c.mean.data(), c.mean.data() + c.mean.size());
        j["means"].push_back(mu);
        ojson cov = ojson::array();
        for (Eigen::Index a = 0; a < c.cov.rows(); ++a) {
            std::vector<double> row;
            for (Eigen::Index b = 0; b < c.cov.cols(); ++b) row.push_back(c.cov(a, b));
            cov.push_back(row);
        }
        j["covariances"].push_back(cov);
    }
    return j;
}

json parse_json(std::string_view text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::schema_violation, what + ": " + e.what());
    }
}

RunConfig parse_checked(std::string_view json_text) {
    const json root = parse_json(json_text, "config");
    RunConfig cfg;
    Section top(root, "config");

    if (const json* j = top.child("topology")) {
        Section s(*j, "topology");
        auto& t = cfg.topology;
        std::string metric(to_string(t.metric));
        s.get("kind", t.kind);
        s.get("n", t.n);
        s.get("rows", t.rows);
        s.get("cols", t.cols);
        s.get("range", t.range);
        s.get("metric", metric);
        t.metric = parse_metric(metric);
        if (t.kind != "complete" && t.kind != "grid") {
            throw Error(ErrorKind::schema_violation, "topology.kind must be 'complete' or 'grid'");
        }
    }
    if (const json* j = top.child("mixture")) cfg.mixture = parse_mixture(*j, "mixture");
    if (const json* j = top.child("mnist")) {
        Section s(*j, "mnist");
        MnistConfig m;
        s.get("images", m.images);
        s.get("labels", m.labels);
        s.get("classes", m.options.classes);
        s.get("side", m.options.side);
        s.get("x_lo", m.options.map.lo);
        s.get("x_hi", m.options.map.hi);
        s.get("binarize", m.options.binarize);
        s.get("max_images", m.options.max_images);
        cfg.mnist = std::move(m);
    }
    if (const json* j = top.child("train")) {
        Section s(*j, "train");
        auto& t = cfg.train;
        std::string spacing = t.spacing == GridSpacing::uniform ? "uniform" : "geometric";
        std::string optimizer(to_string(t.optimizer));
        std::string rule(to_string(cfg.rule));
        std::vector<std::string> trainable;
        s.get("kbt", t.kbt);
        s.get("tau", t.tau);
        s.get("n_times", t.n_times);
        s.get("t_min", t.t_min);
        s.get("spacing", spacing);
        s.get("spacing_ratio", t.spacing_ratio);
        s.get("batch_size", t.batch_size);
        s.get("steps_per_time", t.steps_per_time);
        s.get("learning_rate", t.learning_rate);
        s.get("optimizer", optimizer);
        s.get("adam_b1", t.adam.b1);
        s.get("adam_b2", t.adam.b2);
        s.get("adam_eps", t.adam.eps);
        s.get("gamma_min", t.gamma_min);
        s.get("log_every", t.log_every);
        s.get("rule", rule);
        s.get("trainable", trainable);
        if (const json* ij = s.child("init")) {
            Section is(*ij, s.path("init"));
            is.get("alpha", t.init.alpha);
            is.get("beta", t.init.beta);
            is.get("gamma", t.init.gamma);
            is.get("f_ext", t.init.f_ext);
            is.get("kappa", t.init.kappa);
            is.get("lambda", t.init.lambda);
            is.get("chi", t.init.chi);
            is.get("chi_hat", t.init.chi_hat);
        }
        if (const json* cj = s.child("cd1")) {
            Section cs(*cj, s.path("cd1"));
            cs.get("delta", cfg.cd1.delta);
            cs.get("n_noise", cfg.cd1.n_noise);
            cs.get("antithetic", cfg.cd1.antithetic);
        }
        if (spacing == "uniform") {
            t.spacing = GridSpacing::uniform;
        } else if (spacing == "geometric") {
            t.spacing = GridSpacing::geometric;
        } else {
            throw Error(ErrorKind::schema_violation, "train.spacing must be 'uniform' or 'geometric'");
        }
        t.optimizer = parse_optimizer(optimizer);
        cfg.rule = parse_rule(rule);
        if (s.child("trainable")) {
            t.trainable.fill(false);
            for (const auto& k : trainable) t.trainable[static_cast<std::size_t>(parse_param_kind(k))] = true;
        }
    }
    if (const json* j = top.child("integrate")) {
        Section s(*j, "integrate");
        auto& ic = cfg.integrate;
        std::string init = ic.init == ReverseInit::exact_gaussian ? "exact" : "relax";
        s.get("dt", ic.dt);
        s.get("init", init);
        s.get("relax_time", ic.relax_time);
        s.get("workers", ic.workers);
        if (init == "exact") {
            ic.init = ReverseInit::exact_gaussian;
        } else if (init == "relax") {
            ic.init = ReverseInit::relaxation;
        } else {
            throw Error(ErrorKind::schema_violation, "integrate.init must be 'exact' or 'relax'");
        }
    }
    if (const json* j = top.child("eval")) {
        Section s(*j, "eval");
        s.get("bins", cfg.eval.bins);
        s.get("grid_resolution", cfg.eval.grid_resolution);
        s.get("grid_lo", cfg.eval.grid_lo);
        s.get("grid_hi", cfg.eval.grid_hi);
    }
    if (const json* j = top.child("seeds")) {
        Section s(*j, "seeds");
        s.get("seed", cfg.seed);
    }
    cfg.train.validate();
    cfg.cd1.validate();
    return cfg;
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text) {
    try {
        return parse_checked(json_text);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::schema_violation) throw;
        throw Error(ErrorKind::schema_violation, e.what());
    }
}

RunConfig load_run_config(const std::filesystem::path& path) {
    try {
        return parse_run_config(read_file(path));
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::io) throw;
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

std::string resolved_config_json(const RunConfig& cfg) {
    ojson j;
    const auto& t = cfg.topology;
    j["topology"] = {{"kind", t.kind}, {"n", t.n}, {"rows", t.rows}, {"cols", t.cols},
                     {"range", t.range}, {"metric", std::string(to_string(t.metric))}};
    if (cfg.mixture) j["mixture"] = mixture_json(*cfg.mixture);
    if (cfg.mnist) {
        const auto& m = *cfg.mnist;
        j["mnist"] = {{"images", m.images},
                      {"labels", m.labels},
                      {"classes", m.options.classes},
                      {"side", m.options.side},
                      {"x_lo", m.options.map.lo},
                      {"x_hi", m.options.map.hi},
                      {"binarize", m.options.binarize},
                      {"max_images", m.options.max_images}};
    }
    const auto& tr = cfg.train;
    std::vector<std::string> trainable;
    for (ParamKind k : all_param_kinds) {
        if (tr.is_trainable(k)) trainable.emplace_back(to_string(k));
    }
    j["train"] = {{"kbt", tr.kbt},
                  {"tau", tr.tau},
                  {"n_times", tr.n_times},
                  {"t_min", tr.t_min},
                  {"spacing", tr.spacing == GridSpacing::uniform ? "uniform" : "geometric"},
                  {"spacing_ratio", tr.spacing_ratio},
                  {"batch_size", tr.batch_size},
                  {"steps_per_time", tr.steps_per_time},
                  {"learning_rate", tr.learning_rate},
                  {"optimizer", std::string(to_string(tr.optimizer))},
                  {"adam_b1", tr.adam.b1},
                  {"adam_b2", tr.adam.b2},
                  {"adam_eps", tr.adam.eps},
                  {"gamma_min", tr.gamma_min},
                  {"log_every", tr.log_every},
                  {"rule", std::string(to_string(cfg.rule))},
                  {"trainable", trainable},
                  {"init",
                   {{"alpha", tr.init.alpha},
                    {"beta", tr.init.beta},
                    {"gamma", tr.init.gamma},
                    {"f_ext", tr.init.f_ext},
                    {"kappa", tr.init.kappa},
                    {"lambda", tr.init.lambda},
                    {"chi", tr.init.chi},
                    {"chi_hat", tr.init.chi_hat}}},
                  {"cd1", {{"delta", cfg.cd1.delta}, {"n_noise", cfg.cd1.n_noise}, {"antithetic", cfg.cd1.antithetic}}}};
    const auto& ic = cfg.integrate;
    j["integrate"] = {{"dt", ic.dt},
                      {"init", ic.init == ReverseInit::exact_gaussian ? "exact" : "relax"},
                      {"relax_time", ic.relax_time},
                      {"workers", ic.workers}};
    j["eval"] = {{"bins", cfg.eval.bins},
                 {"grid_resolution", cfg.eval.grid_resolution},
                 {"grid_lo", cfg.eval.grid_lo},
                 {"grid_hi", cfg.eval.grid_hi}};
    j["seeds"] = {{"seed", cfg.seed}};
    return j.dump(2) + "\n";
}

Topology make_topology(const TopologyConfig& cfg, std::size_t data_dim) {
    Topology topo = cfg.kind == "grid" ? Topology::grid(cfg.rows, cfg.cols, cfg.range, cfg.metric)
                                       : Topology::complete(cfg.n == 0 ? data_dim : cfg.n);
    if (topo.size() != data_dim) {
        throw Error(ErrorKind::dimension_mismatch, "topology has " + std::to_string(topo.size()) +
                                                       " oscillators but the data has " +
                                                       std::to_string(data_dim) + " columns");
    }
    return topo;
}

MixtureSpec load_mixture_spec(const std::filesystem::path& path) {
    const json root = parse_json(read_file(path), path.string());
    if (root.is_object() && root.contains("mixture")) return parse_run_config(root.dump()).mixture.value();
    return parse_mixture(root, "mixture");
}

}  // namespace pssgm
