#include "netdyn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "netdyn/common.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace netdyn {

// ---------------------------------------------------------------------------
// Config parsing with strict schema validation
// ---------------------------------------------------------------------------

namespace {

void check_keys(const json& j, const std::string& block,
                std::initializer_list<const char*> allowed) {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key()))
            throw ConfigError("config: unknown key '" + it.key() + "' in " + block);
}

InitSpec parse_init(const json& j) {
    check_keys(j, "init", {"kind", "lo", "hi", "mu", "sigma", "value"});
    InitSpec init;
    const std::string kind = j.at("kind");
    if (kind == "uniform") {
        init.kind = InitSpec::Kind::Uniform;
        init.lo = j.at("lo");
        init.hi = j.at("hi");
    } else if (kind == "gaussian") {
        init.kind = InitSpec::Kind::Gaussian;
        init.mu = j.value("mu", 0.0);
        init.sigma = j.value("sigma", 1.0);
    } else if (kind == "constant") {
        init.kind = InitSpec::Kind::Constant;
        init.value = j.at("value");
    } else {
        throw ConfigError("config: unknown init kind '" + kind + "'");
    }
    return init;
}

std::vector<std::string> string_list(const json& j) {
    return j.get<std::vector<std::string>>();
}

}  // namespace

SimSettings DynamicsBlock::settings() const {
    SimSettings s = default_sim_settings(model);
    if (init) s.init = *init;
    if (dt) s.dt = *dt;
    if (t_inference) s.t_inference = *t_inference;
    if (t_end) s.t_end = *t_end;
    s.rtol = rtol;
    s.atol = atol;
    return s;
}

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& ex) {
        throw ConfigError(std::string("config: invalid JSON: ") + ex.what());
    }
    check_keys(j, "config root",
               {"seed", "topology", "dynamics", "corruption", "preprocess", "decoupler",
                "symreg", "evaluation", "termination", "bifurcation"});
    PipelineConfig cfg;
    cfg.seed = j.value("seed", 0ull);

    if (j.contains("topology")) {
        const json& jt = j["topology"];
        check_keys(jt, "topology", {"type", "n", "p", "m", "path", "weighted", "directed"});
        const std::string type = jt.value("type", "er");
        if (type == "er") {
            cfg.topology.type = TopologyBlock::Type::Er;
            cfg.topology.n = jt.at("n");
            cfg.topology.p = jt.at("p");
        } else if (type == "ba") {
            cfg.topology.type = TopologyBlock::Type::Ba;
            cfg.topology.n = jt.at("n");
            cfg.topology.m = jt.at("m");
        } else if (type == "file") {
            cfg.topology.type = TopologyBlock::Type::File;
            cfg.topology.path = jt.at("path");
            cfg.topology.weighted = jt.value("weighted", false);
            cfg.topology.directed = jt.value("directed", false);
            if (!fs::exists(cfg.topology.path))
                throw ConfigError("config: topology file does not exist: " + cfg.topology.path);
        } else {
            throw ConfigError("config: unknown topology type '" + type + "'");
        }
    }

    if (j.contains("dynamics")) {
        const json& jd = j["dynamics"];
        check_keys(jd, "dynamics",
                   {"model", "params", "init", "dt", "t_inference", "t_end", "rtol", "atol"});
        cfg.dynamics.model = model_from_string(jd.at("model"));
        if (jd.contains("params"))
            for (auto it = jd["params"].begin(); it != jd["params"].end(); ++it)
                cfg.dynamics.params[it.key()] = it.value().get<double>();
        if (jd.contains("init")) cfg.dynamics.init = parse_init(jd["init"]);
        if (jd.contains("dt")) cfg.dynamics.dt = jd["dt"].get<double>();
        if (jd.contains("t_inference")) cfg.dynamics.t_inference = jd["t_inference"].get<double>();
        if (jd.contains("t_end")) cfg.dynamics.t_end = jd["t_end"].get<double>();
        cfg.dynamics.rtol = jd.value("rtol", 1e-12);
        cfg.dynamics.atol = jd.value("atol", 1e-12);
    }

    if (j.contains("corruption")) {
        const json& jc = j["corruption"];
        check_keys(jc, "corruption", {"snr_db", "eta"});
        if (jc.contains("snr_db")) cfg.corruption.snr_db = jc["snr_db"].get<double>();
        cfg.corruption.eta = jc.value("eta", 0.0);
    }

    if (j.contains("preprocess")) {
        const json& jp = j["preprocess"];
        check_keys(jp, "preprocess",
                   {"s_steps", "lambda", "window", "polyorder", "interior_only", "smooth",
                    "select", "sa_iters", "sa_cooling", "val_ratio"});
        cfg.preprocess.s_steps = jp.value("s_steps", 100);
        cfg.preprocess.lambda = jp.value("lambda", 1.0);
        cfg.preprocess.window = jp.value("window", 7);
        cfg.preprocess.polyorder = jp.value("polyorder", 3);
        cfg.preprocess.interior_only = jp.value("interior_only", true);
        cfg.preprocess.smooth = jp.value("smooth", false);
        cfg.preprocess.select = jp.value("select", true);
        cfg.preprocess.sa_iters = jp.value("sa_iters", 200);
        cfg.preprocess.sa_cooling = jp.value("sa_cooling", 0.95);
        cfg.preprocess.val_ratio = jp.value("val_ratio", 0.2);
    }

    if (j.contains("decoupler")) {
        const json& jd = j["decoupler"];
        check_keys(jd, "decoupler",
                   {"hidden", "lr", "weight_decay", "epochs", "patience", "lambda",
                    "variance_centered", "standardize", "batch_timestamps",
                    "val_threshold_scale"});
        cfg.decoupler.hidden = jd.value("hidden", 50);
        cfg.decoupler.lr = jd.value("lr", 3e-3);
        cfg.decoupler.weight_decay = jd.value("weight_decay", 1e-3);
        cfg.decoupler.epochs = jd.value("epochs", 1000);
        cfg.decoupler.patience = jd.value("patience", 50);
        cfg.decoupler.lambda = jd.value("lambda", 0.1);
        cfg.decoupler.variance_centered = jd.value("variance_centered", true);
        cfg.decoupler.standardize = jd.value("standardize", true);
        cfg.decoupler.batch_timestamps = jd.value("batch_timestamps", 0);
        cfg.decoupler.val_threshold_scale = jd.value("val_threshold_scale", 1e-4);
    }

    if (j.contains("symreg")) {
        const json& js = j["symreg"];
        check_keys(js, "symreg",
                   {"backend", "self_library", "inter_library", "self_library_file",
                    "inter_library_file", "threshold", "threshold_inter", "operators",
                    "max_depth", "population", "iters", "n_raw", "k", "const_prune"});
        const std::string backend = js.value("backend", "search");
        if (backend == "sparse")
            cfg.symreg.backend = BackendConfig::Kind::Sparse;
        else if (backend == "search")
            cfg.symreg.backend = BackendConfig::Kind::Search;
        else
            throw ConfigError("config: unknown symreg backend '" + backend + "'");
        if (js.contains("self_library")) cfg.symreg.self_library = string_list(js["self_library"]);
        if (js.contains("inter_library"))
            cfg.symreg.inter_library = string_list(js["inter_library"]);
        cfg.symreg.self_library_file = js.value("self_library_file", std::string());
        cfg.symreg.inter_library_file = js.value("inter_library_file", std::string());
        cfg.symreg.threshold = js.value("threshold", 0.05);
        cfg.symreg.threshold_inter = js.value("threshold_inter", -1.0);
        if (js.contains("operators")) cfg.symreg.operators = string_list(js["operators"]);
        cfg.symreg.max_depth = js.value("max_depth", 5);
        cfg.symreg.population = js.value("population", 400);
        cfg.symreg.iters = js.value("iters", 40);
        cfg.symreg.n_raw = js.value("n_raw", 10000);
        cfg.symreg.k = js.value("k", 512);
        cfg.symreg.const_prune = js.value("const_prune", 1e-3);
    }

    if (j.contains("evaluation")) {
        const json& je = j["evaluation"];
        check_keys(je, "evaluation",
                   {"library_self", "library_inter", "true_self_coeffs", "true_inter_coeffs",
                    "ned_max_samples"});
        if (je.contains("library_self")) cfg.evaluation.library_self = string_list(je["library_self"]);
        if (je.contains("library_inter"))
            cfg.evaluation.library_inter = string_list(je["library_inter"]);
        if (je.contains("true_self_coeffs"))
            cfg.evaluation.true_self_coeffs = je["true_self_coeffs"].get<std::vector<double>>();
        if (je.contains("true_inter_coeffs"))
            cfg.evaluation.true_inter_coeffs = je["true_inter_coeffs"].get<std::vector<double>>();
        cfg.evaluation.ned_max_samples = je.value("ned_max_samples", 2000);
    }

    if (j.contains("termination")) {
        const json& jt = j["termination"];
        check_keys(jt, "termination", {"val_loss_max", "r2_min", "max_rounds"});
        cfg.termination.val_loss_max = jt.value("val_loss_max", 1e-4);
        cfg.termination.r2_min = jt.value("r2_min", 0.99);
        cfg.termination.max_rounds = jt.value("max_rounds", 3);
    }

    if (j.contains("bifurcation")) {
        const json& jb = j["bifurcation"];
        check_keys(jb, "bifurcation",
                   {"family", "param", "discovered_path", "slot_dim", "slot_basis", "slot_scale",
                    "c_lo", "c_hi", "c_steps", "section", "transient_frac", "record_dim",
                    "t_end", "dt_out", "rtol", "atol", "x0"});
        BifurcationBlock bb;
        bb.family = jb.value("family", "builtin");
        bb.param = jb.value("param", "c");
        bb.discovered_path = jb.value("discovered_path", std::string());
        bb.slot_dim = jb.value("slot_dim", 2);
        bb.slot_basis = jb.value("slot_basis", "x3");
        bb.slot_scale = jb.value("slot_scale", -1.0);
        bb.c_lo = jb.value("c_lo", 1.0);
        bb.c_hi = jb.value("c_hi", 6.0);
        bb.c_steps = jb.value("c_steps", 26);
        if (jb.contains("section")) {
            const json& jsec = jb["section"];
            check_keys(jsec, "section", {"node", "dim", "value", "direction"});
            bb.section.node = jsec.value("node", 0);
            bb.section.dim = jsec.value("dim", 0);
            bb.section.value = jsec.value("value", 0.1);
            const std::string dir = jsec.value("direction", "rising");
            bb.section.direction = dir == "falling" ? SectionConfig::Direction::Falling
                                   : dir == "both"  ? SectionConfig::Direction::Both
                                                    : SectionConfig::Direction::Rising;
        }
        bb.transient_frac = jb.value("transient_frac", 0.5);
        bb.record_dim = jb.value("record_dim", 1);
        bb.t_end = jb.value("t_end", 400.0);
        bb.dt_out = jb.value("dt_out", 0.01);
        bb.rtol = jb.value("rtol", 1e-9);
        bb.atol = jb.value("atol", 1e-9);
        if (jb.contains("x0")) bb.x0 = parse_init(jb["x0"]);
        cfg.bifurcation = bb;
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Pipeline stages
// ---------------------------------------------------------------------------

namespace {

Topology build_topology(const PipelineConfig& cfg) {
    switch (cfg.topology.type) {
        case TopologyBlock::Type::Er:
            return gen_er(cfg.topology.n, cfg.topology.p, split_seed(cfg.seed, "topology"));
        case TopologyBlock::Type::Ba:
            return gen_ba(cfg.topology.n, cfg.topology.m, split_seed(cfg.seed, "topology"));
        case TopologyBlock::Type::File:
            return load_edge_list(cfg.topology.path, cfg.topology.weighted,
                                  cfg.topology.directed);
    }
    throw ConfigError("config: bad topology block");
}

FunctionLibrary library_from_block(const std::vector<std::string>& lines,
                                   const std::string& file, int num_vars,
                                   const std::string& what) {
    if (!file.empty()) return FunctionLibrary::from_file(file, num_vars);
    if (!lines.empty()) return FunctionLibrary::from_infix(lines, num_vars);
    throw ConfigError("config: sparse backend requires " + what + " library");
}

std::vector<Op> operators_from_tokens(const std::vector<std::string>& tokens) {
    std::vector<Op> ops;
    for (const auto& t : tokens) {
        auto op = op_from_token(t);
        if (!op) throw ConfigError("config: unknown operator token '" + t + "'");
        ops.push_back(*op);
    }
    return ops;
}

std::vector<std::string> infix_names(int d, bool pair) {
    std::vector<std::string> names;
    for (int k = 0; k < d; ++k)
        names.push_back(d == 1 ? "x_i" : "x_i" + std::to_string(k + 1));
    if (pair)
        for (int k = 0; k < d; ++k)
            names.push_back(d == 1 ? "x_j" : "x_j" + std::to_string(k + 1));
    return names;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, const std::string& out_dir, bool resume,
                            Stage until) {
    fs::create_directories(out_dir);
    auto path = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };
    PipelineResult result;
    result.run_dir = out_dir;

    // -- simulate ------------------------------------------------------------
    const SimSettings settings = cfg.dynamics.settings();
    Topology topo_true = build_topology(cfg);
    DynamicsSpec spec;
    spec.model = cfg.dynamics.model;
    spec.d = model_dim(spec.model);
    spec.params = cfg.dynamics.params;

    Trajectory traj;
    if (resume && fs::exists(path("trajectory.csv")) && fs::exists(path("trajectory_meta.json"))) {
        traj = load_trajectory_csv(path("trajectory.csv"));
        std::ifstream meta(path("trajectory_meta.json"));
        json jm = json::parse(meta);
        spec.model = model_from_string(jm.at("model"));
        spec.d = jm.at("d");
        for (auto it = jm["params"].begin(); it != jm["params"].end(); ++it)
            spec.params[it.key()] = it.value().get<double>();
        for (auto it = jm["node_params"].begin(); it != jm["node_params"].end(); ++it)
            spec.node_params[it.key()] = it.value().get<std::vector<double>>();
        traj.spec = spec;
        topo_true = load_edge_list(path("topology.txt"), true, false);
        topo_true.directed = cfg.topology.directed;
    } else {
        traj = simulate_dataset(spec, topo_true, settings.init, settings,
                                split_seed(cfg.seed, "simulate"));
        spec = traj.spec;  // per-node params materialised here
        save_edge_list(topo_true, path("topology.txt"));
        save_trajectory_csv(traj, path("trajectory.csv"));
        save_trajectory_meta(traj, settings, "topology.txt", path("trajectory_meta.json"));
    }

    // observation corruption: state noise and spurious links
    Trajectory traj_obs = traj;
    if (std::isfinite(cfg.corruption.snr_db)) {
        traj_obs = add_state_noise(traj, cfg.corruption.snr_db, split_seed(cfg.seed, "noise"));
        save_trajectory_csv(traj_obs, path("trajectory_noisy.csv"));
    }
    Topology topo_train = topo_true;
    if (cfg.corruption.eta > 0.0) {
        topo_train = perturb_topology(topo_true, cfg.corruption.eta, split_seed(cfg.seed, "eta"));
        save_edge_list(topo_train, path("topology_train.txt"));
    }

    if (cfg.termination.max_rounds == 0 || until == Stage::Simulate) {
        emit_report(out_dir);
        return result;
    }

    // -- preprocess ----------------------------------------------------------
    Trajectory traj_window = traj_obs.head(settings.t_inference);
    IntervalChoice choice;
    if (resume && fs::exists(path("interval.json"))) {
        std::ifstream in(path("interval.json"));
        json ji = json::parse(in);
        choice.t_star = ji.at("t_star");
        choice.s_steps = ji.at("s_steps");
        choice.delta_t = ji.at("delta_t");
        choice.objective_value = ji.at("objective_value");
        choice.stride = ji.at("stride");
        choice.grid_count = ji.at("grid_count");
    } else {
        if (cfg.preprocess.select) {
            SaConfig sa;
            sa.iters = cfg.preprocess.sa_iters;
            sa.cooling = cfg.preprocess.sa_cooling;
            sa.seed = split_seed(cfg.seed, "interval");
            choice = select_interval(traj_window, cfg.preprocess.s_steps, cfg.preprocess.lambda,
                                     sa);
        } else {
            const int stride = std::max<int>(
                1, int((traj_window.samples() - 1) / std::max(1, cfg.preprocess.s_steps)));
            choice = full_interval(traj_window, stride);
        }
        ordered_json ji;
        ji["t_star"] = choice.t_star;
        ji["s_steps"] = choice.s_steps;
        ji["delta_t"] = choice.delta_t;
        ji["objective_value"] = choice.objective_value;
        ji["stride"] = choice.stride;
        ji["grid_count"] = choice.grid_count;
        std::ofstream out(path("interval.json"));
        out << ji.dump(2) << "\n";
    }
    SmoothConfig smooth{cfg.preprocess.smooth, cfg.preprocess.window, cfg.preprocess.polyorder};
    TrainingSet ts = build_training_pairs(traj_window, topo_train, choice, smooth,
                                          split_seed(cfg.seed, "split"),
                                          cfg.preprocess.val_ratio, cfg.preprocess.interior_only);
    save_training_csv(ts, path("training.csv"));
    if (until == Stage::Preprocess) return result;

    // -- train / regress / evaluate loop --------------------------------------
    const int d = traj.d;
    BackendConfig backend;
    backend.kind = cfg.symreg.backend;
    backend.threshold = cfg.symreg.threshold;
    backend.threshold_inter = cfg.symreg.threshold_inter;
    backend.const_prune = cfg.symreg.const_prune;
    if (backend.kind == BackendConfig::Kind::Sparse) {
        backend.self_library = library_from_block(cfg.symreg.self_library,
                                                  cfg.symreg.self_library_file, d, "self");
        backend.inter_library = library_from_block(cfg.symreg.inter_library,
                                                   cfg.symreg.inter_library_file, 2 * d, "inter");
    } else {
        if (!cfg.symreg.operators.empty())
            backend.search.operators = operators_from_tokens(cfg.symreg.operators);
        backend.search.max_depth = cfg.symreg.max_depth;
        backend.search.population = cfg.symreg.population;
        backend.search.iters = cfg.symreg.iters;
        backend.search.const_prune = cfg.symreg.const_prune;
        backend.search.parsimony = 1e-3;
    }
    SamplingConfig sampling;
    sampling.n_raw = cfg.symreg.n_raw;
    sampling.k = cfg.symreg.k;

    const size_t grid = traj.samples();
    Eigen::MatrixXd truth_mat(size_t(traj.n) * d, grid);
    for (size_t t = 0; t < grid; ++t)
        for (int i = 0; i < traj.n; ++i)
            for (int k = 0; k < d; ++k)
                truth_mat(size_t(i) * d + k, t) = traj.value(t, i, k);

    bool done = false;
    for (int round = 1; round <= std::max(1, cfg.termination.max_rounds) && !done; ++round) {
        result.rounds_used = round;
        DecouplerConfig dcfg = cfg.decoupler;
        dcfg.seed = split_seed(cfg.seed, 7000 + round);

        TrainResult trained;
        const bool can_resume_train = resume && round == 1 && fs::exists(path("decoupler.json"));
        if (can_resume_train) {
            trained.model = DecouplerModel::load(path("decoupler.json"));
            trained.best_val = 0.0;
        } else {
            trained = train_decoupler(ts, topo_train, dcfg);
            trained.model.save(path("decoupler.json"));
            std::ofstream log(path("train_log.csv"));
            log << "epoch,train_loss,val_loss\n";
            char buf[96];
            for (const auto& e : trained.log) {
                snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_loss);
                log << buf;
            }
        }
        if (until == Stage::Train) return result;

        if (!can_resume_train && trained.best_val > cfg.termination.val_loss_max &&
            round < cfg.termination.max_rounds)
            continue;  // fitting requirements unmet: training is repeated

        sampling.seed = split_seed(cfg.seed, 8000 + round);
        DiscoveredModel dm;
        if (resume && round == 1 && fs::exists(path("discovered.json"))) {
            dm = DiscoveredModel::load(path("discovered.json"));
        } else {
            dm = regress_decoupler(trained.model, ts, topo_train, sampling, backend);
            dm.save(path("discovered.json"));
        }
        result.discovered = dm;
        if (until == Stage::Regress) return result;

        // integrate the discovered model from the true initial state
        RhsFn rhs = assemble_rhs(dm, topo_train);
        Trajectory pred;
        try {
            pred = integrate_ivp(rhs, traj.n, d, traj.frame(0), settings.t_end, settings.dt,
                                 std::max(1e-9, settings.rtol), std::max(1e-9, settings.atol));
        } catch (const std::exception& ex) {
            if (round < cfg.termination.max_rounds) continue;
            throw StageError(std::string("evaluate: discovered model integration failed: ") +
                             ex.what());
        }
        save_trajectory_csv(pred, path("prediction.csv"));

        Eigen::MatrixXd pred_mat(size_t(traj.n) * d, grid);
        for (size_t t = 0; t < grid; ++t)
            for (int i = 0; i < traj.n; ++i)
                for (int k = 0; k < d; ++k)
                    pred_mat(size_t(i) * d + k, t) = pred.value(t, i, k);

        MetricsReport report;
        report.r2 = r2_score(truth_mat, pred_mat);
        report.mse = mse_score(truth_mat, pred_mat);
        auto mm = mre_mae(truth_mat, pred_mat);
        report.mre = mm.mre;
        report.mae = mm.mae;
        report.mre_excluded_zeros = mm.excluded_zeros;

        // NED on a decimated grid (diameter computation is quadratic in time)
        {
            const size_t stride = std::max<size_t>(1, grid / cfg.evaluation.ned_max_samples);
            std::vector<double> xt, xp, dt_, dp;
            size_t T_used = 0;
            for (size_t t = 0; t < grid; t += stride) {
                auto frame_true = traj.frame(t);
                auto frame_pred = pred.frame(t);
                auto d_true = builtin_rhs(spec, topo_true, frame_true, traj.times[t]);
                std::vector<double> d_pred(frame_pred.size());
                rhs(pred.times[t], frame_pred, d_pred);
                xt.insert(xt.end(), frame_true.begin(), frame_true.end());
                xp.insert(xp.end(), frame_pred.begin(), frame_pred.end());
                dt_.insert(dt_.end(), d_true.begin(), d_true.end());
                dp.insert(dp.end(), d_pred.begin(), d_pred.end());
                ++T_used;
            }
            report.ned = ned_score(xt, xp, dt_, dp, T_used, traj.n, d);
        }

        // coefficient metrics against a declared reference library (1-D case)
        if (!cfg.evaluation.library_self.empty() && d == 1) {
            FunctionLibrary lib_self = FunctionLibrary::from_infix(cfg.evaluation.library_self, 1);
            FunctionLibrary lib_inter =
                FunctionLibrary::from_infix(cfg.evaluation.library_inter, 2);
            // projection grid from the training envelope
            double lo = 1e300, hi = -1e300;
            for (double v : ts.states) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            Rng rng(split_seed(cfg.seed, "projection"));
            Eigen::MatrixXd grid_self(128, 1), grid_inter(256, 2);
            for (int r = 0; r < 128; ++r) grid_self(r, 0) = uniform_range(rng, lo, hi);
            for (int r = 0; r < 256; ++r) {
                grid_inter(r, 0) = uniform_range(rng, lo, hi);
                grid_inter(r, 1) = uniform_range(rng, lo, hi);
            }
            auto proj_self =
                project_on_library(dm.self_exprs[0][0].expr, lib_self, grid_self);
            auto proj_inter =
                project_on_library(dm.inter_exprs[0][0].expr, lib_inter, grid_inter);
            Eigen::VectorXd xi_pred(proj_self.xi.size() + proj_inter.xi.size() + 1);
            xi_pred << proj_self.xi, proj_inter.xi,
                (proj_self.other_terms || proj_inter.other_terms) ? 1.0 : 0.0;
            if (!cfg.evaluation.true_self_coeffs.empty()) {
                Eigen::VectorXd xi_true(xi_pred.size());
                xi_true.setZero();
                for (size_t k = 0; k < cfg.evaluation.true_self_coeffs.size(); ++k)
                    xi_true(k) = cfg.evaluation.true_self_coeffs[k];
                for (size_t k = 0; k < cfg.evaluation.true_inter_coeffs.size(); ++k)
                    xi_true(proj_self.xi.size() + k) = cfg.evaluation.true_inter_coeffs[k];
                auto rp = recall_precision(xi_true, xi_pred);
                report.recall = rp.recall;
                if (rp.precision) report.precision = *rp.precision;
                report.l2_error = l2_coeff_error(xi_true, xi_pred);
            }
        }

        {
            std::ofstream out(path("metrics.json"));
            out << report.to_json() << "\n";
        }
        save_ned_csv(report.ned, path("ned.csv"));
        {
            std::ofstream out(path("comparison.csv"));
            out << "t,node,dim,truth,pred\n";
            char buf[128];
            const size_t stride = std::max<size_t>(1, grid / 2000);
            for (size_t t = 0; t < grid; t += stride)
                for (int i = 0; i < traj.n; ++i)
                    for (int k = 0; k < d; ++k) {
                        snprintf(buf, sizeof buf, "%.17g,%d,%d,%.17g,%.17g\n", traj.times[t], i,
                                 k, traj.value(t, i, k), pred.value(t, i, k));
                        out << buf;
                    }
        }
        result.metrics = report;
        if (report.r2 >= cfg.termination.r2_min) {
            result.thresholds_met = true;
            done = true;
        }
    }

    if (until == Stage::Report) emit_report(out_dir);
    return result;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

void emit_report(const std::string& run_dir) {
    auto path = [&](const std::string& name) { return (fs::path(run_dir) / name).string(); };
    ordered_json report;
    std::vector<std::string> missing;
    auto note_missing = [&](const std::string& name) { missing.push_back(name); };

    report["run_dir"] = run_dir;
    if (fs::exists(path("trajectory_meta.json"))) {
        std::ifstream in(path("trajectory_meta.json"));
        report["simulation"] = json::parse(in);
    } else {
        note_missing("trajectory_meta.json");
    }
    if (fs::exists(path("interval.json"))) {
        std::ifstream in(path("interval.json"));
        report["interval"] = json::parse(in);
    } else {
        note_missing("interval.json");
    }

    std::string equations_text;
    if (fs::exists(path("discovered.json"))) {
        DiscoveredModel dm = DiscoveredModel::load(path("discovered.json"));
        report["backend"] = dm.backend;
        ordered_json eqs = ordered_json::array();
        for (size_t k = 0; k < dm.self_exprs.size(); ++k)
            for (size_t m = 0; m < dm.self_exprs[k].size(); ++m) {
                ordered_json je;
                je["kind"] = "self";
                je["type"] = k;
                je["dim"] = m;
                je["infix"] = dm.self_exprs[k][m].expr.to_infix(infix_names(dm.d, false));
                je["fit_error"] = dm.self_exprs[k][m].fit_error;
                je["complexity"] = dm.self_exprs[k][m].complexity;
                eqs.push_back(je);
            }
        for (size_t e = 0; e < dm.inter_exprs.size(); ++e)
            for (size_t m = 0; m < dm.inter_exprs[e].size(); ++m) {
                ordered_json je;
                je["kind"] = "inter";
                je["type"] = e;
                je["dim"] = m;
                je["infix"] = dm.inter_exprs[e][m].expr.to_infix(infix_names(dm.d, true));
                je["fit_error"] = dm.inter_exprs[e][m].fit_error;
                je["complexity"] = dm.inter_exprs[e][m].complexity;
                eqs.push_back(je);
            }
        report["equations"] = eqs;
        for (size_t k = 0; k < dm.self_exprs.size(); ++k)
            for (size_t m = 0; m < dm.self_exprs[k].size(); ++m) {
                equations_text += "dx_i" + (dm.d > 1 ? std::to_string(m + 1) : "") +
                                  "/dt = " +
                                  dm.self_exprs[k][m].expr.to_infix(infix_names(dm.d, false)) +
                                  " + sum_j A_ij * (" +
                                  dm.inter_exprs[std::min(k, dm.inter_exprs.size() - 1)][m]
                                      .expr.to_infix(infix_names(dm.d, true)) +
                                  ")";
                if (dm.self_exprs.size() > 1)
                    equations_text += "   [node type " + std::to_string(k) + "]";
                equations_text += "\n";
            }
    } else {
        note_missing("discovered.json");
    }

    if (fs::exists(path("metrics.json"))) {
        std::ifstream in(path("metrics.json"));
        report["metrics"] = json::parse(in);
    } else {
        note_missing("metrics.json");
    }
    for (const char* artifact :
         {"topology.txt", "trajectory.csv", "training.csv", "decoupler.json",
          "prediction.csv", "ned.csv", "comparison.csv"})
        if (!fs::exists(path(artifact))) note_missing(artifact);
    report["missing_artifacts"] = missing;

    {
        std::ofstream out(path("report.json"));
        out << report.dump(2) << "\n";
    }
    std::ofstream txt(path("report.txt"));
    txt << "run directory: " << run_dir << "\n";
    if (report.contains("simulation"))
        txt << "model: " << report["simulation"]["model"].get<std::string>()
            << "  n: " << report["simulation"]["n"] << "\n";
    if (!equations_text.empty()) txt << "\ndiscovered equations:\n" << equations_text;
    if (report.contains("metrics")) {
        const auto& m = report["metrics"];
        txt << "\nmetrics:\n";
        txt << "  r2:  " << m["r2"] << "\n";
        txt << "  mse: " << m["mse"] << "\n";
        txt << "  mae: " << m["mae"] << "\n";
        txt << "  mre: " << m["mre"] << "\n";
        if (m.contains("recall")) txt << "  recall: " << m["recall"] << "\n";
        if (m.contains("precision")) txt << "  precision: " << m["precision"] << "\n";
        if (m.contains("l2_error")) txt << "  l2_error: " << m["l2_error"] << "\n";
    }
    if (!missing.empty()) {
        txt << "\nmissing artifacts:\n";
        for (const auto& name : missing) txt << "  " << name << "\n";
    }
}

// ---------------------------------------------------------------------------
// Bifurcation runner
// ---------------------------------------------------------------------------

void run_bifurcation(const PipelineConfig& cfg, const std::string& out_dir) {
    if (!cfg.bifurcation) throw ConfigError("config: bifurcation block missing");
    const BifurcationBlock& bb = *cfg.bifurcation;
    fs::create_directories(out_dir);
    Topology topo = build_topology(cfg);
    const int d = model_dim(cfg.dynamics.model);

    std::function<RhsFn(double)> family;
    if (bb.family == "builtin") {
        DynamicsSpec spec;
        spec.model = cfg.dynamics.model;
        spec.d = d;
        spec.params = cfg.dynamics.params;
        family = [spec, topo, param = bb.param](double c) {
            DynamicsSpec s = spec;
            s.params[param] = c;
            return make_rhs(s, topo);
        };
    } else if (bb.family == "discovered") {
        DiscoveredModel dm = DiscoveredModel::load(bb.discovered_path);
        if (dm.backend != "sparse" || dm.self_library_names.empty())
            throw ConfigError("bifurcation: discovered family needs a sparse-backend model");
        auto it = std::find(dm.self_library_names.begin(), dm.self_library_names.end(),
                            bb.slot_basis);
        if (it == dm.self_library_names.end())
            throw ConfigError("bifurcation: slot basis '" + bb.slot_basis + "' not in library");
        const int slot = int(it - dm.self_library_names.begin());
        FunctionLibrary lib = FunctionLibrary::from_infix(dm.self_library_names, d);
        family = [dm, lib, topo, slot, bb](double c) {
            DiscoveredModel fam = dm;
            auto coeffs = fam.self_exprs[0][bb.slot_dim].coefficients;
            coeffs[slot] = bb.slot_scale * c;
            Eigen::VectorXd xi = Eigen::Map<const Eigen::VectorXd>(coeffs.data(), coeffs.size());
            fam.self_exprs[0][bb.slot_dim].expr = lib.combination(xi);
            fam.self_exprs[0][bb.slot_dim].coefficients = coeffs;
            return assemble_rhs(fam, topo);
        };
    } else {
        throw ConfigError("config: unknown bifurcation family '" + bb.family + "'");
    }

    ScanSettings settings;
    settings.t_end = bb.t_end;
    settings.dt_out = bb.dt_out;
    settings.rtol = bb.rtol;
    settings.atol = bb.atol;
    settings.record_dim = bb.record_dim;
    settings.x0.resize(size_t(topo.n) * d);
    Rng rng(split_seed(cfg.seed, "bifurcation_x0"));
    for (auto& v : settings.x0) {
        switch (bb.x0.kind) {
            case InitSpec::Kind::Uniform: v = uniform_range(rng, bb.x0.lo, bb.x0.hi); break;
            case InitSpec::Kind::Gaussian: v = gaussian(rng, bb.x0.mu, bb.x0.sigma); break;
            case InitSpec::Kind::Constant: v = bb.x0.value; break;
        }
    }
    SectionConfig section = bb.section;
    section.transient = bb.transient_frac * bb.t_end;
    auto rows = bifurcation_scan(family, topo.n, d, bb.c_lo, bb.c_hi, bb.c_steps, section,
                                 settings);
    save_bifurcation_csv(rows, (fs::path(out_dir) / "bifurcation.csv").string());
}

}  // namespace netdyn
