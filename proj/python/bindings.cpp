#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "netdyn/chaos.hpp"
#include "netdyn/decoupler.hpp"
#include "netdyn/dynamics.hpp"
#include "netdyn/expression.hpp"
#include "netdyn/metrics.hpp"
#include "netdyn/pipeline.hpp"
#include "netdyn/preprocess.hpp"
#include "netdyn/symreg.hpp"
#include "netdyn/topology.hpp"

namespace py = pybind11;
using namespace netdyn;

namespace {

Eigen::MatrixXd trajectory_states(const Trajectory& t) {
    Eigen::MatrixXd out(t.samples(), size_t(t.n) * t.d);
    for (size_t s = 0; s < t.samples(); ++s)
        for (int c = 0; c < t.n * t.d; ++c) out(s, c) = t.states[s * size_t(t.n) * t.d + c];
    return out;
}

}  // namespace

PYBIND11_MODULE(_netdyn, m) {
    m.doc() = "network dynamics equation discovery: simulate, decouple, regress, validate";

    py::class_<Topology>(m, "Topology")
        .def(py::init<int, bool>(), py::arg("n"), py::arg("directed") = false)
        .def_readonly("n", &Topology::n)
        .def_readonly("directed", &Topology::directed)
        .def_readwrite("node_type", &Topology::node_type)
        .def("weight", &Topology::weight)
        .def("set_edge", &Topology::set_edge, py::arg("i"), py::arg("j"), py::arg("w"),
             py::arg("type") = 0)
        .def("edge_count", &Topology::edge_count)
        .def("in_degree", &Topology::in_degree)
        .def("mean_degree", &Topology::mean_degree)
        .def("adjacency", [](const Topology& t) {
            return Eigen::Map<const Eigen::MatrixXd>(t.adjacency.data(), t.n, t.n).transpose().eval();
        });

    m.def("gen_er", &gen_er, py::arg("n"), py::arg("p"), py::arg("seed"));
    m.def("gen_ba", &gen_ba, py::arg("n"), py::arg("m"), py::arg("seed"));
    m.def("load_edge_list", &load_edge_list, py::arg("path"), py::arg("weighted") = false,
          py::arg("directed") = false);
    m.def("save_edge_list", &save_edge_list);
    m.def("perturb_topology", &perturb_topology, py::arg("topology"), py::arg("eta"),
          py::arg("seed"));

    py::class_<DynamicsSpec>(m, "DynamicsSpec")
        .def(py::init([](const std::string& model) {
                 DynamicsSpec s;
                 s.model = model_from_string(model);
                 s.d = model_dim(s.model);
                 return s;
             }),
             py::arg("model"))
        .def_readwrite("params", &DynamicsSpec::params)
        .def_readwrite("node_params", &DynamicsSpec::node_params)
        .def_readonly("d", &DynamicsSpec::d);

    py::class_<Trajectory>(m, "Trajectory")
        .def_readonly("times", &Trajectory::times)
        .def_readonly("n", &Trajectory::n)
        .def_readonly("d", &Trajectory::d)
        .def("states", &trajectory_states, "matrix of shape (times, n*d)")
        .def("duration", &Trajectory::duration)
        .def("dt", &Trajectory::dt);

    py::class_<InitSpec>(m, "InitSpec")
        .def_static("uniform",
                    [](double lo, double hi) {
                        InitSpec s;
                        s.kind = InitSpec::Kind::Uniform;
                        s.lo = lo;
                        s.hi = hi;
                        return s;
                    })
        .def_static("gaussian",
                    [](double mu, double sigma) {
                        InitSpec s;
                        s.kind = InitSpec::Kind::Gaussian;
                        s.mu = mu;
                        s.sigma = sigma;
                        return s;
                    })
        .def_static("constant", [](double v) {
            InitSpec s;
            s.kind = InitSpec::Kind::Constant;
            s.value = v;
            return s;
        });

    m.def(
        "simulate",
        [](const DynamicsSpec& spec, const Topology& topo, const InitSpec& init, double dt,
           double t_end, uint64_t seed, double rtol, double atol) {
            SimSettings s = default_sim_settings(spec.model);
            s.dt = dt;
            s.t_end = t_end;
            s.rtol = rtol;
            s.atol = atol;
            return simulate_dataset(spec, topo, init, s, seed);
        },
        py::arg("spec"), py::arg("topology"), py::arg("init"), py::arg("dt"), py::arg("t_end"),
        py::arg("seed") = 0, py::arg("rtol") = 1e-12, py::arg("atol") = 1e-12);
    m.def("builtin_rhs",
          [](const DynamicsSpec& spec, const Topology& topo, const std::vector<double>& state,
             double t) { return builtin_rhs(spec, topo, state, t); });
    m.def("add_state_noise", &add_state_noise, py::arg("trajectory"), py::arg("snr_db"),
          py::arg("seed"));

    m.def("five_point_derivative", [](const std::vector<double>& series, double dt) {
        return five_point_derivative(series, dt);
    });
    m.def("sg_smooth", [](const std::vector<double>& series, int window, int polyorder) {
        return sg_smooth(series, window, polyorder);
    });

    py::class_<IntervalChoice>(m, "IntervalChoice")
        .def_readonly("t_star", &IntervalChoice::t_star)
        .def_readonly("delta_t", &IntervalChoice::delta_t)
        .def_readonly("objective_value", &IntervalChoice::objective_value)
        .def_readonly("stride", &IntervalChoice::stride)
        .def_readonly("grid_count", &IntervalChoice::grid_count);
    m.def(
        "select_interval",
        [](const Trajectory& traj, int s_steps, double lambda, int iters, uint64_t seed) {
            SaConfig sa;
            sa.iters = iters;
            sa.seed = seed;
            return select_interval(traj, s_steps, lambda, sa);
        },
        py::arg("trajectory"), py::arg("s_steps") = 100, py::arg("lambda") = 1.0,
        py::arg("iters") = 200, py::arg("seed") = 0);
    m.def("full_interval", &full_interval, py::arg("trajectory"), py::arg("stride") = 1);

    py::class_<TrainingSet>(m, "TrainingSet")
        .def_readonly("n", &TrainingSet::n)
        .def_readonly("d", &TrainingSet::d)
        .def_readonly("times", &TrainingSet::times)
        .def_readonly("states", &TrainingSet::states)
        .def_readonly("targets", &TrainingSet::targets)
        .def("count", &TrainingSet::count)
        .def("train_count", &TrainingSet::train_count);
    m.def(
        "build_training_pairs",
        [](const Trajectory& traj, const Topology& topo, const IntervalChoice& choice,
           bool smooth, int window, int polyorder, uint64_t split_seed, double val_ratio) {
            SmoothConfig sc{smooth, window, polyorder};
            return build_training_pairs(traj, topo, choice, sc, split_seed, val_ratio);
        },
        py::arg("trajectory"), py::arg("topology"), py::arg("choice"), py::arg("smooth") = false,
        py::arg("window") = 7, py::arg("polyorder") = 3, py::arg("split_seed") = 0,
        py::arg("val_ratio") = 0.2);

    py::class_<DecouplerConfig>(m, "DecouplerConfig")
        .def(py::init<>())
        .def_readwrite("hidden", &DecouplerConfig::hidden)
        .def_readwrite("lr", &DecouplerConfig::lr)
        .def_readwrite("weight_decay", &DecouplerConfig::weight_decay)
        .def_readwrite("epochs", &DecouplerConfig::epochs)
        .def_readwrite("patience", &DecouplerConfig::patience)
        .def_readwrite("lambda_", &DecouplerConfig::lambda)
        .def_readwrite("variance_centered", &DecouplerConfig::variance_centered)
        .def_readwrite("standardize", &DecouplerConfig::standardize)
        .def_readwrite("seed", &DecouplerConfig::seed);

    py::class_<DecouplerModel>(m, "DecouplerModel")
        .def("predict_derivative",
             [](const DecouplerModel& m_, const Topology& t, const Eigen::MatrixXd& state) {
                 return m_.predict_derivative(t, state);
             })
        .def("query_self", &DecouplerModel::query_self)
        .def("query_inter", &DecouplerModel::query_inter)
        .def("save", &DecouplerModel::save)
        .def_static("load", &DecouplerModel::load);

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("model", &TrainResult::model)
        .def_readonly("best_val", &TrainResult::best_val)
        .def_readonly("best_epoch", &TrainResult::best_epoch);
    m.def("train_decoupler",
          [](const TrainingSet& ts, const Topology& topo, const DecouplerConfig& cfg) {
              return train_decoupler(ts, topo, cfg);
          });
    m.def("loss_eq5", &loss_eq5, py::arg("pred"), py::arg("target"), py::arg("lambda"),
          py::arg("variance_centered") = true);

    py::class_<Expression>(m, "Expression")
        .def("to_prefix", &Expression::to_prefix)
        .def("to_infix", [](const Expression& e) { return e.to_infix(); })
        .def("size", &Expression::size)
        .def("evaluate", [](const Expression& e, const std::vector<double>& vars) {
            return e.evaluate(vars);
        });
    m.def("parse_prefix", &parse_prefix);
    m.def("parse_infix", &parse_infix, py::arg("text"), py::arg("num_vars") = -1);

    m.def("kmeans_sample", &kmeans_sample, py::arg("points"), py::arg("k"), py::arg("seed"));

    py::class_<FunctionLibrary>(m, "FunctionLibrary")
        .def_static("from_infix", &FunctionLibrary::from_infix, py::arg("lines"),
                    py::arg("num_vars") = -1)
        .def_static("polynomial", &FunctionLibrary::polynomial)
        .def_readonly("names", &FunctionLibrary::names);
    m.def("sparse_regress", &sparse_regress, py::arg("inputs"), py::arg("outputs"),
          py::arg("library"), py::arg("threshold"), py::arg("max_iters") = 20);

    py::class_<ScoredExpression>(m, "ScoredExpression")
        .def_readonly("expr", &ScoredExpression::expr)
        .def_readonly("error", &ScoredExpression::error)
        .def_readonly("size", &ScoredExpression::size)
        .def_readonly("score", &ScoredExpression::score);
    m.def(
        "search_regress",
        [](const Eigen::MatrixXd& inputs, const Eigen::VectorXd& outputs, int population,
           int iters, int max_depth, uint64_t seed) {
            SearchConfig cfg;
            cfg.population = population;
            cfg.iters = iters;
            cfg.max_depth = max_depth;
            cfg.seed = seed;
            return search_regress(inputs, outputs, cfg);
        },
        py::arg("inputs"), py::arg("outputs"), py::arg("population") = 400,
        py::arg("iters") = 40, py::arg("max_depth") = 5, py::arg("seed") = 0);
    m.def("fit_constants", &fit_constants, py::arg("expr"), py::arg("inputs"),
          py::arg("outputs"), py::arg("seed") = 0, py::arg("restarts") = 8);

    m.def("r2_score", &r2_score);
    m.def("mse_score", &mse_score);
    m.def("l2_coeff_error", &l2_coeff_error);
    m.def("recall_precision", [](const Eigen::VectorXd& t, const Eigen::VectorXd& p) {
        auto rp = recall_precision(t, p);
        return py::make_tuple(rp.recall, rp.precision ? py::cast(*rp.precision) : py::none());
    });

    m.def("count_clusters", &count_clusters, py::arg("values"), py::arg("gap_fraction") = 0.05);

    m.def(
        "run_pipeline",
        [](const std::string& config_path, const std::string& out_dir, bool resume) {
            auto cfg = PipelineConfig::from_json_file(config_path);
            auto result = run_pipeline(cfg, out_dir, resume);
            py::dict out;
            out["run_dir"] = result.run_dir;
            out["rounds_used"] = result.rounds_used;
            out["thresholds_met"] = result.thresholds_met;
            out["r2"] = result.metrics.r2;
            out["mse"] = result.metrics.mse;
            return out;
        },
        py::arg("config_path"), py::arg("out_dir"), py::arg("resume") = false);
    m.def("emit_report", &emit_report);
}
