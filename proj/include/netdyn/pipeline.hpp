#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "netdyn/chaos.hpp"
#include "netdyn/decoupler.hpp"
#include "netdyn/dynamics.hpp"
#include "netdyn/metrics.hpp"
#include "netdyn/preprocess.hpp"
#include "netdyn/symreg.hpp"
#include "netdyn/topology.hpp"

namespace netdyn {

struct TopologyBlock {
    enum class Type { Er, Ba, File } type = Type::Er;
    int n = 100;
    double p = 0.1;
    int m = 2;
    std::string path;
    bool weighted = false;
    bool directed = false;
};

struct DynamicsBlock {
    Model model = Model::LV;
    std::map<std::string, double> params;
    std::optional<InitSpec> init;
    std::optional<double> dt, t_inference, t_end;
    double rtol = 1e-12, atol = 1e-12;

    SimSettings settings() const;
};

struct CorruptionBlock {
    double snr_db = std::numeric_limits<double>::infinity();  // clean by default
    double eta = 0.0;
};

struct PreprocessBlock {
    int s_steps = 100;
    double lambda = 1.0;
    int window = 7;
    int polyorder = 3;
    bool interior_only = true;
    bool smooth = false;
    bool select = true;  // false: train on the full inference window
    int sa_iters = 200;
    double sa_cooling = 0.95;
    double val_ratio = 0.2;
};

struct SymregBlock {
    BackendConfig::Kind backend = BackendConfig::Kind::Search;
    std::vector<std::string> self_library, inter_library;
    std::string self_library_file, inter_library_file;
    double threshold = 0.05;
    double threshold_inter = -1.0;
    std::vector<std::string> operators;  // tokens; empty = search default
    int max_depth = 5;
    int population = 400;
    int iters = 40;
    int n_raw = 10000;
    int k = 512;
    double const_prune = 1e-3;
};

struct EvaluationBlock {
    std::vector<std::string> library_self, library_inter;  // reference for coefficients
    std::vector<double> true_self_coeffs, true_inter_coeffs;
    int ned_max_samples = 2000;
};

struct TerminationBlock {
    double val_loss_max = 1e-4;  // on the standardised training loss
    double r2_min = 0.99;
    int max_rounds = 3;
};

struct BifurcationBlock {
    std::string family = "builtin";  // builtin | discovered
    std::string param = "c";
    std::string discovered_path;
    int slot_dim = 2;           // dimension whose self expression carries the slot
    std::string slot_basis = "x3";
    double slot_scale = -1.0;   // coefficient = slot_scale * c
    double c_lo = 1.0, c_hi = 6.0;
    int c_steps = 26;
    SectionConfig section{0, 0, 0.1, SectionConfig::Direction::Rising, 0.0};
    double transient_frac = 0.5;
    int record_dim = 1;
    double t_end = 400.0, dt_out = 0.01, rtol = 1e-9, atol = 1e-9;
    InitSpec x0{InitSpec::Kind::Uniform, 0.0, 2.0};
};

struct PipelineConfig {
    uint64_t seed = 0;
    TopologyBlock topology;
    DynamicsBlock dynamics;
    CorruptionBlock corruption;
    PreprocessBlock preprocess;
    DecouplerConfig decoupler;
    SymregBlock symreg;
    EvaluationBlock evaluation;
    TerminationBlock termination;
    std::optional<BifurcationBlock> bifurcation;

    static PipelineConfig from_json_file(const std::string& path);
    static PipelineConfig from_json_text(const std::string& text);
};

enum class Stage { Simulate, Preprocess, Train, Regress, Evaluate, Report };

struct PipelineResult {
    std::string run_dir;
    int rounds_used = 0;
    bool thresholds_met = false;
    MetricsReport metrics;
    DiscoveredModel discovered;
};

PipelineResult run_pipeline(const PipelineConfig& cfg, const std::string& out_dir,
                            bool resume = false, Stage until = Stage::Report);

void emit_report(const std::string& run_dir);

void run_bifurcation(const PipelineConfig& cfg, const std::string& out_dir);

}  // namespace netdyn
