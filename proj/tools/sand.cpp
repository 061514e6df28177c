// sand: fit / depthmap / extract / eval driver.

#include "sand/adaptive_query.hpp"
#include "sand/depth_octree.hpp"
#include "sand/mesh.hpp"
#include "sand/metrics.hpp"
#include "sand/sdf_oracle.hpp"
#include "sand/surfacing.hpp"
#include "sand/tmlp.hpp"
#include "sand/trainer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace sand;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNan = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string out = "run";
    std::string mesh, checkpoint, octree, pred, gt;

    TMlpConfig net;
    TrainConfig train;
    int max_depth = DepthOctree::kDefaultMaxDepth;
    double r = 0.00015;
    int leaf_samples = 16;
    std::string depth_criterion = "stable";
    std::string far_source = "gt";

    int res = 128;
    std::string engine = "adaptive";
    std::string lod;  // comma-separated caps
    bool weld = false;
    bool dump_grid = false;

    std::size_t metric_samples = 50000;
    double tau = 0.003;
    bool raw_gt = false;
    bool stats = false;

    std::string checkpoint_path() const { return checkpoint.empty() ? (fs::path(out) / "checkpoint.bin").string() : checkpoint; }
    std::string octree_path() const { return octree.empty() ? (fs::path(out) / "octree.bin").string() : octree; }
};

void add_options(CLI::App& app, RunConfig& c) {
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "flat key=value config file; flags override file values");
    app.allow_config_extras(CLI::config_extras_mode::error);

    app.add_option("--out", c.out, "run directory");
    app.add_option("--mesh", c.mesh, "input OBJ mesh (fit, depthmap)");
    app.add_option("--checkpoint", c.checkpoint, "checkpoint path (default <out>/checkpoint.bin)");
    app.add_option("--octree", c.octree, "octree path (default <out>/octree.bin)");
    app.add_option("--pred", c.pred, "predicted mesh (eval)");
    app.add_option("--gt", c.gt, "ground-truth mesh (eval)");

    app.add_option("--layers", c.net.hidden_layers, "hidden layers L")->check(CLI::PositiveNumber);
    app.add_option("--width", c.net.hidden_width, "hidden width")->check(CLI::PositiveNumber);
    app.add_option("--omega-first", c.net.omega_first, "sine frequency of layer 1");
    app.add_option("--omega-hidden", c.net.omega_hidden, "sine frequency of layers 2..L");
    app.add_option("--seed", c.train.seed, "seed for init, sampling and batching");

    app.add_option("--points", c.train.n_points, "training samples");
    app.add_option("--surface-fraction", c.train.surface_fraction, "fraction of on-surface samples");
    app.add_option("--noise-sigma", c.train.noise_sigma, "perturbation std-dev");
    app.add_option("--iterations", c.train.iterations, "training iterations");
    app.add_option("--batch", c.train.batch_size, "minibatch size");
    app.add_option("--lr", c.train.lr, "Adam learning rate");
    app.add_option("--checkpoint-every", c.train.checkpoint_every, "loss-curve / checkpoint interval");

    app.add_option("--max-depth", c.max_depth, "octree max depth");
    app.add_option("--r", c.r, "depth error threshold");
    app.add_option("--leaf-samples", c.leaf_samples, "interior samples per near leaf");
    app.add_option("--depth-criterion", c.depth_criterion,
                   "stable: smallest depth after which every depth is within r | first: smallest such depth")
        ->check(CLI::IsMember({"stable", "first"}));
    app.add_option("--far-source", c.far_source, "far-leaf values: gt | network")
        ->check(CLI::IsMember({"gt", "network"}));

    app.add_option("--res", c.res, "marching-cubes grid resolution")->check(CLI::Range(2, 4096));
    app.add_option("--engine", c.engine, "full | gated | adaptive | dynamic")
        ->check(CLI::IsMember({"full", "gated", "adaptive", "dynamic"}));
    app.add_option("--lod", c.lod, "comma-separated depth caps, e.g. 2,4,6,8");
    app.add_flag("--weld", c.weld, "weld extracted vertices within 1e-7");
    app.add_flag("--dump-grid", c.dump_grid, "write the scalar grid as <out>/grid.sgrd");

    app.add_option("--metric-samples", c.metric_samples, "points sampled per mesh for metrics");
    app.add_option("--tau", c.tau, "F-Score distance threshold");
    app.add_flag("--raw-gt", c.raw_gt, "do not normalize the ground-truth mesh in eval");
    app.add_flag("--stats", c.stats, "write depth histogram and tail residual CSVs");
}

DepthCriterion criterion_of(const RunConfig& c) {
    return c.depth_criterion == "first" ? DepthCriterion::First : DepthCriterion::Stable;
}

std::vector<int> parse_caps(const std::string& text) {
    std::vector<int> caps;
    std::stringstream in(text);
    for (std::string item; std::getline(in, item, ',');) {
        try {
            std::size_t used = 0;
            caps.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw UsageError("--lod: not an integer: '" + item + "'");
        }
    }
    return caps;
}

void require_file(const std::string& path, const char* what) {
    if (path.empty()) throw UsageError(std::string("missing required ") + what);
    if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path);
}

fs::path stats_dir(const RunConfig& c) {
    fs::path d = fs::path(c.out) / "stats";
    fs::create_directories(d);
    return d;
}

void echo_config(const CLI::App& app, const RunConfig& c) {
    fs::create_directories(c.out);
    std::ofstream out(fs::path(c.out) / "config.resolved");
    out << app.config_to_str(true, false);
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream f(p);
    if (!f) throw Error("cannot write " + p.string());
    return f;
}

std::pair<TriangleMesh, SdfOracle> load_normalized_gt(const std::string& path) {
    auto mesh = load_mesh(path);
    if (mesh.dropped_degenerate) std::cerr << "warning: dropped " << mesh.dropped_degenerate << " degenerate triangles\n";
    if (!mesh.is_watertight())
        throw Error(path + ": mesh is not watertight (every edge must be shared by two oppositely wound triangles)");
    auto [normalized, xf] = normalize(mesh);
    SdfOracle oracle(normalized);
    return {std::move(normalized), std::move(oracle)};
}

int cmd_fit(const CLI::App& app, RunConfig& c) {
    require_file(c.mesh, "--mesh");
    c.net.seed = c.train.seed;
    c.net.validate();
    c.train.validate();
    auto [mesh, oracle] = load_normalized_gt(c.mesh);
    echo_config(app, c);

    auto shell = DepthOctree::build_shell([&](const Vec3& p) { return oracle.unsigned_distance(p); }, c.max_depth);
    populate_far(shell, [&](const Vec3& p) { return oracle.signed_distance(p); });
    const auto samples = build_sample_set(mesh, oracle, c.train, shell);
    std::cout << "samples: " << samples.size() << '\n';

    TMlpParams params = init_params(c.net);
    AdamState adam(params, c.train.lr);
    const auto ckpt = c.checkpoint_path();
    const auto result = train(params, adam, samples, c.train, [&](int it, const TMlpParams& p) {
        save_checkpoint(ckpt, p);
        std::cout << "iteration " << it << '\n';
    });
    save_checkpoint(ckpt, params);
    write_loss_curve_csv((stats_dir(c) / "loss_curve.csv").string(), result.curve);
    if (!result.curve.empty())
        std::cout << "loss " << result.curve.front().loss << " -> " << result.curve.back().loss << '\n';
    std::cout << "wrote " << ckpt << '\n';
    return 0;
}

int cmd_depthmap(const CLI::App& app, RunConfig& c) {
    require_file(c.checkpoint_path(), "--checkpoint");
    const TMlpParams params = load_checkpoint(c.checkpoint_path());
    DepthRule rule{c.r, params.layers(), criterion_of(c)};
    rule.validate();
    require_file(c.mesh, "--mesh");
    auto [mesh, oracle] = load_normalized_gt(c.mesh);
    echo_config(app, c);

    auto tree = DepthOctree::build_shell([&](const Vec3& p) { return oracle.unsigned_distance(p); }, c.max_depth);
    if (c.far_source == "gt")
        populate_far(tree, [&](const Vec3& p) { return oracle.signed_distance(p); });
    else
        populate_far_from_network(tree, params);
    populate_depths(tree, params, rule, {c.leaf_samples, c.train.seed});
    tree.save(c.octree_path());
    std::cout << "near leaves: " << tree.leaves(NodeKind::Near).size() << ", mean depth " << tree.mean_near_depth()
              << ", " << tree.serialized_bytes() << " bytes\nwrote " << c.octree_path() << '\n';
    return 0;
}

void write_stats(const RunConfig& c, const TMlpParams& params, const QueryStats& stats,
                 std::span<const Vec3> residual_points) {
    const auto dir = stats_dir(c);
    {
        auto f = open_out(dir / "query_stats.csv");
        write_query_stats_csv(f, stats);
    }
    if (!c.stats) return;
    {
        auto f = open_out(dir / "depth_histogram.csv");
        write_depth_histogram_csv(f, stats);
    }
    {
        auto f = open_out(dir / "tail_residuals.csv");
        write_tail_residuals_csv(f, tail_residual_stats(params, residual_points));
    }
    print_depth_histogram(std::cout, stats);
}

/// Grid points that fall in Near leaves (the residual statistics domain).
std::vector<Vec3> near_grid_points(const DepthOctree& tree, int res) {
    std::vector<Vec3> out;
    for (const auto& p : grid_points(res))
        if (tree.nodes()[tree.locate(p).node].kind == NodeKind::Near) out.push_back(p);
    return out;
}

int cmd_extract(const CLI::App& app, RunConfig& c) {
    require_file(c.checkpoint_path(), "--checkpoint");
    const TMlpParams params = load_checkpoint(c.checkpoint_path());
    const bool needs_tree = c.engine == "adaptive" || c.engine == "gated" || !c.lod.empty() || c.stats;
    DepthOctree tree;
    if (needs_tree) {
        require_file(c.octree_path(), "--octree");
        tree = DepthOctree::load(c.octree_path());
    }
    echo_config(app, c);
    MarchingCubesOptions mc;
    mc.weld = c.weld;

    if (!c.lod.empty()) {
        const auto lods = extract_lod(params, tree, parse_caps(c.lod), c.res, mc);
        for (std::size_t k = 0; k < lods.size(); ++k) {
            const auto path = fs::path(c.out) / lod_file_name("mesh", k);
            save_mesh(path.string(), lods[k].mesh);
            std::cout << "cap " << lods[k].cap << ": " << lods[k].mesh.triangles.size() << " triangles, "
                      << lods[k].stats.total_time << " s -> " << path.string() << '\n';
        }
        write_stats(c, params, lods.back().stats, near_grid_points(tree, c.res));
        return 0;
    }

    QueryStats stats;
    QueryEngine engine;
    if (c.engine == "adaptive" || c.engine == "gated") {
        QueryOptions opts;
        opts.near_full_depth = c.engine == "gated";
        engine = adaptive_engine(params, tree, opts, &stats);
    } else if (c.engine == "full") {
        engine = [&](std::span<const Vec3> xs) {
            auto r = query_full_with_stats(params, xs);
            stats.merge(r.stats);
            return std::move(r.values);
        };
    } else {
        const DepthRule rule{c.r, params.layers()};
        engine = [&, rule](std::span<const Vec3> xs) {
            auto r = query_dynamic(params, xs, rule);
            stats.merge(r.stats);
            return std::move(r.values);
        };
    }
    const auto grid = evaluate_grid(engine, c.res);
    if (c.dump_grid) save_grid((fs::path(c.out) / "grid.sgrd").string(), grid);
    const auto mesh = marching_cubes(grid, mc);
    const auto path = fs::path(c.out) / "mesh.obj";
    save_mesh(path.string(), mesh);
    std::cout << "engine " << c.engine << ": " << mesh.triangles.size() << " triangles; octree " << stats.octree_time
              << " s, network " << stats.network_time << " s, total " << stats.total_time << " s; layer passes "
              << stats.layer_passes_adaptive << " / " << stats.layer_passes_full << "\nwrote " << path.string()
              << '\n';
    write_stats(c, params, stats, needs_tree ? near_grid_points(tree, c.res) : std::vector<Vec3>{});
    return 0;
}

std::uint64_t file_bytes(const std::string& p) { return fs::is_regular_file(p) ? fs::file_size(p) : 0; }

int cmd_eval(const CLI::App& app, RunConfig& c) {
    require_file(c.pred, "--pred");
    require_file(c.gt, "--gt");
    const auto pred = load_mesh(c.pred);
    auto gt = load_mesh(c.gt);
    if (!c.raw_gt) gt = normalize(gt).first;
    echo_config(app, c);
    const MetricSettings ms{c.metric_samples, c.train.seed, c.tau};
    const auto cmp = compare_meshes(pred, gt, ms);

    std::optional<QueryStats> stats;
    const auto ckpt = c.checkpoint_path(), oct = c.octree_path();
    if (fs::is_regular_file(ckpt) && fs::is_regular_file(oct)) {
        const auto params = load_checkpoint(ckpt);
        const auto tree = DepthOctree::load(oct);
        const auto pts = grid_points(c.res);
        auto res = median_timed([&] { return query_adaptive(params, tree, pts); });
        stats = res.stats;
        write_stats(c, params, res.stats, near_grid_points(tree, c.res));
    }
    const auto report = assemble_report(cmp, file_bytes(ckpt), file_bytes(oct), stats);
    render_report_table(std::cout, report);
    auto f = open_out(fs::path(c.out) / "report.csv");
    write_report_csv(f, report);
    if (report.has_nan()) {
        std::cerr << "error: a metric is NaN\n";
        return kExitNan;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive-depth neural SDF toolkit"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    RunConfig c;
    add_options(app, c);
    auto* fit = app.add_subcommand("fit", "train a T-MLP on a watertight mesh");
    auto* depthmap = app.add_subcommand("depthmap", "build the network-depth octree for a checkpoint");
    auto* extract = app.add_subcommand("extract", "extract mesh(es) with marching cubes");
    auto* eval = app.add_subcommand("eval", "compare a predicted mesh with ground truth");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*fit) return cmd_fit(app, c);
        if (*depthmap) return cmd_depthmap(app, c);
        if (*extract) return cmd_extract(app, c);
        if (*eval) return cmd_eval(app, c);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return kExitUsage;
}
