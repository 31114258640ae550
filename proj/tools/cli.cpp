#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <optional>
#include <ostream>

#include "CLI11.hpp"

#include "xraycast/bone_suppression.hpp"
#include "xraycast/image_metrics.hpp"
#include "xraycast/io_formats.hpp"
#include "xraycast/parallel.hpp"
#include "xraycast/phantoms.hpp"
#include "xraycast/projector.hpp"
#include "xraycast/xray_physics.hpp"

namespace xraycast::cli {

namespace fs = std::filesystem;

namespace {

// Bad flags, missing files: exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GlobalOptions {
    int threads = 0;
    bool json_errors = false;
};

struct ViewOptions {
    std::string geometry;
    double azimuth = 0.0;
    double elevation = 0.0;
    double pose_range = 18.0;

    void add(CLI::App* app)
    {
        app->add_option("--geometry", geometry, "Projection geometry JSON");
        app->add_option("--azimuth", azimuth, "Azimuth in degrees");
        app->add_option("--elevation", elevation, "Elevation in degrees");
        app->add_option("--pose-range", pose_range,
                        "Warn when |azimuth| or |elevation| exceeds this (degrees)");
    }
};

struct SimulateOptions {
    std::string volume;
    std::string mask;
    std::optional<double> bone_threshold;
    std::string spectrum;
    std::string out = "out";
    std::vector<double> clip;
    ViewOptions view;

    void add(CLI::App* app)
    {
        app->add_option("--volume", volume, "Density volume (.raw with .json sidecar)")->required();
        app->add_option("--mask", mask, "Bone mask volume");
        app->add_option("--bone-threshold", bone_threshold,
                        "Segment bone by thresholding when no mask is given");
        app->add_option("--spectrum", spectrum, "Spectrum JSON (default: built-in 4-bin table)");
        app->add_option("--out", out, "Output directory");
        app->add_option("--clip", clip, "Dynamic-range clip LO HI (fractions)")->expected(2);
        view.add(app);
    }
};

const fs::path& existing(const fs::path& p, const char* flag)
{
    if (!fs::exists(p))
        throw UsageError(std::string(flag) + ": file not found: " + p.string());
    return p;
}

ProjectionGeometry load_geometry(const std::string& path)
{
    return path.empty() ? ProjectionGeometry{} : read_geometry(existing(path, "--geometry"));
}

MaterialSpectrum load_spectrum(const std::string& path)
{
    return path.empty() ? MaterialSpectrum::nist_four_bin()
                        : read_spectrum(existing(path, "--spectrum"));
}

ViewPose checked_pose(const ViewOptions& v, std::ostream& err)
{
    if (std::abs(v.azimuth) > v.pose_range || std::abs(v.elevation) > v.pose_range)
        err << "warning: pose (" << v.azimuth << ", " << v.elevation
            << ") deg lies outside the +/-" << v.pose_range << " deg training range\n";
    return make_pose(v.azimuth, v.elevation);
}

void prepare_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw UsageError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

struct SimulationInputs {
    VoxelVolume volume;
    VoxelVolume mask;
    MaterialSpectrum spectrum;
    ProjectionGeometry geometry;
    Json config;
};

SimulationInputs load_simulation(const SimulateOptions& o)
{
    SimulationInputs in;
    in.volume = read_volume<double>(existing(o.volume, "--volume"));
    if (!o.mask.empty()) {
        in.mask = read_volume<double>(existing(o.mask, "--mask"));
        in.mask.set_kind(VolumeKind::mask);
    } else if (o.bone_threshold) {
        in.mask = segment_bone(in.volume, *o.bone_threshold);
    } else {
        throw UsageError("simulate: either --mask or --bone-threshold is required");
    }
    if (in.mask.grid() != in.volume.grid())
        throw UsageError("--mask: grid differs from --volume");
    in.spectrum = load_spectrum(o.spectrum);
    in.geometry = load_geometry(o.view.geometry);
    if (!o.clip.empty() && o.clip.size() != 2)
        throw UsageError("--clip expects two fractions");

    in.config = {{"volume", o.volume},
                 {"mask", o.mask.empty() ? Json(nullptr) : Json(o.mask)},
                 {"bone_threshold", o.bone_threshold ? Json(*o.bone_threshold) : Json(nullptr)},
                 {"spectrum", to_json(in.spectrum)},
                 {"geometry", to_json(in.geometry)},
                 {"clip", o.clip.empty() ? Json(nullptr) : Json(o.clip)},
                 {"out", o.out}};
    return in;
}

Radiograph render(const SimulationInputs& in, const ViewPose& pose, const SimulateOptions& o,
                  MaterialThickness* thickness_out = nullptr)
{
    MaterialThickness t = material_thickness(in.volume, in.mask, in.geometry, pose);
    Radiograph r = ct2xray_from_thickness(t.bone.values, t.tissue.values, in.spectrum);
    if (!o.clip.empty())
        r = clip_dynamic_range(r, o.clip[0], o.clip[1]);
    if (thickness_out)
        *thickness_out = std::move(t);
    return r;
}

// ---------------------------------------------------------------------------

int cmd_phantom(const std::string& preset, const std::string& phantom_file,
                const std::vector<int>& dims_in, double spacing, const std::string& out,
                const GlobalOptions& g, std::ostream& os)
{
    if (preset.empty() == phantom_file.empty())
        throw UsageError("phantom: give exactly one of --preset or --phantom");
    const AnalyticPhantom ph =
        preset.empty() ? read_phantom(existing(phantom_file, "--phantom")) : phantom_preset(preset);
    Vec3i dims;
    if (dims_in.size() == 1)
        dims = Vec3i::Constant(dims_in[0]);
    else if (dims_in.size() == 3)
        dims = {dims_in[0], dims_in[1], dims_in[2]};
    else
        throw UsageError("--dims expects 1 or 3 integers");
    if ((dims.array() < 1).any() || !(spacing > 0.0))
        throw UsageError("--dims and --spacing must be positive");

    const fs::path base(out);
    if (base.has_parent_path())
        prepare_dir(base.parent_path());
    const fs::path density_path = fs::path(out + ".raw");
    const fs::path mask_path = fs::path(out + "_mask.raw");
    const fs::path description_path = fs::path(out + "_phantom.json");

    const RasterizedPhantom r = rasterize(ph, dims, Vec3::Constant(spacing));
    write_volume(r.density, density_path);
    write_volume(r.bone_mask, mask_path);
    write_json_file(to_json(ph), description_path);

    Json config{{"command", "phantom"},
                {"preset", preset.empty() ? Json(nullptr) : Json(preset)},
                {"phantom", phantom_file.empty() ? Json(nullptr) : Json(phantom_file)},
                {"dims", {dims[0], dims[1], dims[2]}},
                {"spacing_mm", spacing},
                {"threads", g.threads},
                {"outputs",
                 {density_path.string(), mask_path.string(), description_path.string()}}};
    os << config.dump(2) << '\n';
    return kExitOk;
}

int cmd_project(const std::string& volume_path, const ViewOptions& view, const std::string& out,
                const GlobalOptions& g, std::ostream& os, std::ostream& err)
{
    const VoxelVolume volume = read_volume<double>(existing(volume_path, "--volume"));
    const ProjectionGeometry geometry = load_geometry(view.geometry);
    const ViewPose pose = checked_pose(view, err);
    const fs::path out_path(out);
    if (out_path.has_parent_path())
        prepare_dir(out_path.parent_path());
    write_thickness_map(forward_project(volume, geometry, pose), out_path);

    Json config{{"command", "project"}, {"volume", volume_path},  {"geometry", to_json(geometry)},
                {"pose", to_json(pose)},  {"threads", g.threads}, {"outputs", {out}}};
    os << config.dump(2) << '\n';
    return kExitOk;
}

int cmd_backproject(const std::string& image_path, const std::string& like,
                    const ViewOptions& view, bool pose_from_flags, const std::string& out,
                    const GlobalOptions& g, std::ostream& os, std::ostream& err)
{
    const ThicknessMap image = read_thickness_map(existing(image_path, "--image"));
    const Grid grid = read_volume<double>(existing(like, "--like")).grid();
    const ProjectionGeometry geometry =
        view.geometry.empty() ? image.geometry : read_geometry(existing(view.geometry, "--geometry"));
    const ViewPose pose = pose_from_flags ? checked_pose(view, err) : image.pose;
    const fs::path out_path(out);
    if (out_path.has_parent_path())
        prepare_dir(out_path.parent_path());
    write_volume(backproject_single(image, grid, geometry, pose), out_path);

    Json config{{"command", "backproject"}, {"image", image_path},    {"like", like},
                {"geometry", to_json(geometry)}, {"pose", to_json(pose)}, {"threads", g.threads},
                {"outputs", {out}}};
    os << config.dump(2) << '\n';
    return kExitOk;
}

int cmd_simulate(const SimulateOptions& o, const GlobalOptions& g, std::ostream& os,
                 std::ostream& err)
{
    SimulationInputs in = load_simulation(o);
    const ViewPose pose = checked_pose(o.view, err);
    const fs::path dir(o.out);
    prepare_dir(dir);

    MaterialThickness t;
    const Radiograph r = render(in, pose, o, &t);
    write_radiograph(r, dir / "radiograph.raw");
    write_thickness_map(t.bone, dir / "t_bone.raw");
    write_thickness_map(t.tissue, dir / "t_tissue.raw");
    write_image(r.attenuation, dir / "attenuation.raw", "attenuation");

    Json config = in.config;
    config["command"] = "simulate";
    config["pose"] = to_json(pose);
    config["threads"] = g.threads;
    config["outputs"] = {(dir / "radiograph.raw").string(), (dir / "radiograph.png").string(),
                         (dir / "t_bone.raw").string(), (dir / "t_tissue.raw").string(),
                         (dir / "attenuation.raw").string()};
    write_json_file(config, dir / "config.json");
    os << config.dump(2) << '\n';
    return kExitOk;
}

std::string view_name(int index, double azimuth)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "view_%02d_az%+07.3f", index, azimuth);
    return buf;
}

int cmd_sweep(const SimulateOptions& o, int views, double range_deg, const GlobalOptions& g,
              std::ostream& os, std::ostream& err)
{
    if (views < 1)
        throw UsageError("--views must be >= 1");
    if (!(range_deg >= 0.0) || !std::isfinite(range_deg))
        throw UsageError("--range-deg must be >= 0");
    SimulationInputs in = load_simulation(o);
    const fs::path dir(o.out);
    prepare_dir(dir);

    Json azimuths = Json::array();
    Json outputs = Json::array();
    for (int k = 0; k < views; ++k) {
        const double az = views == 1 ? 0.0 : -range_deg + 2.0 * range_deg * k / (views - 1);
        ViewOptions v = o.view;
        v.azimuth = az;
        const ViewPose pose = checked_pose(v, err);
        const fs::path path = dir / (view_name(k, az) + ".raw");
        write_radiograph(render(in, pose, o), path);
        azimuths.push_back(az);
        outputs.push_back(path.string());
    }

    Json config = in.config;
    config["command"] = "sweep";
    config["views"] = views;
    config["range_deg"] = range_deg;
    config["elevation_deg"] = o.view.elevation;
    config["azimuths_deg"] = azimuths;
    config["threads"] = g.threads;
    config["outputs"] = outputs;
    write_json_file(config, dir / "config.json");
    os << config.dump(2) << '\n';
    return kExitOk;
}

int cmd_suppress(const std::string& input, const std::string& t_bone, const std::string& t_tissue,
                 const std::string& spectrum_path, const SuppressionConfig& sc,
                 const std::string& out, const GlobalOptions& g, std::ostream& os)
{
    const Image in = read_image(existing(input, "--input")).values;
    const Image tb = read_image(existing(t_bone, "--t-bone")).values;
    const Image tt = read_image(existing(t_tissue, "--t-tissue")).values;
    const MaterialSpectrum spectrum = load_spectrum(spectrum_path);
    const fs::path dir(out);
    prepare_dir(dir);

    const SuppressionResult res = suppress(in, tb, tt, spectrum, sc);
    write_radiograph(res.suppressed, dir / "suppressed.raw");
    write_radiograph(invert_for_display(res.input_attenuation), dir / "normalized_input.raw");
    for (std::size_t i = 0; i < res.t_recon_tissue.size(); ++i)
        write_image(res.t_recon_tissue[i], dir / ("t_recon_tissue_bin" + std::to_string(i) + ".raw"),
                    "tissue_reconstruction",
                    {{"energy_keV", spectrum.bins[i].energy_keV}, {"bin", i}});

    const Json report{{"reconstruction_residual", res.reconstruction_residual},
                      {"clamp_count", res.clamp_count},
                      {"alpha", res.alpha}};
    write_json_file(report, dir / "report.json");

    Json config{{"command", "suppress"},
                {"input", input},
                {"t_bone", t_bone},
                {"t_tissue", t_tissue},
                {"spectrum", to_json(spectrum)},
                {"alpha", sc.alpha},
                {"epsilon_log", sc.epsilon_log},
                {"threads", g.threads},
                {"report", report},
                {"outputs",
                 {(dir / "suppressed.raw").string(), (dir / "normalized_input.raw").string(),
                  (dir / "report.json").string()}}};
    os << config.dump(2) << '\n';
    return kExitOk;
}

int cmd_compare(const std::string& a_path, const std::string& b_path,
                std::optional<double> range, std::ostream& os)
{
    const Image a = read_image(existing(a_path, "a")).values;
    const Image b = read_image(existing(b_path, "b")).values;
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw UsageError("compare: images differ in size");
    double r = range.value_or(0.0);
    if (!range) {
        r = std::max(a.maxCoeff(), b.maxCoeff()) - std::min(a.minCoeff(), b.minCoeff());
        if (!(r > 0.0))
            r = 1.0;
    }
    const MetricReport m = compare_images(a, b, r);
    Json report{{"psnr_db", std::isinf(m.psnr_db) ? Json("inf") : Json(m.psnr_db)},
                {"ssim", m.ssim},
                {"data_range", m.data_range}};
    os << report.dump(2) << '\n';
    return kExitOk;
}

void report_error(std::ostream& err, bool json, int code, const std::string& message)
{
    if (json)
        err << Json{{"error", message}, {"exit_code", code}}.dump() << '\n';
    else
        err << "error: " << message << '\n';
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Differentiable X-ray projection and radiograph simulation"};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("--threads", g.threads, "Worker threads (default: XRAYCAST_THREADS or all cores)");
    app.add_flag("--json-errors", g.json_errors, "Report errors as JSON on stderr");
    app.fallthrough();

    // phantom
    std::string preset, phantom_file, phantom_out;
    std::vector<int> dims{64};
    double spacing = 4.0;
    auto* phantom = app.add_subcommand("phantom", "Rasterize an analytic phantom");
    phantom->add_option("--preset", preset, "sphere | shell | chest_toy");
    phantom->add_option("--phantom", phantom_file, "Phantom JSON description");
    phantom->add_option("--dims", dims, "Grid size (1 or 3 integers)")->expected(1, 3);
    phantom->add_option("--spacing", spacing, "Voxel spacing in mm");
    phantom->add_option("--out", phantom_out, "Output prefix")->required();

    // project
    std::string project_volume, project_out;
    ViewOptions project_view;
    auto* project = app.add_subcommand("project", "Forward project a volume (DRR)");
    project->add_option("--volume", project_volume)->required();
    project->add_option("--out", project_out, "Thickness map .raw path")->required();
    project_view.add(project);

    // backproject
    std::string bp_image, bp_like, bp_out;
    ViewOptions bp_view;
    auto* backproject = app.add_subcommand("backproject", "Single-image backprojection");
    backproject->add_option("--image", bp_image, "Thickness map .raw")->required();
    backproject->add_option("--like", bp_like, "Volume whose grid receives the result")->required();
    backproject->add_option("--out", bp_out, "Volume .raw path")->required();
    bp_view.add(backproject);

    // simulate
    SimulateOptions sim;
    auto* simulate = app.add_subcommand("simulate", "Polychromatic radiograph for one view");
    sim.add(simulate);

    // sweep
    SimulateOptions sweep_opts;
    sweep_opts.out = "sweep";
    int views = 20;
    double range_deg = 9.0;
    auto* sweep = app.add_subcommand("sweep", "Radiographs over uniformly spaced azimuths");
    sweep_opts.add(sweep);
    sweep->add_option("--views", views, "Number of views");
    sweep->add_option("--range-deg", range_deg, "Azimuths span [-R, R]");

    // suppress
    std::string sup_input, sup_bone, sup_tissue, sup_spectrum, sup_out = "suppressed";
    SuppressionConfig sup_config;
    auto* suppress_cmd = app.add_subcommand("suppress", "Bone suppression by reverse synthesis");
    suppress_cmd->add_option("--input", sup_input, "Input radiograph .raw")->required();
    suppress_cmd->add_option("--t-bone", sup_bone, "Bone thickness map .raw")->required();
    suppress_cmd->add_option("--t-tissue", sup_tissue, "Tissue thickness map .raw")->required();
    suppress_cmd->add_option("--spectrum", sup_spectrum, "Spectrum JSON");
    suppress_cmd->add_option("--alpha", sup_config.alpha, "0 = full suppression, 1 = identity");
    suppress_cmd->add_option("--epsilon-log", sup_config.epsilon_log, "Log argument floor");
    suppress_cmd->add_option("--out", sup_out, "Output directory");

    // compare
    std::string cmp_a, cmp_b;
    std::optional<double> cmp_range;
    auto* compare = app.add_subcommand("compare", "PSNR and SSIM between two images");
    compare->add_option("a", cmp_a)->required();
    compare->add_option("b", cmp_b)->required();
    compare->add_option("--range", cmp_range, "Data range (default: joint value span)");

    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    try {
        app.parse(int(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return kExitOk;
        }
        report_error(err, g.json_errors, kExitUsage, e.what());
        return kExitUsage;
    }

    try {
        if (g.threads == 0) {
            if (const char* env = std::getenv("XRAYCAST_THREADS")) {
                try {
                    g.threads = std::stoi(env);
                } catch (const std::exception&) {
                    throw UsageError("XRAYCAST_THREADS must be an integer");
                }
            }
        }
        if (g.threads < 0)
            throw UsageError("--threads must be >= 1");
        if (g.threads > 0)
            set_num_threads(g.threads);
        else
            g.threads = num_threads();

        if (*phantom)
            return cmd_phantom(preset, phantom_file, dims, spacing, phantom_out, g, out);
        if (*project)
            return cmd_project(project_volume, project_view, project_out, g, out, err);
        if (*backproject) {
            const bool pose_flags = backproject->count("--azimuth") + backproject->count("--elevation") > 0;
            return cmd_backproject(bp_image, bp_like, bp_view, pose_flags, bp_out, g, out, err);
        }
        if (*simulate)
            return cmd_simulate(sim, g, out, err);
        if (*sweep)
            return cmd_sweep(sweep_opts, views, range_deg, g, out, err);
        if (*suppress_cmd)
            return cmd_suppress(sup_input, sup_bone, sup_tissue, sup_spectrum, sup_config, sup_out,
                                g, out);
        if (*compare)
            return cmd_compare(cmp_a, cmp_b, cmp_range, out);
    } catch (const UsageError& e) {
        report_error(err, g.json_errors, kExitUsage, e.what());
        return kExitUsage;
    } catch (const ParseError& e) {
        report_error(err, g.json_errors, kExitUsage, e.what());
        return kExitUsage;
    } catch (const SchemaError& e) {
        report_error(err, g.json_errors, kExitUsage, e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        report_error(err, g.json_errors, kExitComputation, e.what());
        return kExitComputation;
    }
    return kExitUsage;
}

} // namespace xraycast::cli
