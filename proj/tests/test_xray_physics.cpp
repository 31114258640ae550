#include <fstream>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "xraycast/io_formats.hpp"
#include "xraycast/phantoms.hpp"
#include "xraycast/xray_physics.hpp"

using namespace xraycast;

namespace {

const Grid kGrid = Grid::centered(Vec3i(12, 12, 12), Vec3(2, 2, 2));

ProjectionGeometry small_geometry(BeamMode mode = BeamMode::cone_beam)
{
    ProjectionGeometry g;
    g.mode = mode;
    g.source_to_axis_mm = 300;
    g.axis_to_detector_mm = 150;
    g.detector_size_px = {16, 16};
    g.detector_pitch_mm = {2, 2};
    return g;
}

VoxelVolume random_mask(unsigned seed)
{
    VoxelVolume m = oracle::random_volume(kGrid, seed);
    m.set_kind(VolumeKind::mask);
    return m;
}

MaterialSpectrum two_bin()
{
    return {{{50, 0.6, 0.05, 0.02}, {90, 0.4, 0.02, 0.017}}, 1.1};
}

} // namespace

TEST_CASE("spectrum validation")
{
    CHECK_NOTHROW(MaterialSpectrum::nist_four_bin().validate());
    MaterialSpectrum s = two_bin();
    s.bins.clear();
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = two_bin();
    s.bins[1].mu_bone_per_mm = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = two_bin();
    s.bins[0].weight = -1;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = two_bin();
    s.tissue_weight = 1.6;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.tissue_weight = 0.5;
    CHECK_NOTHROW(s.validate());
    CHECK(two_bin().effective_mu_tissue(0) == doctest::Approx(1.1 * 0.02));
}

TEST_CASE("built-in spectrum equals the shipped data file")
{
    const MaterialSpectrum file = read_spectrum(XRAYCAST_DATA_DIR "/spectrum_nist_4bin.json");
    const MaterialSpectrum builtin = MaterialSpectrum::nist_four_bin();
    REQUIRE(file.bins.size() == builtin.bins.size());
    for (std::size_t i = 0; i < file.bins.size(); ++i) {
        CHECK(file.bins[i].energy_keV == builtin.bins[i].energy_keV);
        CHECK(file.bins[i].weight == builtin.bins[i].weight);
        CHECK(file.bins[i].mu_bone_per_mm == builtin.bins[i].mu_bone_per_mm);
        CHECK(file.bins[i].mu_tissue_per_mm == builtin.bins[i].mu_tissue_per_mm);
    }
    CHECK(file.tissue_weight == builtin.tissue_weight);
    CHECK(builtin.total_weight() == doctest::Approx(1.0).epsilon(1e-15));
    // Bone attenuates more than soft tissue and both harden with energy.
    for (std::size_t i = 0; i < builtin.bins.size(); ++i) {
        CHECK(builtin.bins[i].mu_bone_per_mm > builtin.bins[i].mu_tissue_per_mm);
        if (i > 0)
            CHECK(builtin.bins[i].mu_bone_per_mm < builtin.bins[i - 1].mu_bone_per_mm);
    }
}

TEST_CASE("material thickness with trivial masks")
{
    const auto g = small_geometry();
    const ViewPose p = make_pose(10, 0);
    const VoxelVolume ct = oracle::random_volume(kGrid, 1);
    const Image full = forward_project(ct, g, p).values;

    const MaterialThickness none =
        material_thickness(ct, VoxelVolume(kGrid, VolumeKind::mask), g, p);
    CHECK((none.bone.values == 0.0).all());
    CHECK((none.tissue.values == full).all());

    const VoxelVolume ones(kGrid, VoxelVolume::Values::Ones(kGrid.voxel_count()), VolumeKind::mask);
    const MaterialThickness all = material_thickness(ct, ones, g, p);
    CHECK((all.tissue.values == 0.0).all());
    CHECK((all.bone.values == full).all());
}

TEST_CASE("material thickness conserves the total projection")
{
    const auto g = small_geometry();
    const ViewPose p = make_pose(-8, 4);
    const VoxelVolume ct = oracle::random_volume(kGrid, 2);
    const Image full = forward_project(ct, g, p).values;
    for (unsigned seed = 0; seed < 5; ++seed) {
        const MaterialThickness t = material_thickness(ct, random_mask(10 + seed), g, p);
        CHECK(((t.bone.values + t.tissue.values) - full).abs().maxCoeff() <=
              1e-10 * full.abs().maxCoeff());
    }
}

TEST_CASE("material thickness input checks")
{
    const auto g = small_geometry();
    const VoxelVolume ct = oracle::random_volume(kGrid, 3);
    const Grid other = Grid::centered(Vec3i(12, 12, 11), Vec3(2, 2, 2));
    CHECK_THROWS_AS(material_thickness(ct, VoxelVolume(other, VolumeKind::mask), g, ViewPose{}),
                    std::invalid_argument);
    VoxelVolume bad(kGrid, VolumeKind::mask);
    bad.values()[0] = 2.0;
    CHECK_THROWS_AS(material_thickness(ct, bad, g, ViewPose{}), std::invalid_argument);
}

TEST_CASE("attenuation model")
{
    const MaterialSpectrum s = MaterialSpectrum::nist_four_bin();
    const Image zero = Image::Zero(4, 5);
    CHECK(((attenuate(zero, zero, s) - 1.0).abs() <= 1e-15).all());

    const MaterialSpectrum merged = MaterialSpectrum::single_bin(0.03, 0.03);
    const Image tb = oracle::random_image(5, 4, 1, 0, 50), tt = oracle::random_image(5, 4, 2, 0, 50);
    const Image expected = (-0.03 * (tb + tt)).exp();
    CHECK((attenuate(tb, tt, merged) - expected).abs().maxCoeff() <= 1e-15);

    // Doubling mu squares a single-bin attenuation.
    const MaterialSpectrum s1 = MaterialSpectrum::single_bin(0.04, 0.02, 1.2);
    const MaterialSpectrum s2 = MaterialSpectrum::single_bin(0.08, 0.04, 1.2);
    CHECK((attenuate(tb, tt, s2) - attenuate(tb, tt, s1).square()).abs().maxCoeff() <= 1e-14);

    CHECK_THROWS_AS(attenuate(-tb, tt, s), std::invalid_argument);
    CHECK_THROWS_AS(attenuate(tb, Image::Zero(3, 3), s), std::invalid_argument);
    Image nan = tb;
    nan(0, 0) = std::nan("");
    CHECK_THROWS_AS(attenuate(nan, tt, s), std::invalid_argument);
}

TEST_CASE("attenuation decreases strictly with thickness")
{
    const MaterialSpectrum s = two_bin();
    Image tb = oracle::random_image(3, 3, 3, 0, 20), tt = oracle::random_image(3, 3, 4, 0, 20);
    const Image base = attenuate(tb, tt, s);
    CHECK((base <= s.total_weight()).all());
    CHECK((base > 0.0).all());
    tb(1, 1) += 0.5;
    Image after = attenuate(tb, tt, s);
    CHECK(after(1, 1) < base(1, 1));
    tt(2, 0) += 0.5;
    after = attenuate(tb, tt, s);
    CHECK(after(2, 0) < base(2, 0));
}

TEST_CASE("attenuation equals the total weight only where nothing attenuates")
{
    const MaterialSpectrum s = two_bin();
    Image tb = Image::Zero(2, 2), tt = Image::Zero(2, 2);
    tt(0, 1) = 1e-3;
    tb(1, 0) = 1e-3;
    const Image a = attenuate(tb, tt, s);
    CHECK(a(0, 0) == s.total_weight());
    CHECK(a(1, 1) == s.total_weight());
    CHECK(a(0, 1) < s.total_weight());
    CHECK(a(1, 0) < s.total_weight());
}

TEST_CASE("display inversion")
{
    const MaterialSpectrum s = two_bin();
    const Image tb = oracle::random_image(6, 5, 5, 0, 30), tt = oracle::random_image(6, 5, 6, 0, 30);
    const Radiograph r = ct2xray_from_thickness(tb, tt, s);
    CHECK((r.values >= 0.0).all());
    CHECK((r.values == 0.0).count() >= 1);
    CHECK(((r.values + r.attenuation) - r.attenuation.maxCoeff()).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("ct2xray composes thickness and attenuation")
{
    const auto g = small_geometry();
    const ViewPose p = make_pose(5, -5);
    const VoxelVolume ct = oracle::random_volume(kGrid, 7);
    const VoxelVolume m = random_mask(8);
    const MaterialSpectrum s = MaterialSpectrum::nist_four_bin();
    const Radiograph direct = ct2xray(ct, m, g, p, s);
    const MaterialThickness t = material_thickness(ct, m, g, p);
    const Radiograph composed = ct2xray_from_thickness(t.bone.values, t.tissue.values, s);
    CHECK((direct.values == composed.values).all());
    CHECK((direct.attenuation == composed.attenuation).all());

    const Radiograph empty = ct2xray(VoxelVolume(kGrid), m, g, p, s);
    CHECK((empty.values == 0.0).all());
}

TEST_CASE("sphere radiograph peaks at the center and vanishes off the sphere")
{
    const RasterizedPhantom r = rasterize(phantom_preset("sphere"), Vec3i(48, 48, 48), Vec3(4, 4, 4));
    ProjectionGeometry g;
    g.detector_size_px = {65, 65};
    g.detector_pitch_mm = {6, 6};
    const Radiograph x = ct2xray(r.density, r.bone_mask, g, ViewPose{}, MaterialSpectrum::nist_four_bin());
    // Near the center the chord varies by less than the voxelization error, so the argmax
    // must land on a ray whose analytic chord is within two voxel widths of the diameter.
    Eigen::Index row, col;
    x.values.maxCoeff(&row, &col);
    const RayGenerator rays(g, ViewPose{}, r.density.grid().bounds());
    const AnalyticPhantom ph = phantom_preset("sphere");
    const LineIntegral at_peak = analytic_line_integral(ph, rays(int(col), int(row)));
    CHECK(at_peak.bone + at_peak.tissue >= 2 * 80.0 - 2 * 4.0);
    // Corner rays miss the sphere: full transmission, zero display value.
    CHECK(x.values(0, 0) == 0.0);
    CHECK(x.values(64, 64) == 0.0);
    CHECK(x.values(32, 0) == 0.0);
}

TEST_CASE("constant bone offset keeps the single-bin argmax")
{
    const MaterialSpectrum s = MaterialSpectrum::single_bin(0.05, 0.02);
    const Image tb = oracle::random_image(8, 8, 9, 0, 20), tt = oracle::random_image(8, 8, 10, 0, 20);
    Eigen::Index r0, c0, r1, c1;
    const Image a0 = attenuate(tb, tt, s);
    const Image a1 = attenuate(tb + 7.0, tt, s);
    a0.maxCoeff(&r0, &c0);
    a1.maxCoeff(&r1, &c1);
    CHECK((a0 != a1).any());
    CHECK(r0 == r1);
    CHECK(c0 == c1);
    CHECK(ct2xray_from_thickness(tb + 7.0, tt, s).values(r0, c0) == 0.0);
}

TEST_CASE("thickness cotangents match finite differences of the mean radiograph")
{
    const MaterialSpectrum s = two_bin();
    const Image tb = oracle::random_image(5, 4, 11, 0, 40), tt = oracle::random_image(5, 4, 12, 0, 40);
    const Image cot = Image::Constant(4, 5, 1.0 / 20.0);
    const ThicknessCotangent g = ct2xray_vjp_thickness(tb, tt, s, cot);
    for (int n = 0; n < 20; ++n) {
        const int r = n / 5, c = n % 5;
        auto mean_bone = [&](double x) {
            Image b = tb;
            b(r, c) = x;
            return ct2xray_from_thickness(b, tt, s).values.mean();
        };
        auto mean_tissue = [&](double x) {
            Image t = tt;
            t(r, c) = x;
            return ct2xray_from_thickness(tb, t, s).values.mean();
        };
        const double fb = oracle::central_difference(mean_bone, tb(r, c), 1e-4);
        const double ft = oracle::central_difference(mean_tissue, tt(r, c), 1e-4);
        CHECK(std::abs(fb - g.bone(r, c)) <= 1e-4 * std::abs(g.bone(r, c)) + 1e-12);
        CHECK(std::abs(ft - g.tissue(r, c)) <= 1e-4 * std::abs(g.tissue(r, c)) + 1e-12);
    }
}

TEST_CASE("volume gradient: zero cotangent and mask routing")
{
    const auto g = small_geometry(BeamMode::parallel_beam);
    const ViewPose p = make_pose(3, 2);
    const VoxelVolume ct = oracle::random_volume(kGrid, 13, 0.5, 1.5);
    VoxelVolume m(kGrid, VolumeKind::mask);
    const MaterialSpectrum s = MaterialSpectrum::nist_four_bin();

    const VoxelVolume zero =
        gradient_ct2xray_wrt_volume(ct, m, g, p, s, Image::Zero(g.rows(), g.columns()));
    CHECK((zero.values() == 0.0).all());

    const Image cot = oracle::random_image(g.columns(), g.rows(), 14);
    const MaterialThickness t = material_thickness(ct, m, g, p);
    const ThicknessCotangent tc = ct2xray_vjp_thickness(t.bone.values, t.tissue.values, s, cot);
    const VoxelVolume via_tissue = forward_project_vjp(kGrid, g, p, {tc.tissue, p, g});
    CHECK((gradient_ct2xray_wrt_volume(ct, m, g, p, s, cot).values() == via_tissue.values()).all());

    m.values().setOnes();
    const MaterialThickness tb = material_thickness(ct, m, g, p);
    const ThicknessCotangent bc = ct2xray_vjp_thickness(tb.bone.values, tb.tissue.values, s, cot);
    const VoxelVolume via_bone = forward_project_vjp(kGrid, g, p, {bc.bone, p, g});
    CHECK((gradient_ct2xray_wrt_volume(ct, m, g, p, s, cot).values() == via_bone.values()).all());
}

TEST_CASE("segmentation by threshold")
{
    const VoxelVolume v = oracle::random_volume(kGrid, 15, 1.0, 2.0);
    CHECK((segment_bone(v, 0.5).values() == 1.0).all());
    CHECK((segment_bone(v, 2.5).values() == 0.0).all());
    CHECK(segment_bone(v, 1.5).kind() == VolumeKind::mask);
    CHECK_THROWS_AS(segment_bone(v, std::nan("")), std::invalid_argument);

    const AnalyticPhantom shell = phantom_preset("shell");
    const RasterizedPhantom r = rasterize(shell, Vec3i(32, 32, 32), Vec3(6, 6, 6));
    const VoxelVolume mask = segment_bone(r.density, preset_bone_threshold("shell"));
    CHECK((mask.values() == r.bone_mask.values()).all());
    CHECK((mask.values() > 0).any());
}

TEST_CASE("dynamic range clipping")
{
    Radiograph ramp;
    ramp.values = Image(1, 11);
    for (int i = 0; i <= 10; ++i)
        ramp.values(0, i) = i;
    ramp.attenuation = 10.0 - ramp.values;

    const Radiograph same = clip_dynamic_range(ramp, 0.0, 1.0);
    CHECK((same.values == ramp.values).all());

    const Radiograph c = clip_dynamic_range(ramp, 0.7, 1.0);
    for (int i = 0; i <= 7; ++i)
        CHECK(c.values(0, i) == doctest::Approx(0.0));
    for (int i = 7; i <= 10; ++i)
        CHECK(c.values(0, i) == doctest::Approx((i - 7.0) / 0.3));
    CHECK(c.values.maxCoeff() == doctest::Approx(10.0));
    CHECK((c.attenuation == ramp.attenuation).all());

    Radiograph flat;
    flat.values = Image::Constant(3, 3, 4.0);
    flat.attenuation = Image::Constant(3, 3, 0.5);
    CHECK((clip_dynamic_range(flat, 0.7, 1.0).values == 4.0).all());

    CHECK_THROWS_AS(clip_dynamic_range(ramp, 0.5, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(clip_dynamic_range(ramp, -0.1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(clip_dynamic_range(ramp, 0.0, 1.1), std::invalid_argument);
}

TEST_CASE("drr is the plain projection")
{
    const auto g = small_geometry();
    const VoxelVolume ct = oracle::random_volume(kGrid, 16);
    CHECK((drr(ct, g, ViewPose{}).values == forward_project(ct, g, ViewPose{}).values).all());
}
