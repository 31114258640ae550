#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "xraycast/geometry.hpp"
#include "xraycast/volume.hpp"

using namespace xraycast;

namespace {

void check_near(const Mat4& a, const Mat4& b, double tol)
{
    CHECK((a - b).cwiseAbs().maxCoeff() <= tol);
}

BoundingBox cube(double half) { return {Vec3::Constant(-half), Vec3::Constant(half)}; }

} // namespace

TEST_CASE("zero angles give the identity transform")
{
    const ViewPose p = make_pose(0, 0);
    CHECK(p.matrix == Mat4::Identity());
}

TEST_CASE("quarter turn applied four times returns to identity")
{
    const ViewPose q = make_pose(90, 0);
    const ViewPose half = compose(q, q);
    Mat3 expected = Mat3::Identity();
    expected(0, 0) = -1;
    expected(1, 1) = -1;
    CHECK((half.rotation() - expected).cwiseAbs().maxCoeff() <= 1e-12);
    check_near(compose(half, half).matrix, Mat4::Identity(), 1e-12);
}

TEST_CASE("opposite azimuths cancel")
{
    check_near(compose(make_pose(9, 0), make_pose(-9, 0)).matrix, Mat4::Identity(), 1e-12);
}

TEST_CASE("non-finite pose arguments are rejected")
{
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(make_pose(nan, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_pose(0, INFINITY), std::invalid_argument);
    CHECK_THROWS_AS(make_pose(0, 0, Vec3(0, nan, 0)), std::invalid_argument);
}

TEST_CASE("rotation order: azimuth about +Z, then elevation about the rotated +X")
{
    const ViewPose p = make_pose(90, 0);
    // The viewing axis +Y turns to -X under a positive quarter azimuth.
    CHECK((p.rotation() * Vec3::UnitY() - Vec3(-1, 0, 0)).norm() < 1e-12);

    const ViewPose e = make_pose(0, 90);
    CHECK((e.rotation() * Vec3::UnitY() - Vec3(0, 0, 1)).norm() < 1e-12);

    // Elevation acts about the lateral axis after azimuth: it never tilts
    // the rotated lateral axis out of the horizontal plane.
    const ViewPose both = make_pose(30, 40);
    const Vec3 lateral = both.rotation() * Vec3::UnitX();
    CHECK(std::abs(lateral.z()) < 1e-12);
    const Vec3 expected_lateral(std::cos(M_PI / 6), std::sin(M_PI / 6), 0);
    CHECK((lateral - expected_lateral).norm() < 1e-12);
}

TEST_CASE("poses are orthonormal with unit determinant and invert exactly")
{
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> ang(-180, 180), tr(-50, 50);
    for (int n = 0; n < 50; ++n) {
        const ViewPose p = make_pose(ang(rng), ang(rng), Vec3(tr(rng), tr(rng), tr(rng)));
        const Mat3 r = p.rotation();
        CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(std::abs(r.determinant() - 1.0) <= 1e-12);
        check_near(compose(p, inverse(p)).matrix, Mat4::Identity(), 1e-12);
        check_near(compose(inverse(p), p).matrix, Mat4::Identity(), 1e-12);
    }
}

TEST_CASE("angles are recovered from a matrix")
{
    const ViewPose p = make_pose(12.5, -7.25, Vec3(1, 2, 3));
    const ViewPose q = ViewPose::from_matrix(p.matrix);
    CHECK(q.azimuth_deg == doctest::Approx(12.5).epsilon(1e-12));
    CHECK(q.elevation_deg == doctest::Approx(-7.25).epsilon(1e-12));
    CHECK(q.translation_mm == Vec3(1, 2, 3));

    // Roll about the viewing axis is outside the azimuth/elevation family.
    Mat4 roll = Mat4::Identity();
    roll.topLeftCorner<3, 3>() = Eigen::AngleAxisd(0.3, Vec3::UnitY()).toRotationMatrix();
    CHECK(std::isnan(ViewPose::from_matrix(roll).azimuth_deg));
}

TEST_CASE("geometry validation")
{
    ProjectionGeometry g;
    CHECK_NOTHROW(g.validate());
    CHECK(g.source_to_axis_mm == 1000.0);
    CHECK(g.axis_to_detector_mm == 500.0);
    CHECK(g.columns() == 256);
    CHECK(g.rows() == 256);
    CHECK(g.detector_pitch_mm[0] == 2.0);
    CHECK_FALSE(g.step_mm.has_value());

    auto bad = g;
    bad.axis_to_detector_mm = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = g;
    bad.detector_size_px = {0, 4};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = g;
    bad.detector_pitch_mm = {1, -1};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = g;
    bad.step_mm = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = g;
    bad.source_to_axis_mm = -1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("parallel central ray runs along the viewing axis through the center")
{
    ProjectionGeometry g;
    g.mode = BeamMode::parallel_beam;
    g.detector_size_px = {5, 5};
    const BoundingBox box{Vec3(10, 20, 30), Vec3(30, 60, 50)};
    const Ray r = generate_ray(g, ViewPose{}, {2, 2}, box);
    REQUIRE(r.hit);
    CHECK((r.direction - Vec3::UnitY()).norm() < 1e-12);
    const Vec3 mid = r.at(0.5 * (r.entry_t + r.exit_t));
    CHECK((mid - box.center()).norm() < 1e-12);
    CHECK(r.exit_t - r.entry_t == doctest::Approx(40.0));
}

TEST_CASE("cone central ray passes source and center symmetrically")
{
    ProjectionGeometry g;
    g.detector_size_px = {7, 7};
    const BoundingBox box = cube(20);
    const Ray r = generate_ray(g, ViewPose{}, {3, 3}, box);
    REQUIRE(r.hit);
    CHECK((r.origin_mm - Vec3(0, -1000, 0)).norm() < 1e-12);
    CHECK(std::abs(r.direction.norm() - 1.0) < 1e-12);
    CHECK(r.entry_t == doctest::Approx(980.0));
    CHECK(r.exit_t == doctest::Approx(1020.0));
    CHECK(std::abs((r.entry_t + r.exit_t) / 2 - 1000.0) < 1e-9);
}

TEST_CASE("corner pixel of a wide detector misses")
{
    for (BeamMode mode : {BeamMode::parallel_beam, BeamMode::cone_beam}) {
        ProjectionGeometry g;
        g.mode = mode;
        g.detector_size_px = {64, 64};
        g.detector_pitch_mm = {4, 4};
        const BoundingBox box = cube(20);
        const Ray r = generate_ray(g, ViewPose{}, {0, 0}, box);
        CHECK_FALSE(r.hit);
        const double lo = mode == BeamMode::cone_beam ? 0.0 : -2000.0;
        const double hi = mode == BeamMode::cone_beam ? 1600.0 : 2000.0;
        CHECK_FALSE(oracle::line_hits_box(r.origin_mm, r.direction, box.lower, box.upper, lo, hi));
    }
}

TEST_CASE("slab clipping agrees with brute-force line sampling")
{
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    const BoundingBox box{Vec3(-10, -5, -3), Vec3(10, 5, 3)};
    int hits = 0;
    for (int n = 0; n < 200; ++n) {
        const Vec3 o(15 * u(rng), 15 * u(rng), 15 * u(rng));
        const Vec3 d = Vec3(u(rng), u(rng), u(rng)).normalized();
        double t0 = -60, t1 = 60;
        const bool hit = clip_to_box(o, d, box, t0, t1);
        const bool brute = oracle::line_hits_box(o, d, box.lower, box.upper, -60, 60);
        // Grazing lines can disagree within the sampling resolution.
        if (hit != brute) {
            CHECK(t1 - t0 < 0.01);
            continue;
        }
        if (hit) {
            ++hits;
            CHECK(box.contains(o + t0 * d, 1e-9));
            CHECK(box.contains(o + t1 * d, 1e-9));
            CHECK_FALSE(box.contains(o + (t0 - 0.01) * d));
            CHECK_FALSE(box.contains(o + (t1 + 0.01) * d));
        }
    }
    CHECK(hits > 20);
}

TEST_CASE("posed rays are identity rays moved by the pose matrix")
{
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> ang(-30, 30), tr(-5, 5);
    const BoundingBox box{Vec3(-40, -30, -20), Vec3(40, 50, 60)};
    const Vec3 c = box.center();
    for (BeamMode mode : {BeamMode::cone_beam, BeamMode::parallel_beam}) {
        ProjectionGeometry g;
        g.mode = mode;
        g.detector_size_px = {16, 12};
        g.detector_pitch_mm = {6, 7};
        for (int n = 0; n < 10; ++n) {
            const ViewPose p = make_pose(ang(rng), ang(rng), Vec3(tr(rng), tr(rng), tr(rng)));
            const RayGenerator id(g, ViewPose{}, box), posed(g, p, box);
            for (int row = 0; row < g.rows(); row += 3)
                for (int col = 0; col < g.columns(); col += 3) {
                    const Ray a = id(col, row), b = posed(col, row);
                    const Vec3 moved = c + p.rotation() * (a.origin_mm - c) + p.translation();
                    CHECK((moved - b.origin_mm).norm() < 1e-9);
                    CHECK((p.rotation() * a.direction - b.direction).norm() < 1e-12);
                }
        }
    }
}

TEST_CASE("samples between entry and exit stay inside the box")
{
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> ang(-40, 40);
    const BoundingBox box{Vec3(-31, -31, -15.5), Vec3(31, 31, 15.5)};
    ProjectionGeometry g;
    g.detector_size_px = {20, 20};
    g.detector_pitch_mm = {5, 5};
    const double step = 0.37;
    for (int n = 0; n < 5; ++n) {
        const RayGenerator gen(g, make_pose(ang(rng), ang(rng)), box);
        for (int row = 0; row < g.rows(); ++row)
            for (int col = 0; col < g.columns(); ++col) {
                const Ray r = gen(col, row);
                if (!r.hit)
                    continue;
                CHECK(r.entry_t <= r.exit_t);
                for (double t = r.entry_t; t <= r.exit_t; t += step)
                    REQUIRE(box.contains(r.at(t), 1e-9));
            }
    }
}

TEST_CASE("parallel rays share one direction; cone rays are unit length")
{
    ProjectionGeometry g;
    g.detector_size_px = {9, 9};
    const BoundingBox box = cube(50);
    const ViewPose p = make_pose(17, -4);
    g.mode = BeamMode::parallel_beam;
    const RayGenerator par(g, p, box);
    const Vec3 d0 = par(0, 0).direction;
    g.mode = BeamMode::cone_beam;
    const RayGenerator cone(g, p, box);
    for (int row = 0; row < 9; ++row)
        for (int col = 0; col < 9; ++col) {
            CHECK(std::abs(par(col, row).direction.dot(d0) - 1.0) <= 1e-12);
            CHECK(std::abs(cone(col, row).direction.norm() - 1.0) <= 1e-12);
        }
}

TEST_CASE("detector layout: columns along +X, rows along -Z")
{
    ProjectionGeometry g;
    g.mode = BeamMode::parallel_beam;
    g.detector_size_px = {4, 3};
    g.detector_pitch_mm = {2, 3};
    const BoundingBox box = cube(100);
    const Ray top_left = generate_ray(g, ViewPose{}, {0, 0}, box);
    CHECK((top_left.origin_mm - Vec3(-3, 0, 3)).norm() < 1e-12);
    const Ray bottom_right = generate_ray(g, ViewPose{}, {3, 2}, box);
    CHECK((bottom_right.origin_mm - Vec3(3, 0, -3)).norm() < 1e-12);
    CHECK_THROWS_AS(generate_ray(g, ViewPose{}, {4, 0}, box), std::invalid_argument);
    CHECK_THROWS_AS(generate_ray(g, ViewPose{}, {0, -1}, box), std::invalid_argument);
}
