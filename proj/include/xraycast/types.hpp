#pragma once

#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace xraycast {

using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Detector images are row-major: rows run along the detector's vertical
// axis (top row first), columns along its horizontal axis, so the raw
// buffer is x-fastest like the volumes.
template <typename Scalar>
using ImageT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Image = ImageT<double>;

// Raw file or JSON sidecar could not be decoded.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Decoded metadata violates a type invariant.
class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input carries no usable signal (e.g. an all-zero radiograph).
class DegenerateInputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace xraycast
