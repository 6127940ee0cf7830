#include "radsel/projector.hpp"

#include "radsel/binary_io.hpp"
#include "radsel/error.hpp"
#include "radsel/parallel.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numbers>

namespace radsel {

namespace {

constexpr int kTile = 16;

// Everything the forward map and its adjoint need for one primitive and pose.
struct Projected {
    bool ok = false;
    double rho = 0.0;
    double qd = 0.0; ///< dir^T Sigma^-1 dir
    double a0 = 0.0; ///< line integral per unit density, sqrt(2 pi / qd)
    Eigen::Matrix3d sigma;
    Eigen::Matrix3d sigma_inv;
    Eigen::Matrix<double, 2, 3> T; ///< local linear map world -> detector plane
    Eigen::Matrix<double, 2, 3> Jc;
    Eigen::Vector2d mean;
    Eigen::Matrix2d cov;
    Eigen::Vector3d dir;
    Eigen::Vector3d offset; ///< position - eye
    Eigen::Vector3d cam;
};

Projected project_internal(const GaussianPrimitive &g, const ScannerPose &pose, const Eigen::Matrix3d &rot) {
    Projected p;
    p.sigma = covariance(g);
    p.sigma_inv = p.sigma.inverse();
    p.rho = g.density();
    p.offset = g.position - pose.eye;
    if (pose.beam.kind == BeamKind::Parallel) {
        p.T = rot.topRows<2>();
        p.mean = p.T * p.offset;
        p.dir = rot.row(2).transpose();
    } else {
        const double s = pose.beam.source_to_detector;
        p.cam = rot * p.offset;
        const double cw = p.cam.z();
        if (cw <= 1e-9 * s) {
            return p;
        }
        p.Jc << s / cw, 0.0, -s * p.cam.x() / (cw * cw), 0.0, s / cw, -s * p.cam.y() / (cw * cw);
        p.T = p.Jc * rot;
        p.mean = Eigen::Vector2d(s * p.cam.x() / cw, s * p.cam.y() / cw);
        p.dir = p.offset.normalized();
    }
    p.cov = p.T * p.sigma * p.T.transpose();
    p.qd = p.dir.dot(p.sigma_inv * p.dir);
    p.a0 = std::sqrt(2.0 * std::numbers::pi / p.qd);
    p.ok = std::isfinite(p.a0) && p.cov.determinant() > 0.0;
    return p;
}

// Footprint in pixel-index coordinates (pixel centers at integers).
struct PixelSplat {
    double mx = 0, my = 0;
    double a = 0, b = 0, c = 0; ///< conic in pixel units
    double amp = 0;
    int r_lo = 0, r_hi = -1, c_lo = 0, c_hi = -1;
};

PixelSplat make_splat(const Eigen::Vector2d &mean, const Eigen::Matrix2d &cov, double amp, const Detector &det,
                      double cutoff) {
    PixelSplat s;
    const double pitch = det.pitch;
    s.mx = mean.x() / pitch + 0.5 * det.width - 0.5;
    s.my = mean.y() / pitch + 0.5 * det.height - 0.5;
    const Eigen::Matrix2d conic = cov.inverse() * (pitch * pitch);
    s.a = conic(0, 0);
    s.b = conic(0, 1);
    s.c = conic(1, 1);
    s.amp = amp;
    const double hx = cutoff * std::sqrt(cov(0, 0)) / pitch;
    const double hy = cutoff * std::sqrt(cov(1, 1)) / pitch;
    if (!std::isfinite(hx) || !std::isfinite(hy) || !std::isfinite(s.mx) || !std::isfinite(s.my)) {
        return s;
    }
    s.c_lo = std::max(0, static_cast<int>(std::ceil(std::max(s.mx - hx, -1.0))));
    s.c_hi = std::min(det.width - 1, static_cast<int>(std::floor(std::min(s.mx + hx, double(det.width)))));
    s.r_lo = std::max(0, static_cast<int>(std::ceil(std::max(s.my - hy, -1.0))));
    s.r_hi = std::min(det.height - 1, static_cast<int>(std::floor(std::min(s.my + hy, double(det.height)))));
    return s;
}

// Visits pixels of rows [r0, r1) and columns [c0, c1) inside the cutoff
// ellipse: visit(row, col, dx, dy, e) with offsets in pixel units.
template <typename Visit>
void for_each_pixel(const PixelSplat &s, int width, int r0, int r1, int c0, int c1, double cutoff, Visit &&visit) {
    const int row_lo = std::max(r0, s.r_lo);
    const int row_hi = std::min(r1 - 1, s.r_hi);
    const double r2 = cutoff * cutoff;
    const double decay = std::exp(-s.a);
    for (int r = row_lo; r <= row_hi; ++r) {
        const double dy = r - s.my;
        const double beta = s.b * dy;
        const double gamma = s.c * dy * dy;
        const double disc = beta * beta - s.a * (gamma - r2);
        if (disc < 0.0) {
            continue;
        }
        const double root = std::sqrt(disc);
        const int col_lo = std::max({c0, s.c_lo, static_cast<int>(std::ceil(s.mx + (-beta - root) / s.a))});
        const int col_hi = std::min({c1 - 1, s.c_hi, static_cast<int>(std::floor(s.mx + (-beta + root) / s.a))});
        if (col_lo > col_hi) {
            continue;
        }
        double dx = col_lo - s.mx;
        double e = std::exp(-0.5 * (s.a * dx * dx + 2.0 * beta * dx + gamma));
        double ratio = std::exp(-0.5 * (s.a * (2.0 * dx + 1.0) + 2.0 * beta));
        std::size_t idx = static_cast<std::size_t>(r) * width + col_lo;
        for (int col = col_lo; col <= col_hi; ++col, ++idx) {
            visit(idx, dx, dy, e);
            e *= ratio;
            ratio *= decay;
            dx += 1.0;
        }
    }
}

struct TiledSplats {
    std::vector<PixelSplat> splats;          ///< per primitive
    std::vector<std::vector<std::size_t>> bins; ///< per tile, primitive indices ascending
    int tiles_x = 0;
};

TiledSplats build_splats(const GaussianField &field, const ScannerPose &pose, const RenderOptions &opt) {
    if (!opt.density_scale.empty() && opt.density_scale.size() != field.size()) {
        throw InputError("render: density_scale must have one entry per primitive");
    }
    const Eigen::Matrix3d rot = pose.rotation();
    const Detector &det = pose.detector;
    TiledSplats t;
    t.splats.resize(field.size());
    t.tiles_x = (det.width + kTile - 1) / kTile;
    const int tiles_y = (det.height + kTile - 1) / kTile;
    t.bins.resize(static_cast<std::size_t>(t.tiles_x) * tiles_y);
    for (std::size_t p = 0; p < field.size(); ++p) {
        const Projected pr = project_internal(field.primitives[p], pose, rot);
        if (!pr.ok) {
            continue;
        }
        double amp = pr.rho * pr.a0;
        if (!opt.density_scale.empty()) {
            amp *= opt.density_scale[p];
        }
        if (amp == 0.0) {
            continue;
        }
        t.splats[p] = make_splat(pr.mean, pr.cov, amp, det, opt.cutoff);
        const PixelSplat &s = t.splats[p];
        if (s.r_lo > s.r_hi || s.c_lo > s.c_hi) {
            continue;
        }
        for (int ty = s.r_lo / kTile; ty <= s.r_hi / kTile; ++ty) {
            for (int tx = s.c_lo / kTile; tx <= s.c_hi / kTile; ++tx) {
                t.bins[static_cast<std::size_t>(ty) * t.tiles_x + tx].push_back(p);
            }
        }
    }
    return t;
}

bool ray_box(const Eigen::Vector3d &o, const Eigen::Vector3d &d, const Aabb &box, double &t0, double &t1) {
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-300) {
            if (o[a] < box.lo[a] || o[a] > box.hi[a]) {
                return false;
            }
            continue;
        }
        double ta = (box.lo[a] - o[a]) / d[a];
        double tb = (box.hi[a] - o[a]) / d[a];
        if (ta > tb) {
            std::swap(ta, tb);
        }
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return t1 > t0;
}

double trilinear(const VoxelGrid &grid, const Eigen::Vector3d &x) {
    const GridSpec &s = grid.spec;
    int i0[3], i1[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        const double u = std::clamp((x[a] - s.origin[a]) / s.spacing[a], 0.0, double(s.dims[a] - 1));
        i0[a] = std::min(static_cast<int>(u), s.dims[a] - 1);
        i1[a] = std::min(i0[a] + 1, s.dims[a] - 1);
        f[a] = u - i0[a];
    }
    auto v = [&](int i, int j, int k) { return grid.values[s.index(i, j, k)]; };
    const double c00 = v(i0[0], i0[1], i0[2]) * (1 - f[0]) + v(i1[0], i0[1], i0[2]) * f[0];
    const double c10 = v(i0[0], i1[1], i0[2]) * (1 - f[0]) + v(i1[0], i1[1], i0[2]) * f[0];
    const double c01 = v(i0[0], i0[1], i1[2]) * (1 - f[0]) + v(i1[0], i0[1], i1[2]) * f[0];
    const double c11 = v(i0[0], i1[1], i1[2]) * (1 - f[0]) + v(i1[0], i1[1], i1[2]) * f[0];
    const double c0 = c00 * (1 - f[1]) + c10 * f[1];
    const double c1 = c01 * (1 - f[1]) + c11 * f[1];
    return c0 * (1 - f[2]) + c1 * f[2];
}

nlohmann::json vec_json(const Eigen::Ref<const Eigen::VectorXd> &v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        a.push_back(v[i]);
    }
    return a;
}

} // namespace

ScannerPose ScannerPose::look_at(const Eigen::Vector3d &eye, const Eigen::Vector3d &target, const Beam &beam,
                                 const Detector &detector) {
    const Eigen::Vector3d w = (target - eye).normalized();
    Eigen::Vector3d up = Eigen::Vector3d::UnitZ() - w.z() * w;
    if (up.norm() < 1e-9) {
        up = Eigen::Vector3d::UnitX() - w.x() * w;
    }
    const Eigen::Vector3d v = up.normalized();
    const Eigen::Vector3d u = v.cross(w);
    Eigen::Matrix3d rot;
    rot.row(0) = u.transpose();
    rot.row(1) = v.transpose();
    rot.row(2) = w.transpose();
    const Eigen::Quaterniond q(rot);
    ScannerPose pose;
    pose.orientation = Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
    pose.eye = eye;
    pose.beam = beam;
    pose.detector = detector;
    return pose;
}

Eigen::Matrix3d ScannerPose::rotation() const {
    const Eigen::Vector4d q = orientation.normalized();
    return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
}

void ScannerPose::validate() const {
    if (detector.width < 1 || detector.height < 1) {
        throw InputError("detector must be at least 1x1 pixels");
    }
    if (!(detector.pitch > 0.0)) {
        throw InputError("detector pitch must be > 0");
    }
    if (beam.kind == BeamKind::Cone && !(beam.source_to_detector > 0.0)) {
        throw InputError("cone beam needs source_to_detector > 0");
    }
}

double ProjectionImage::max_value() const {
    return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

Footprint project_gaussian(const GaussianPrimitive &primitive, const ScannerPose &pose) {
    const Projected p = project_internal(primitive, pose, pose.rotation());
    Footprint f;
    if (!p.ok) {
        return f;
    }
    f.mean = p.mean;
    f.cov = p.cov;
    f.amplitude = p.rho * p.a0;
    f.contributes = true;
    return f;
}

ProjectionImage render(const GaussianField &field, const ScannerPose &pose, const RenderOptions &options) {
    pose.validate();
    ProjectionImage img = ProjectionImage::for_detector(pose.detector);
    const TiledSplats t = build_splats(field, pose, options);
    const int w = pose.detector.width;
    const int h = pose.detector.height;
    parallel_for(t.bins.size(), [&](std::size_t tile) {
        const int tx = static_cast<int>(tile) % t.tiles_x;
        const int ty = static_cast<int>(tile) / t.tiles_x;
        const int r0 = ty * kTile, r1 = std::min(h, r0 + kTile);
        const int c0 = tx * kTile, c1 = std::min(w, c0 + kTile);
        for (std::size_t p : t.bins[tile]) {
            const PixelSplat &s = t.splats[p];
            for_each_pixel(s, w, r0, r1, c0, c1, options.cutoff,
                           [&](std::size_t idx, double, double, double e) { img.values[idx] += s.amp * e; });
        }
    });
    return img;
}

void visit_footprint(const Footprint &footprint, const ScannerPose &pose, double cutoff,
                     const std::function<void(std::size_t, double, double, double)> &visit) {
    if (!footprint.contributes) {
        return;
    }
    const Detector &det = pose.detector;
    const PixelSplat s = make_splat(footprint.mean, footprint.cov, footprint.amplitude, det, cutoff);
    for_each_pixel(s, det.width, 0, det.height, 0, det.width, cutoff,
                   [&](std::size_t idx, double dx, double dy, double e) {
                       visit(idx, dx * det.pitch, dy * det.pitch, e);
                   });
}

PrimitiveGrad backprop_footprint(const GaussianPrimitive &primitive, const ScannerPose &pose,
                                 const FootprintGrad &grad) {
    PrimitiveGrad out;
    const Eigen::Matrix3d rot = pose.rotation();
    const Projected p = project_internal(primitive, pose, rot);
    if (!p.ok) {
        return out;
    }
    const Eigen::Matrix2d conic = p.cov.inverse();
    Eigen::Matrix2d g_conic;
    g_conic << grad.conic[0], 0.5 * grad.conic[1], 0.5 * grad.conic[1], grad.conic[2];
    const Eigen::Matrix2d g_cov = -conic * g_conic * conic;
    Eigen::Matrix3d g_sigma = p.T.transpose() * g_cov * p.T;

    // amplitude = rho * sqrt(2 pi / qd)
    const double d_rho = grad.amplitude * p.a0;
    const double d_qd = grad.amplitude * p.rho * (-0.5 * p.a0 / p.qd);
    const Eigen::Vector3d sid = p.sigma_inv * p.dir;
    g_sigma -= d_qd * sid * sid.transpose();

    Eigen::Vector3d d_pos = Eigen::Vector3d::Zero();
    if (pose.beam.kind == BeamKind::Parallel) {
        d_pos += p.T.transpose() * grad.mean;
    } else {
        const double s = pose.beam.source_to_detector;
        const double cu = p.cam.x(), cv = p.cam.y(), cw = p.cam.z();
        Eigen::Vector3d d_cam = p.Jc.transpose() * grad.mean;
        // cov = Jc (R Sigma R^T) Jc^T; dL/dJc = 2 g_cov Jc R Sigma R^T.
        const Eigen::Matrix<double, 2, 3> g_jc = (g_cov + g_cov.transpose()) * p.T * p.sigma * rot.transpose();
        const double cw2 = cw * cw, cw3 = cw2 * cw;
        d_cam.z() += (g_jc(0, 0) + g_jc(1, 1)) * (-s / cw2);
        d_cam.x() += g_jc(0, 2) * (-s / cw2);
        d_cam.y() += g_jc(1, 2) * (-s / cw2);
        d_cam.z() += g_jc(0, 2) * (2.0 * s * cu / cw3) + g_jc(1, 2) * (2.0 * s * cv / cw3);
        d_pos += rot.transpose() * d_cam;
        // qd = y^T Sigma^-1 y / y^T y with y = position - eye.
        const Eigen::Vector3d &y = p.offset;
        const double yy = y.squaredNorm();
        const Eigen::Vector3d siy = p.sigma_inv * y;
        d_pos += d_qd * (2.0 * siy / yy - 2.0 * y.dot(siy) * y / (yy * yy));
    }
    out.raw_density = d_rho * sigmoid(primitive.raw_density);
    out.position = d_pos;
    accumulate_covariance_grad(primitive, g_sigma, out);
    return out;
}

Eigen::Matrix<double, 6, 11> footprint_jacobian(const GaussianPrimitive &primitive, const ScannerPose &pose) {
    Eigen::Matrix<double, 6, 11> jac;
    for (int r = 0; r < 6; ++r) {
        FootprintGrad unit;
        if (r == 0) {
            unit.amplitude = 1.0;
        } else if (r < 3) {
            unit.mean[r - 1] = 1.0;
        } else {
            unit.conic[r - 3] = 1.0;
        }
        jac.row(r) = backprop_footprint(primitive, pose, unit).flat().transpose();
    }
    return jac;
}

void render_backward(const GaussianField &field, const ScannerPose &pose, std::span<const double> grad_pixels,
                     std::span<PrimitiveGrad> out, const RenderOptions &options, std::span<double> mean2d_grad,
                     std::span<int> visible) {
    pose.validate();
    const Detector &det = pose.detector;
    if (grad_pixels.size() != static_cast<std::size_t>(det.width) * det.height || out.size() != field.size()) {
        throw InputError("render_backward: size mismatch");
    }
    const TiledSplats t = build_splats(field, pose, options);

    // Per tile and primitive: (sum g e, dL/dmean_px, dL/dconic_px).
    using Partial = Eigen::Matrix<double, 6, 1>;
    std::vector<std::vector<Partial>> partial(t.bins.size());
    parallel_for(t.bins.size(), [&](std::size_t tile) {
        const int tx = static_cast<int>(tile) % t.tiles_x;
        const int ty = static_cast<int>(tile) / t.tiles_x;
        const int r0 = ty * kTile, r1 = std::min(det.height, r0 + kTile);
        const int c0 = tx * kTile, c1 = std::min(det.width, c0 + kTile);
        partial[tile].assign(t.bins[tile].size(), Partial::Zero());
        for (std::size_t n = 0; n < t.bins[tile].size(); ++n) {
            const PixelSplat &s = t.splats[t.bins[tile][n]];
            double ge_sum = 0, mx = 0, my = 0, ga = 0, gb = 0, gc = 0;
            for_each_pixel(s, det.width, r0, r1, c0, c1, options.cutoff,
                           [&](std::size_t idx, double dx, double dy, double e) {
                               const double ge = grad_pixels[idx] * e;
                               ge_sum += ge;
                               mx += ge * (s.a * dx + s.b * dy);
                               my += ge * (s.b * dx + s.c * dy);
                               ga += ge * dx * dx;
                               gb += ge * dx * dy;
                               gc += ge * dy * dy;
                           });
            partial[tile][n] << ge_sum, s.amp * mx, s.amp * my, -0.5 * s.amp * ga, -s.amp * gb, -0.5 * s.amp * gc;
        }
    });

    std::vector<Partial> total(field.size(), Partial::Zero());
    std::vector<char> touched(field.size(), 0);
    for (std::size_t tile = 0; tile < t.bins.size(); ++tile) {
        for (std::size_t n = 0; n < t.bins[tile].size(); ++n) {
            total[t.bins[tile][n]] += partial[tile][n];
            touched[t.bins[tile][n]] = 1;
        }
    }
    const double pitch = det.pitch;
    for (std::size_t p = 0; p < field.size(); ++p) {
        if (!touched[p]) {
            continue;
        }
        const Partial &g = total[p];
        const double scale = options.density_scale.empty() ? 1.0 : options.density_scale[p];
        FootprintGrad fg;
        fg.amplitude = g[0] * scale;
        fg.mean = Eigen::Vector2d(g[1], g[2]) / pitch;
        fg.conic = Eigen::Vector3d(g[3], g[4], g[5]) * (pitch * pitch);
        out[p] += backprop_footprint(field.primitives[p], pose, fg);
        if (!mean2d_grad.empty()) {
            const double nx = g[1] * 0.5 * det.width;
            const double ny = g[2] * 0.5 * det.height;
            mean2d_grad[p] += std::hypot(nx, ny);
            if (!visible.empty()) {
                ++visible[p];
            }
        }
    }
}

ProjectionImage drr_oracle(const VoxelGrid &grid, const ScannerPose &pose, double step) {
    pose.validate();
    if (!(step > 0.0)) {
        throw InputError("drr_oracle: step must be > 0");
    }
    const Eigen::Matrix3d rot = pose.rotation();
    const Eigen::Vector3d u = rot.row(0).transpose();
    const Eigen::Vector3d v = rot.row(1).transpose();
    const Eigen::Vector3d w = rot.row(2).transpose();
    const Aabb box = grid.spec.extent_box();
    const Detector &det = pose.detector;
    ProjectionImage img = ProjectionImage::for_detector(det);
    parallel_for(static_cast<std::size_t>(det.height), [&](std::size_t row) {
        for (int col = 0; col < det.width; ++col) {
            const Eigen::Vector2d q = pose.pixel_center(static_cast<int>(row), col);
            Eigen::Vector3d origin, dir;
            double t0, t1;
            if (pose.beam.kind == BeamKind::Parallel) {
                origin = pose.eye + q.x() * u + q.y() * v;
                dir = w;
                t0 = -std::numeric_limits<double>::infinity();
            } else {
                origin = pose.eye;
                dir = (pose.beam.source_to_detector * w + q.x() * u + q.y() * v).normalized();
                t0 = 0.0;
            }
            t1 = std::numeric_limits<double>::infinity();
            if (!ray_box(origin, dir, box, t0, t1)) {
                continue;
            }
            const double length = t1 - t0;
            const auto n = static_cast<long>(std::ceil(length / step));
            const double dt = length / static_cast<double>(n);
            double sum = 0.0;
            for (long k = 0; k < n; ++k) {
                sum += trilinear(grid, origin + (t0 + (static_cast<double>(k) + 0.5) * dt) * dir);
            }
            img.at(static_cast<int>(row), col) = sum * dt;
        }
    });
    return img;
}

nlohmann::json pose_to_json(const ScannerPose &pose) {
    nlohmann::json beam = {{"kind", pose.beam.kind == BeamKind::Parallel ? "parallel" : "cone"}};
    if (pose.beam.kind == BeamKind::Cone) {
        beam["source_to_detector"] = pose.beam.source_to_detector;
    }
    return {
        {"orientation", vec_json(pose.orientation)},
        {"eye", vec_json(pose.eye)},
        {"beam", beam},
        {"detector", {{"width", pose.detector.width}, {"height", pose.detector.height}, {"pitch", pose.detector.pitch}}},
    };
}

ScannerPose pose_from_json(const nlohmann::json &j) {
    try {
        ScannerPose pose;
        for (int i = 0; i < 4; ++i) {
            pose.orientation[i] = j.at("orientation").at(i).get<double>();
        }
        for (int i = 0; i < 3; ++i) {
            pose.eye[i] = j.at("eye").at(i).get<double>();
        }
        const std::string kind = j.at("beam").at("kind").get<std::string>();
        if (kind == "parallel") {
            pose.beam = Beam::parallel();
        } else if (kind == "cone") {
            pose.beam = Beam::cone(j.at("beam").at("source_to_detector").get<double>());
        } else {
            throw FormatError("unknown beam kind '" + kind + "'");
        }
        pose.detector.width = j.at("detector").at("width").get<int>();
        pose.detector.height = j.at("detector").at("height").get<int>();
        pose.detector.pitch = j.at("detector").at("pitch").get<double>();
        pose.validate();
        return pose;
    } catch (const nlohmann::json::exception &e) {
        throw FormatError(std::string("pose: ") + e.what());
    }
}

nlohmann::json poses_to_json(std::span<const ScannerPose> poses) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto &p : poses) {
        a.push_back(pose_to_json(p));
    }
    return a;
}

std::vector<ScannerPose> poses_from_json(const nlohmann::json &j) {
    if (!j.is_array()) {
        throw FormatError("pose list must be a JSON array");
    }
    std::vector<ScannerPose> poses;
    poses.reserve(j.size());
    for (const auto &e : j) {
        poses.push_back(pose_from_json(e));
    }
    return poses;
}

void save_projection_set(const std::filesystem::path &dir, std::span<const ScannerPose> poses,
                         std::span<const ProjectionImage> images) {
    if (poses.size() != images.size()) {
        throw InputError("projection set: pose/image count mismatch");
    }
    std::filesystem::create_directories(dir);
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::string name = "proj_" + std::to_string(i) + ".bin";
        io::write_f32(dir / name, images[i].values);
        files.push_back(name);
    }
    const nlohmann::json meta = {{"poses", poses_to_json(poses)}, {"image_files", files}, {"log_space", true}};
    io::write_text(dir / "projections.json", meta.dump(2) + "\n");
}

void load_projection_set(const std::filesystem::path &dir, std::vector<ScannerPose> &poses,
                         std::vector<ProjectionImage> &images) {
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(io::read_text(dir / "projections.json"));
    } catch (const nlohmann::json::exception &e) {
        throw FormatError(std::string("projections.json: ") + e.what());
    }
    poses = poses_from_json(meta.at("poses"));
    const auto &files = meta.at("image_files");
    if (files.size() != poses.size()) {
        throw FormatError("projection set: pose/image count mismatch");
    }
    images.clear();
    for (std::size_t i = 0; i < poses.size(); ++i) {
        ProjectionImage img = ProjectionImage::for_detector(poses[i].detector);
        img.values = io::read_f32(dir / files[i].get<std::string>(), img.values.size());
        images.push_back(std::move(img));
    }
}

void write_png16(const std::filesystem::path &path, const ProjectionImage &image) {
    std::unique_ptr<FILE, int (*)(FILE *)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
    if (!fp) {
        throw FormatError("cannot write " + path.string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("libpng write failed for " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 16,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const auto [lo_it, hi_it] = std::minmax_element(image.values.begin(), image.values.end());
    const double lo = image.values.empty() ? 0.0 : *lo_it;
    const double range = image.values.empty() ? 0.0 : *hi_it - lo;
    std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * 2);
    for (int r = 0; r < image.height; ++r) {
        for (int c = 0; c < image.width; ++c) {
            const double n = range > 0.0 ? (image.at(r, c) - lo) / range : 0.0;
            const auto v = static_cast<unsigned>(std::lround(std::clamp(n, 0.0, 1.0) * 65535.0));
            row[2 * c] = static_cast<unsigned char>(v >> 8); // PNG is big-endian
            row[2 * c + 1] = static_cast<unsigned char>(v & 0xff);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace radsel
