#include "radsel/gaussian_field.hpp"

#include "radsel/binary_io.hpp"
#include "radsel/error.hpp"
#include "radsel/parallel.hpp"

#include <json.hpp>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <random>

namespace radsel {

namespace {

constexpr int kBrickSlices = 4;

// Precomputed per-primitive quantities for lattice evaluation.
struct Kernel {
    Eigen::Vector3d center;
    Eigen::Matrix3d conic;
    Eigen::Vector3d half_extent;
    double rho;
};

Kernel make_kernel(const GaussianPrimitive &g, double cutoff) {
    const Eigen::Matrix3d sigma = covariance(g);
    Kernel k;
    k.center = g.position;
    k.conic = sigma.inverse();
    k.half_extent = cutoff * sigma.diagonal().cwiseSqrt();
    k.rho = g.density();
    return k;
}

// Inclusive voxel index range [lo, hi] whose centers fall inside [a, b] on one axis.
bool axis_range(double a, double b, double origin, double spacing, int n, int &lo, int &hi) {
    lo = std::max(0, static_cast<int>(std::ceil((a - origin) / spacing)));
    hi = std::min(n - 1, static_cast<int>(std::floor((b - origin) / spacing)));
    return lo <= hi;
}

// Visits every voxel of `spec` with z-slice in [k0, k1) lying inside the
// kernel's Mahalanobis ball, passing (flat index, offset from center, exp term).
// Along x the exponent is a quadratic in the voxel index, so the Gaussian is
// advanced by two multiplications per voxel instead of an exp.
template <typename Visit>
void for_each_voxel(const Kernel &kern, const GridSpec &spec, int k0, int k1, double cutoff, Visit &&visit) {
    const Eigen::Vector3d lo = kern.center - kern.half_extent;
    const Eigen::Vector3d hi = kern.center + kern.half_extent;
    int i_min, i_max, j_min, j_max, k_min, k_max;
    if (!axis_range(lo.x(), hi.x(), spec.origin.x(), spec.spacing.x(), spec.dims[0], i_min, i_max) ||
        !axis_range(lo.y(), hi.y(), spec.origin.y(), spec.spacing.y(), spec.dims[1], j_min, j_max) ||
        !axis_range(lo.z(), hi.z(), spec.origin.z(), spec.spacing.z(), spec.dims[2], k_min, k_max)) {
        return;
    }
    k_min = std::max(k_min, k0);
    k_max = std::min(k_max, k1 - 1);
    const Eigen::Matrix3d &c = kern.conic;
    const double r2 = cutoff * cutoff;
    const double h = spec.spacing.x();
    const double step_decay = std::exp(-c(0, 0) * h * h);
    for (int k = k_min; k <= k_max; ++k) {
        const double dz = spec.origin.z() + k * spec.spacing.z() - kern.center.z();
        for (int j = j_min; j <= j_max; ++j) {
            const double dy = spec.origin.y() + j * spec.spacing.y() - kern.center.y();
            const double beta = c(0, 1) * dy + c(0, 2) * dz;
            const double gamma = c(1, 1) * dy * dy + 2.0 * c(1, 2) * dy * dz + c(2, 2) * dz * dz;
            const double disc = beta * beta - c(0, 0) * (gamma - r2);
            if (disc < 0.0) {
                continue;
            }
            const double root = std::sqrt(disc);
            int i_lo, i_hi;
            if (!axis_range(kern.center.x() + (-beta - root) / c(0, 0), kern.center.x() + (-beta + root) / c(0, 0),
                            spec.origin.x(), h, spec.dims[0], i_lo, i_hi)) {
                continue;
            }
            double t = spec.origin.x() + i_lo * h - kern.center.x();
            double e = std::exp(-0.5 * (c(0, 0) * t * t + 2.0 * beta * t + gamma));
            double ratio = std::exp(-0.5 * (c(0, 0) * (2.0 * t * h + h * h) + 2.0 * beta * h));
            std::size_t idx = spec.index(i_lo, j, k);
            for (int i = i_lo; i <= i_hi; ++i, ++idx) {
                visit(idx, t, dy, dz, e);
                e *= ratio;
                ratio *= step_decay;
                t += h;
            }
        }
    }
}

// Primitives whose z-extent touches each brick of kBrickSlices slices, in index order.
std::vector<std::vector<std::size_t>> bin_by_brick(const std::vector<Kernel> &kernels, const GridSpec &spec) {
    const int bricks = (spec.dims[2] + kBrickSlices - 1) / kBrickSlices;
    std::vector<std::vector<std::size_t>> bins(static_cast<std::size_t>(bricks));
    for (std::size_t p = 0; p < kernels.size(); ++p) {
        int k_lo, k_hi;
        const double zlo = kernels[p].center.z() - kernels[p].half_extent.z();
        const double zhi = kernels[p].center.z() + kernels[p].half_extent.z();
        if (!axis_range(zlo, zhi, spec.origin.z(), spec.spacing.z(), spec.dims[2], k_lo, k_hi)) {
            continue;
        }
        for (int b = k_lo / kBrickSlices; b <= k_hi / kBrickSlices; ++b) {
            bins[static_cast<std::size_t>(b)].push_back(p);
        }
    }
    return bins;
}

std::vector<Kernel> make_kernels(const GaussianField &field, double cutoff) {
    std::vector<Kernel> kernels;
    kernels.reserve(field.size());
    for (const auto &g : field.primitives) {
        kernels.push_back(make_kernel(g, cutoff));
    }
    return kernels;
}

} // namespace

Eigen::Matrix3d GaussianPrimitive::rotation_matrix() const {
    const Eigen::Vector4d q = rotation.normalized();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Eigen::Matrix<double, 11, 1> PrimitiveGrad::flat() const {
    Eigen::Matrix<double, 11, 1> v;
    v << raw_density, position, log_scale, rotation;
    return v;
}

GridSpec GridSpec::covering(const Aabb &box, std::array<int, 3> dims) {
    GridSpec s;
    s.dims = dims;
    for (int a = 0; a < 3; ++a) {
        s.spacing[a] = (box.hi[a] - box.lo[a]) / dims[a];
        s.origin[a] = box.lo[a] + 0.5 * s.spacing[a];
    }
    return s;
}

Aabb GridSpec::extent_box() const {
    Aabb b;
    b.lo = origin - 0.5 * spacing;
    b.hi = origin + spacing.cwiseProduct(Eigen::Vector3d(dims[0] - 0.5, dims[1] - 0.5, dims[2] - 0.5));
    return b;
}

void GridSpec::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 1) {
            throw InputError("grid dims must be >= 1 per axis");
        }
        if (!(spacing[a] > 0.0)) {
            throw InputError("grid spacing must be > 0");
        }
    }
}

double VoxelGrid::max_value() const {
    return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

Eigen::Matrix3d covariance(const GaussianPrimitive &primitive) {
    const Eigen::Matrix3d m = primitive.rotation_matrix() * primitive.scale().asDiagonal();
    return m * m.transpose();
}

double density_at(const GaussianField &field, const Eigen::Vector3d &x) {
    double sum = 0.0;
    for (const auto &g : field.primitives) {
        const Eigen::Vector3d d = x - g.position;
        const Eigen::Matrix3d sigma = covariance(g);
        sum += g.density() * std::exp(-0.5 * d.dot(sigma.ldlt().solve(d)));
    }
    return sum;
}

VoxelGrid voxelize(const GaussianField &field, const GridSpec &spec, double cutoff) {
    spec.validate();
    VoxelGrid grid(spec);
    const std::vector<Kernel> kernels = make_kernels(field, cutoff);
    const auto bins = bin_by_brick(kernels, spec);
    parallel_for(bins.size(), [&](std::size_t b) {
        const int k0 = static_cast<int>(b) * kBrickSlices;
        const int k1 = std::min(spec.dims[2], k0 + kBrickSlices);
        for (std::size_t p : bins[b]) {
            const double rho = kernels[p].rho;
            for_each_voxel(kernels[p], spec, k0, k1, cutoff,
                           [&](std::size_t idx, double, double, double, double e) { grid.values[idx] += rho * e; });
        }
    });
    return grid;
}

void accumulate_covariance_grad(const GaussianPrimitive &primitive, const Eigen::Matrix3d &grad_sigma,
                                PrimitiveGrad &out) {
    const Eigen::Matrix3d g = 0.5 * (grad_sigma + grad_sigma.transpose());
    const Eigen::Matrix3d r = primitive.rotation_matrix();
    const Eigen::Vector3d s2 = (2.0 * primitive.log_scale).array().exp();
    const Eigen::Matrix3d rgr = r.transpose() * g * r;
    for (int k = 0; k < 3; ++k) {
        out.log_scale[k] += 2.0 * s2[k] * rgr(k, k);
    }
    // dL/dR for Sigma = R S^2 R^T.
    const Eigen::Matrix3d d = 2.0 * g * r * s2.asDiagonal();
    const double norm = primitive.rotation.norm();
    const Eigen::Vector4d q = primitive.rotation / norm;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Vector4d gq;
    gq[0] = 2 * (-z * d(0, 1) + y * d(0, 2) + z * d(1, 0) - x * d(1, 2) - y * d(2, 0) + x * d(2, 1));
    gq[1] = 2 * (y * d(0, 1) + z * d(0, 2) + y * d(1, 0) - 2 * x * d(1, 1) - w * d(1, 2) + z * d(2, 0) +
                 w * d(2, 1) - 2 * x * d(2, 2));
    gq[2] = 2 * (-2 * y * d(0, 0) + x * d(0, 1) + w * d(0, 2) + x * d(1, 0) + z * d(1, 2) - w * d(2, 0) +
                 z * d(2, 1) - 2 * y * d(2, 2));
    gq[3] = 2 * (-2 * z * d(0, 0) - w * d(0, 1) + x * d(0, 2) + w * d(1, 0) - 2 * z * d(1, 1) + y * d(1, 2) +
                 x * d(2, 0) + y * d(2, 1));
    out.rotation += (gq - q * q.dot(gq)) / norm;
}

void voxelize_backward(const GaussianField &field, const GridSpec &spec, std::span<const double> grad_values,
                       std::span<PrimitiveGrad> out, double cutoff) {
    spec.validate();
    if (grad_values.size() != spec.voxel_count() || out.size() != field.size()) {
        throw InputError("voxelize_backward: size mismatch");
    }
    const std::vector<Kernel> kernels = make_kernels(field, cutoff);
    const auto bins = bin_by_brick(kernels, spec);

    // Per brick and primitive: sum g*e, sum g*e*d, sum g*e*d*d^T.
    struct Moments {
        double m0 = 0.0;
        Eigen::Vector3d m1 = Eigen::Vector3d::Zero();
        Eigen::Matrix3d m2 = Eigen::Matrix3d::Zero();
    };
    std::vector<std::vector<Moments>> partial(bins.size());
    parallel_for(bins.size(), [&](std::size_t b) {
        const int k0 = static_cast<int>(b) * kBrickSlices;
        const int k1 = std::min(spec.dims[2], k0 + kBrickSlices);
        partial[b].resize(bins[b].size());
        for (std::size_t n = 0; n < bins[b].size(); ++n) {
            Moments &acc = partial[b][n];
            double xx = 0, xy = 0, xz = 0, yy = 0, yz = 0, zz = 0;
            for_each_voxel(kernels[bins[b][n]], spec, k0, k1, cutoff,
                           [&](std::size_t idx, double dx, double dy, double dz, double e) {
                               const double ge = grad_values[idx] * e;
                               acc.m0 += ge;
                               acc.m1 += ge * Eigen::Vector3d(dx, dy, dz);
                               xx += ge * dx * dx;
                               xy += ge * dx * dy;
                               xz += ge * dx * dz;
                               yy += ge * dy * dy;
                               yz += ge * dy * dz;
                               zz += ge * dz * dz;
                           });
            acc.m2 << xx, xy, xz, xy, yy, yz, xz, yz, zz;
        }
    });

    std::vector<Moments> total(field.size());
    for (std::size_t b = 0; b < bins.size(); ++b) {
        for (std::size_t n = 0; n < bins[b].size(); ++n) {
            Moments &t = total[bins[b][n]];
            t.m0 += partial[b][n].m0;
            t.m1 += partial[b][n].m1;
            t.m2 += partial[b][n].m2;
        }
    }
    for (std::size_t p = 0; p < field.size(); ++p) {
        const Moments &t = total[p];
        if (t.m0 == 0.0 && t.m1.isZero() && t.m2.isZero()) {
            continue;
        }
        const GaussianPrimitive &g = field.primitives[p];
        const Kernel &k = kernels[p];
        PrimitiveGrad &o = out[p];
        o.raw_density += t.m0 * sigmoid(g.raw_density);
        o.position += k.rho * (k.conic * t.m1);
        // value = rho exp(-d^T C d / 2) => dL/dC = -rho/2 M2, dL/dSigma = -C dL/dC C.
        accumulate_covariance_grad(g, 0.5 * k.rho * (k.conic * t.m2 * k.conic), o);
    }
}

GaussianField init_random_field(const Aabb &bounds, std::size_t count, double density, std::uint64_t seed) {
    if (count == 0) {
        throw ConfigError("field must hold at least one primitive");
    }
    if (!(density > 0.0)) {
        throw ConfigError("initial density must be > 0");
    }
    GaussianField field;
    field.bounds = bounds;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double sigma = 0.5 * bounds.max_extent() / std::cbrt(static_cast<double>(count));
    field.primitives.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        GaussianPrimitive g;
        for (int a = 0; a < 3; ++a) {
            g.position[a] = bounds.lo[a] + unit(rng) * (bounds.hi[a] - bounds.lo[a]);
        }
        g.log_scale.setConstant(std::log(sigma));
        g.set_density(density);
        field.primitives.push_back(g);
    }
    return field;
}

void save_checkpoint(const GaussianField &field, const std::filesystem::path &path) {
    std::vector<double> flat;
    flat.reserve(field.size() * 11);
    for (const auto &g : field.primitives) {
        flat.push_back(g.raw_density);
        flat.insert(flat.end(), g.position.data(), g.position.data() + 3);
        flat.insert(flat.end(), g.log_scale.data(), g.log_scale.data() + 3);
        flat.insert(flat.end(), g.rotation.data(), g.rotation.data() + 4);
    }
    io::write_f32(path, flat);
    const nlohmann::json sidecar = {
        {"count", field.size()},
        {"bounds", {{"lo", {field.bounds.lo.x(), field.bounds.lo.y(), field.bounds.lo.z()}},
                    {"hi", {field.bounds.hi.x(), field.bounds.hi.y(), field.bounds.hi.z()}}}},
        {"format_version", kCheckpointFormatVersion},
    };
    io::write_text(path.string() + ".json", sidecar.dump(2) + "\n");
}

GaussianField load_checkpoint(const std::filesystem::path &path) {
    nlohmann::json sidecar;
    try {
        sidecar = nlohmann::json::parse(io::read_text(path.string() + ".json"));
    } catch (const nlohmann::json::exception &e) {
        throw FormatError("checkpoint sidecar: " + std::string(e.what()));
    }
    if (sidecar.value("format_version", 0) != kCheckpointFormatVersion) {
        throw FormatError("unsupported checkpoint format_version");
    }
    const std::size_t count = sidecar.at("count").get<std::size_t>();
    const std::vector<double> flat = io::read_f32(path, count * 11);
    GaussianField field;
    for (int a = 0; a < 3; ++a) {
        field.bounds.lo[a] = sidecar["bounds"]["lo"][a].get<double>();
        field.bounds.hi[a] = sidecar["bounds"]["hi"][a].get<double>();
    }
    field.primitives.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double *r = flat.data() + 11 * i;
        GaussianPrimitive &g = field.primitives[i];
        g.raw_density = r[0];
        g.position = Eigen::Vector3d(r[1], r[2], r[3]);
        g.log_scale = Eigen::Vector3d(r[4], r[5], r[6]);
        g.rotation = Eigen::Vector4d(r[7], r[8], r[9], r[10]);
    }
    return field;
}

GaussianField quantized(const GaussianField &field) {
    auto q = [](double &v) { v = static_cast<double>(static_cast<float>(v)); };
    GaussianField out = field;
    for (auto &g : out.primitives) {
        q(g.raw_density);
        for (int a = 0; a < 3; ++a) {
            q(g.position[a]);
            q(g.log_scale[a]);
        }
        for (int a = 0; a < 4; ++a) {
            q(g.rotation[a]);
        }
    }
    return out;
}

} // namespace radsel
