#include "katolab/stokes.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include "katolab/digest.hpp"
#include "katolab/errors.hpp"
#include "katolab/operators.hpp"

namespace katolab {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Trip = Eigen::Triplet<double>;

int n_u_faces(int nx) { return (nx + 1) * nx; }
int n_v_faces(int nx) { return nx * (nx + 1); }

// Sparse curl from interior stream nodes to stacked faces.
SpMat assemble_curl(const Domain& dom) {
    int nx = dom.nx;
    int m = (nx - 1) * (nx - 1);
    double ih = 1.0 / dom.h;
    auto node = [nx](int i, int j) { return (i - 1) * (nx - 1) + (j - 1); };
    auto interior = [nx](int i, int j) { return i >= 1 && i <= nx - 1 && j >= 1 && j <= nx - 1; };
    std::vector<Trip> trips;
    trips.reserve(static_cast<size_t>(4) * m);
    for (int i = 0; i <= nx; ++i)
        for (int j = 0; j < nx; ++j) {
            int row = i * nx + j;
            if (interior(i, j + 1)) trips.emplace_back(row, node(i, j + 1), ih);
            if (interior(i, j)) trips.emplace_back(row, node(i, j), -ih);
        }
    int off = n_u_faces(nx);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j <= nx; ++j) {
            int row = off + i * (nx + 1) + j;
            if (interior(i + 1, j)) trips.emplace_back(row, node(i + 1, j), -ih);
            if (interior(i, j)) trips.emplace_back(row, node(i, j), ih);
        }
    SpMat c(off + n_v_faces(nx), m);
    c.setFromTriplets(trips.begin(), trips.end());
    return c;
}

// Sparse matrix form of discrete_laplacian on stacked faces: rows for
// wall-normal faces are zero, tangential walls use mirror ghosts.
SpMat assemble_laplacian(const Domain& dom) {
    int nx = dom.nx;
    double ih2 = 1.0 / (dom.h * dom.h);
    int off = n_u_faces(nx);
    std::vector<Trip> trips;
    trips.reserve(static_cast<size_t>(5) * (n_u_faces(nx) + n_v_faces(nx)));
    for (int i = 1; i < nx; ++i)
        for (int j = 0; j < nx; ++j) {
            int row = i * nx + j;
            double diag = 4.0;
            trips.emplace_back(row, (i + 1) * nx + j, -ih2);
            trips.emplace_back(row, (i - 1) * nx + j, -ih2);
            if (j + 1 <= nx - 1) trips.emplace_back(row, i * nx + j + 1, -ih2); else diag += 1.0;
            if (j - 1 >= 0) trips.emplace_back(row, i * nx + j - 1, -ih2); else diag += 1.0;
            trips.emplace_back(row, row, diag * ih2);
        }
    for (int i = 0; i < nx; ++i)
        for (int j = 1; j < nx; ++j) {
            int row = off + i * (nx + 1) + j;
            double diag = 4.0;
            trips.emplace_back(row, off + i * (nx + 1) + j + 1, -ih2);
            trips.emplace_back(row, off + i * (nx + 1) + j - 1, -ih2);
            if (i + 1 <= nx - 1) trips.emplace_back(row, off + (i + 1) * (nx + 1) + j, -ih2); else diag += 1.0;
            if (i - 1 >= 0) trips.emplace_back(row, off + (i - 1) * (nx + 1) + j, -ih2); else diag += 1.0;
            trips.emplace_back(row, row, diag * ih2);
        }
    int n = off + n_v_faces(nx);
    SpMat l(n, n);
    l.setFromTriplets(trips.begin(), trips.end());
    return l;
}

std::uint64_t basis_digest(const Domain& dom, int n_modes,
                           const std::vector<double>& eigenvalues,
                           const Eigen::MatrixXd& streams, const Eigen::MatrixXd& faces) {
    Fnv1a fnv;
    fnv.value(dom.nx);
    fnv.value(n_modes);
    fnv.doubles(eigenvalues.data(), eigenvalues.size());
    fnv.doubles(streams.data(), static_cast<size_t>(streams.size()));
    fnv.doubles(faces.data(), static_cast<size_t>(faces.size()));
    return fnv.digest();
}

std::string cache_path(int nx, int n_modes) {
    const char* dir = std::getenv("KATOLAB_CACHE");
    if (dir == nullptr || *dir == '\0') return {};
    return std::string(dir) + "/basis_nx" + std::to_string(nx) + "_n" +
           std::to_string(n_modes) + "_v1.bin";
}

constexpr std::uint32_t kCacheMagic = 0x4B4C4243;  // "KLBC"

bool load_cached_basis(const std::string& path, SpectralBasis& basis) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (f == nullptr) return false;
    auto read_ok = [f](void* p, size_t n) { return std::fread(p, 1, n, f) == n; };
    std::uint32_t magic = 0, version = 0;
    std::int32_t nx = 0, n_modes = 0, m = 0, n_faces = 0;
    bool ok = read_ok(&magic, 4) && read_ok(&version, 4) && read_ok(&nx, 4) &&
              read_ok(&n_modes, 4) && read_ok(&m, 4) && read_ok(&n_faces, 4) &&
              magic == kCacheMagic && version == 1 && nx == basis.dom.nx &&
              n_modes == basis.n_modes && m == (nx - 1) * (nx - 1) &&
              n_faces == n_u_faces(nx) + n_v_faces(nx);
    if (ok) {
        basis.eigenvalues.assign(n_modes, 0.0);
        basis.streams.resize(m, n_modes);
        basis.faces.resize(n_faces, n_modes);
        std::uint64_t stored = 0;
        ok = read_ok(basis.eigenvalues.data(), sizeof(double) * n_modes) &&
             read_ok(basis.streams.data(), sizeof(double) * basis.streams.size()) &&
             read_ok(basis.faces.data(), sizeof(double) * basis.faces.size()) &&
             read_ok(&stored, 8);
        if (ok) {
            std::uint64_t fresh = basis_digest(basis.dom, basis.n_modes, basis.eigenvalues,
                                               basis.streams, basis.faces);
            ok = (stored == fresh);
            basis.id = fresh;
        }
    }
    std::fclose(f);
    return ok;
}

void store_cached_basis(const std::string& path, const SpectralBasis& basis) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) return;  // cache is best-effort
    std::uint32_t version = 1;
    std::int32_t nx = basis.dom.nx, n_modes = basis.n_modes;
    std::int32_t m = static_cast<std::int32_t>(basis.streams.rows());
    std::int32_t n_faces = static_cast<std::int32_t>(basis.faces.rows());
    std::fwrite(&kCacheMagic, 4, 1, f);
    std::fwrite(&version, 4, 1, f);
    std::fwrite(&nx, 4, 1, f);
    std::fwrite(&n_modes, 4, 1, f);
    std::fwrite(&m, 4, 1, f);
    std::fwrite(&n_faces, 4, 1, f);
    std::fwrite(basis.eigenvalues.data(), sizeof(double), basis.eigenvalues.size(), f);
    std::fwrite(basis.streams.data(), sizeof(double), basis.streams.size(), f);
    std::fwrite(basis.faces.data(), sizeof(double), basis.faces.size(), f);
    std::fwrite(&basis.id, 8, 1, f);
    std::fclose(f);
}

SpectralBasis compute_basis(const Domain& dom, int n_modes) {
    int nx = dom.nx;
    int m = (nx - 1) * (nx - 1);
    SpMat curl = assemble_curl(dom);
    SpMat lap = assemble_laplacian(dom);
    double h2 = dom.h * dom.h;
    Eigen::MatrixXd stiff = Eigen::MatrixXd(SpMat(curl.transpose() * (lap * curl))) * h2;
    Eigen::MatrixXd mass = Eigen::MatrixXd(SpMat(curl.transpose() * curl)) * h2;
    stiff = 0.5 * (stiff + stiff.transpose()).eval();
    mass = 0.5 * (mass + mass.transpose()).eval();

    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(stiff, mass);
    if (es.info() != Eigen::Success) {
        throw NumericsError("build_basis: generalized eigensolve failed");
    }

    SpectralBasis basis;
    basis.dom = dom;
    basis.n_modes = n_modes;
    basis.eigenvalues.resize(n_modes);
    basis.streams.resize(m, n_modes);
    basis.faces.resize(n_u_faces(nx) + n_v_faces(nx), n_modes);
    for (int k = 0; k < n_modes; ++k) {
        double lambda = es.eigenvalues()[k];
        if (!(lambda > 0)) throw NumericsError("build_basis: nonpositive eigenvalue");
        basis.eigenvalues[k] = lambda;
        Eigen::VectorXd psi = es.eigenvectors().col(k);
        // enforce exact unit mass regardless of solver normalization
        psi /= std::sqrt(psi.dot(mass * psi));
        Eigen::VectorXd a = curl * psi;
        // sign convention: first face entry that clears the noise floor is positive
        double amax = a.cwiseAbs().maxCoeff();
        for (int r = 0; r < a.size(); ++r) {
            if (std::abs(a[r]) > 1e-12 * amax) {
                if (a[r] < 0) { a = -a; psi = -psi; }
                break;
            }
        }
        basis.streams.col(k) = psi;
        basis.faces.col(k) = a;
    }
    basis.id = basis_digest(dom, n_modes, basis.eigenvalues, basis.streams, basis.faces);
    return basis;
}

}  // namespace

LerayProjector::LerayProjector(const Domain& dom) : dom_(dom), poisson_(dom) {}

VectorGridField LerayProjector::apply(const VectorGridField& f) const {
    if (f.nx != dom_.nx) throw ConfigError("LerayProjector: grid mismatch");
    VectorGridField g = zero_wall_normal(f);
    ScalarGridField d = divergence(dom_, g);
    double dmax = 0;
    for (double x : d.data) dmax = std::max(dmax, std::abs(x));
    std::vector<double> rhs(d.data.size());
    for (size_t k = 0; k < rhs.size(); ++k) rhs[k] = -d.data[k];
    std::vector<double> phi = poisson_.solve(rhs);
    ScalarGridField p = ScalarGridField::zeros(dom_);
    p.data = std::move(phi);
    VectorGridField grad = gradient_to_faces(dom_, p);
    for (size_t k = 0; k < g.u.size(); ++k) g.u[k] -= grad.u[k];
    for (size_t k = 0; k < g.v.size(); ++k) g.v[k] -= grad.v[k];
    ScalarGridField check = divergence(dom_, g);
    double res = 0;
    for (double x : check.data) res = std::max(res, std::abs(x));
    if (!(res <= 1e-9 * std::max(1.0, dmax))) {
        throw NumericsError("LerayProjector: divergence residual too large");
    }
    return g;
}

VectorGridField leray_project(const VectorGridField& f) {
    Domain dom = build_domain(f.nx);
    return LerayProjector(dom).apply(f);
}

Eigen::VectorXd stack_faces(const VectorGridField& f) {
    int nu = n_u_faces(f.nx), nv = n_v_faces(f.nx);
    Eigen::VectorXd x(nu + nv);
    for (int k = 0; k < nu; ++k) x[k] = f.u[k];
    for (int k = 0; k < nv; ++k) x[nu + k] = f.v[k];
    return x;
}

VectorGridField unstack_faces(const Domain& dom, const Eigen::VectorXd& x) {
    int nu = n_u_faces(dom.nx), nv = n_v_faces(dom.nx);
    if (x.size() != nu + nv) throw ConfigError("unstack_faces: size mismatch");
    VectorGridField f = VectorGridField::zeros(dom);
    for (int k = 0; k < nu; ++k) f.u[k] = x[k];
    for (int k = 0; k < nv; ++k) f.v[k] = x[nu + k];
    return f;
}

VectorGridField SpectralBasis::field(int k) const {
    if (k < 0 || k >= n_modes) throw ConfigError("SpectralBasis::field: index out of range");
    return unstack_faces(dom, faces.col(k));
}

NodeGridField SpectralBasis::stream(int k) const {
    if (k < 0 || k >= n_modes) throw ConfigError("SpectralBasis::stream: index out of range");
    NodeGridField psi = NodeGridField::zeros(dom);
    int m = dom.nx - 1;
    for (int i = 1; i <= m; ++i)
        for (int j = 1; j <= m; ++j) psi.at(i, j) = streams((i - 1) * m + (j - 1), k);
    return psi;
}

std::vector<double> SpectralBasis::project_grid(const VectorGridField& f, int n) const {
    if (f.nx != dom.nx) throw ConfigError("SpectralBasis::project_grid: grid mismatch");
    if (n < 0) n = n_modes;
    if (n > n_modes) throw ConfigError("SpectralBasis::project_grid: n out of range");
    Eigen::VectorXd x = stack_faces(f);
    Eigen::VectorXd c = (dom.h * dom.h) * (faces.leftCols(n).transpose() * x);
    return std::vector<double>(c.data(), c.data() + n);
}

VectorGridField SpectralBasis::reconstruct(const std::vector<double>& coeffs) const {
    if (static_cast<int>(coeffs.size()) > n_modes) {
        throw ConfigError("SpectralBasis::reconstruct: too many coefficients");
    }
    Eigen::Map<const Eigen::VectorXd> c(coeffs.data(), coeffs.size());
    Eigen::VectorXd x = faces.leftCols(coeffs.size()) * c;
    return unstack_faces(dom, x);
}

VelocityField SpectralBasis::from_coeffs(std::vector<double> coeffs) const {
    check_finite(coeffs, "velocity coefficients");
    VelocityField f;
    f.grid = reconstruct(coeffs);
    f.coeffs = std::move(coeffs);
    f.coeffs.resize(n_modes, 0.0);
    f.basis_id = id;
    return f;
}

VelocityField SpectralBasis::from_grid(const VectorGridField& g) const {
    return from_coeffs(project_grid(g));
}

SpectralBasis build_basis(const Domain& dom, int n_modes) {
    int m = (dom.nx - 1) * (dom.nx - 1);
    if (n_modes < 1 || n_modes > m) {
        throw ConfigError("build_basis: n_modes must be in [1, " + std::to_string(m) +
                          "], got " + std::to_string(n_modes));
    }
    std::string path = cache_path(dom.nx, n_modes);
    SpectralBasis basis;
    basis.dom = dom;
    basis.n_modes = n_modes;
    if (!path.empty() && load_cached_basis(path, basis)) {
        basis.leray = std::make_shared<LerayProjector>(dom);
        return basis;
    }
    basis = compute_basis(dom, n_modes);
    basis.leray = std::make_shared<LerayProjector>(dom);
    if (!path.empty()) store_cached_basis(path, basis);
    return basis;
}

VelocityField project_n(const SpectralBasis& basis, const VelocityField& f, int n) {
    if (n < 0 || n > basis.n_modes) throw ConfigError("project_n: n out of range");
    if (f.basis_id != basis.id) throw ConfigError("project_n: field belongs to another basis");
    std::vector<double> c = f.coeffs;
    for (size_t k = n; k < c.size(); ++k) c[k] = 0.0;
    return basis.from_coeffs(std::move(c));
}

NormReport norms(const SpectralBasis& basis, const VelocityField& f,
                 const BoundaryStrip* strip) {
    if (f.basis_id != basis.id) throw ConfigError("norms: field belongs to another basis");
    NormReport r;
    double l2sq = 0, h1sq = 0;
    for (int k = 0; k < basis.n_modes && k < static_cast<int>(f.coeffs.size()); ++k) {
        l2sq += f.coeffs[k] * f.coeffs[k];
        h1sq += basis.eigenvalues[k] * f.coeffs[k] * f.coeffs[k];
    }
    r.l2 = std::sqrt(l2sq);
    r.h1 = std::sqrt(h1sq);
    ScalarGridField e = gradient_energy_cells(basis.dom, f.grid);
    double grad_full = integrate(basis.dom, e);
    r.w12 = std::sqrt(dot(basis.dom, f.grid, f.grid) + grad_full);
    r.strip_grad = std::sqrt(strip ? integrate(basis.dom, e, *strip) : grad_full);
    return r;
}

NormReport grid_norms(const Domain& dom, const VectorGridField& f,
                      const BoundaryStrip* strip) {
    NormReport r;
    ScalarGridField e = gradient_energy_cells(dom, f);
    double grad_full = integrate(dom, e);
    r.l2 = norm(dom, f);
    r.h1 = std::sqrt(grad_full);
    r.w12 = std::sqrt(r.l2 * r.l2 + grad_full);
    r.strip_grad = std::sqrt(strip ? integrate(dom, e, *strip) : grad_full);
    return r;
}

}  // namespace katolab
