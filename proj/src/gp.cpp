#include "gpcbf/gp.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace gpcbf {

namespace {

constexpr double kJitterScale = 1e-10;

// Weighted squared distances from x to every row of X, then the SE kernel
// values, written into out (size N). Column-wise passes keep this vectorized
// without forming an N × n temporary.
void se_vector(const SqExpKernel& k, const Mat& X, const Vec& x, Vec& dist,
               Vec& out) {
  const int N = static_cast<int>(X.rows());
  dist.setZero(N);
  for (int d = 0; d < k.dim(); ++d) {
    const double inv_l = 1.0 / k.lengthscales[d];
    dist.array() += ((X.col(d).array() - x[d]) * inv_l).square();
  }
  out = k.signal_variance * (-0.5 * dist.array()).exp();
}

// Q × N SE kernel matrix between query rows Xq and training rows X via the
// ‖a‖² + ‖b‖² − 2a·b expansion (GEMM-dominated).
Mat se_matrix(const SqExpKernel& k, const Mat& Xq, const Mat& X) {
  Mat A = Xq * k.lengthscales.cwiseInverse().asDiagonal();
  Mat B = X * k.lengthscales.cwiseInverse().asDiagonal();
  Vec an = A.rowwise().squaredNorm();
  Vec bn = B.rowwise().squaredNorm();
  Mat dist = (-2.0 * A * B.transpose());
  dist.colwise() += an;
  dist.rowwise() += bn.transpose();
  return k.signal_variance * (-0.5 * dist.array().max(0.0)).exp();
}

}  // namespace

double AffineForm::trace_variance(const Vec& u) const {
  const int m = static_cast<int>(A.cols());
  double q = M(0, 0);
  if (m > 0) {
    q += 2.0 * M.row(0).tail(m).dot(u);
    q += u.dot(M.bottomRightCorner(m, m) * u);
  }
  return std::max(q, 0.0);
}

struct GpPosterior::Impl {
  std::vector<CompositeKernel> kernels;  // one per output dim
  Vec noise;                             // σ_i, ≥ 0
  Vec jitter;                            // fixed per-dim diagonal safeguard
  Mat X;                                 // N × nx training states
  Mat U;                                 // N × m training inputs
  std::vector<Mat> L;                    // lower Cholesky of K_i + (σ_i²+j_i)I
  std::vector<Vec> alpha;                // (K_i + (σ_i²+j_i)I)⁻¹ y_i
  std::vector<Vec> y;                    // training targets per dim

  int nx = 0;
  int m = 0;
  int N() const { return static_cast<int>(X.rows()); }

  // Cross-kernel columns for output dim i at state x:
  // col 0 = k_f(x, x_q), col j = k_g_j(x, x_q) u_{q,j}.
  void cross_columns(int i, const Vec& x, Mat& C, Vec& dist, Vec& kf) const {
    const int n_pts = N();
    C.resize(n_pts, m + 1);
    se_vector(kernels[i].base, X, x, dist, kf);
    C.col(0) = kf;
    for (int j = 0; j < m; ++j) {
      se_vector(kernels[i].channels[j], X, x, dist, kf);
      C.col(j + 1) = kf.cwiseProduct(U.col(j));
    }
  }

  double clamp_variance(int i, double var, double kdiag) const {
    if (var >= 0.0) return var;
    const double eps = std::numeric_limits<double>::epsilon();
    const double allowance =
        jitter[i] + 64.0 * (N() + 1) * eps * (kdiag + noise[i] * noise[i]);
    if (var >= -allowance) return 0.0;
    std::ostringstream msg;
    msg << "GpPosterior: posterior variance " << var << " for output dim " << i
        << " is below the roundoff allowance " << -allowance
        << " (N=" << N() << "); factorization is no longer trustworthy";
    throw NumericalError(msg.str());
  }
};

GpPosterior GpPosterior::fit(std::vector<CompositeKernel> kernels,
                             Vec noise_scales,
                             const std::vector<Measurement>& data) {
  require(!kernels.empty(), "GpPosterior::fit: no kernels");
  const int n = static_cast<int>(kernels.size());
  require(noise_scales.size() == n,
          "GpPosterior::fit: noise scale count must match output dims");
  require((noise_scales.array() >= 0.0).all(),
          "GpPosterior::fit: noise scales must be >= 0");
  for (const auto& k : kernels) k.validate();
  const int nx = kernels[0].state_dim();
  const int m = kernels[0].input_dim();
  for (const auto& k : kernels) {
    require(k.state_dim() == nx && k.input_dim() == m,
            "GpPosterior::fit: kernels disagree on dimensions");
  }

  auto impl = std::make_shared<Impl>();
  impl->kernels = std::move(kernels);
  impl->noise = std::move(noise_scales);
  impl->nx = nx;
  impl->m = m;
  impl->jitter.resize(n);
  for (int i = 0; i < n; ++i) {
    impl->jitter[i] = kJitterScale * impl->kernels[i].signal_variance_sum();
  }

  const int N = static_cast<int>(data.size());
  impl->X.resize(N, nx);
  impl->U.resize(N, m);
  std::vector<StateInput> pts(N);
  for (int q = 0; q < N; ++q) {
    require(data[q].z.x.size() == nx && data[q].z.u.size() == m,
            "GpPosterior::fit: measurement point dimension mismatch");
    require(data[q].y.size() == n,
            "GpPosterior::fit: measurement target dimension mismatch");
    impl->X.row(q) = data[q].z.x;
    impl->U.row(q) = data[q].z.u;
    pts[q] = data[q].z;
  }

  impl->L.resize(n);
  impl->alpha.resize(n);
  impl->y.resize(n);
  for (int i = 0; i < n; ++i) {
    Mat K = gram_matrix(impl->kernels[i], pts);
    const double diag_add =
        impl->noise[i] * impl->noise[i] + impl->jitter[i];
    K.diagonal().array() += diag_add;
    Eigen::LLT<Mat> llt(K);
    if (llt.info() != Eigen::Success) {
      throw NumericalError(
          "GpPosterior::fit: Gram factorization failed for output dim " +
          std::to_string(i));
    }
    impl->L[i] = llt.matrixL();
    impl->y[i].resize(N);
    for (int q = 0; q < N; ++q) impl->y[i][q] = data[q].y[i];
    impl->alpha[i] = llt.solve(impl->y[i]);
  }
  return GpPosterior(std::move(impl));
}

GpPosterior GpPosterior::append(const Measurement& meas) const {
  require(impl_ != nullptr, "GpPosterior::append: posterior not initialized");
  const Impl& old = *impl_;
  require(meas.z.x.size() == old.nx && meas.z.u.size() == old.m,
          "GpPosterior::append: point dimension mismatch");
  require(meas.y.size() == static_cast<int>(old.kernels.size()),
          "GpPosterior::append: target dimension mismatch");

  auto impl = std::make_shared<Impl>();
  impl->kernels = old.kernels;
  impl->noise = old.noise;
  impl->jitter = old.jitter;
  impl->nx = old.nx;
  impl->m = old.m;

  const int N = old.N();
  impl->X.resize(N + 1, old.nx);
  impl->X.topRows(N) = old.X;
  impl->X.row(N) = meas.z.x;
  impl->U.resize(N + 1, old.m);
  impl->U.topRows(N) = old.U;
  impl->U.row(N) = meas.z.u;

  const int n = static_cast<int>(old.kernels.size());
  impl->L.resize(n);
  impl->alpha.resize(n);
  impl->y.resize(n);

  Vec dist, kf, kvec(N);
  for (int i = 0; i < n; ++i) {
    const auto& kern = old.kernels[i];
    // Cross covariances between the new point and the stored ones.
    se_vector(kern.base, old.X, meas.z.x, dist, kf);
    kvec = kf;
    for (int j = 0; j < old.m; ++j) {
      se_vector(kern.channels[j], old.X, meas.z.x, dist, kf);
      kvec += meas.z.u[j] * kf.cwiseProduct(old.U.col(j));
    }

    Mat& L = impl->L[i];
    L = Mat::Zero(N + 1, N + 1);
    L.topLeftCorner(N, N) = old.L[i];
    Vec c = old.L[i].triangularView<Eigen::Lower>().solve(kvec);
    const double kzz = kern.diag(meas.z) + old.noise[i] * old.noise[i] +
                       old.jitter[i];
    const double d2 = kzz - c.squaredNorm();
    if (!(d2 > 0.0)) {
      throw NumericalError(
          "GpPosterior::append: factorization breakdown for output dim " +
          std::to_string(i) + " (pivot " + std::to_string(d2) + ")");
    }
    L.row(N).head(N) = c;
    L(N, N) = std::sqrt(d2);

    impl->y[i].resize(N + 1);
    impl->y[i].head(N) = old.y[i];
    impl->y[i][N] = meas.y[i];
    Vec tmp = L.triangularView<Eigen::Lower>().solve(impl->y[i]);
    impl->alpha[i] =
        L.transpose().triangularView<Eigen::Upper>().solve(tmp);
  }
  return GpPosterior(std::move(impl));
}

void GpPosterior::mean_var(const StateInput& z, Vec& mean, Vec& var,
                           GpWorkspace& ws) const {
  require(impl_ != nullptr, "GpPosterior::mean_var: posterior not initialized");
  const Impl& im = *impl_;
  require(z.x.size() == im.nx && z.u.size() == im.m,
          "GpPosterior::mean_var: point dimension mismatch");
  const int n = static_cast<int>(im.kernels.size());
  mean.resize(n);
  var.resize(n);
  const int N = im.N();
  Vec kvec(N), v(N);
  for (int i = 0; i < n; ++i) {
    const auto& kern = im.kernels[i];
    se_vector(kern.base, im.X, z.x, ws.dist, ws.kf);
    kvec = ws.kf;
    for (int j = 0; j < im.m; ++j) {
      se_vector(kern.channels[j], im.X, z.x, ws.dist, ws.kf);
      kvec += z.u[j] * ws.kf.cwiseProduct(im.U.col(j));
    }
    const double kdiag = kern.diag(z);
    if (N == 0) {
      mean[i] = 0.0;
      var[i] = kdiag;
      continue;
    }
    mean[i] = im.alpha[i].dot(kvec);
    v = im.L[i].triangularView<Eigen::Lower>().solve(kvec);
    var[i] = im.clamp_variance(i, kdiag - v.squaredNorm(), kdiag);
  }
}

void GpPosterior::mean_var(const StateInput& z, Vec& mean, Vec& var) const {
  GpWorkspace ws;
  mean_var(z, mean, var, ws);
}

void GpPosterior::mean_var_batch(const std::vector<StateInput>& zs, Mat& means,
                                 Mat& vars) const {
  require(impl_ != nullptr,
          "GpPosterior::mean_var_batch: posterior not initialized");
  const Impl& im = *impl_;
  const int Q = static_cast<int>(zs.size());
  const int n = static_cast<int>(im.kernels.size());
  means.resize(Q, n);
  vars.resize(Q, n);
  if (Q == 0) return;

  Mat Xq(Q, im.nx);
  Mat Uq(Q, im.m);
  for (int q = 0; q < Q; ++q) {
    require(zs[q].x.size() == im.nx && zs[q].u.size() == im.m,
            "GpPosterior::mean_var_batch: point dimension mismatch");
    Xq.row(q) = zs[q].x;
    Uq.row(q) = zs[q].u;
  }

  const int N = im.N();
  for (int i = 0; i < n; ++i) {
    const auto& kern = im.kernels[i];
    Vec kdiag(Q);
    for (int q = 0; q < Q; ++q) kdiag[q] = kern.diag(zs[q]);
    if (N == 0) {
      means.col(i).setZero();
      vars.col(i) = kdiag;
      continue;
    }
    Mat Kq = se_matrix(kern.base, Xq, im.X);
    for (int j = 0; j < im.m; ++j) {
      Mat Kg = se_matrix(kern.channels[j], Xq, im.X);
      Kq += (Uq.col(j) * im.U.col(j).transpose()).cwiseProduct(Kg);
    }
    means.col(i) = Kq * im.alpha[i];
    Mat V = im.L[i].triangularView<Eigen::Lower>().solve(Kq.transpose());
    for (int q = 0; q < Q; ++q) {
      vars(q, i) =
          im.clamp_variance(i, kdiag[q] - V.col(q).squaredNorm(), kdiag[q]);
    }
  }
}

void GpPosterior::affine_form(const Vec& x, AffineForm& out,
                              GpWorkspace& ws) const {
  require(impl_ != nullptr,
          "GpPosterior::affine_form: posterior not initialized");
  const Impl& im = *impl_;
  require(x.size() == im.nx, "GpPosterior::affine_form: state dim mismatch");
  const int n = static_cast<int>(im.kernels.size());
  const int m = im.m;
  out.b.resize(n);
  out.A.resize(n, m);
  out.M = Mat::Zero(m + 1, m + 1);
  const int N = im.N();
  for (int i = 0; i < n; ++i) {
    const auto& kern = im.kernels[i];
    // Prior covariance of (f_i(x), g_{i,1}(x), …, g_{i,m}(x)) is diagonal.
    out.M(0, 0) += kern.base.signal_variance;
    for (int j = 0; j < m; ++j) {
      out.M(j + 1, j + 1) += kern.channels[j].signal_variance;
    }
    if (N == 0) {
      out.b[i] = 0.0;
      out.A.row(i).setZero();
      continue;
    }
    im.cross_columns(i, x, ws.C, ws.dist, ws.kf);
    out.b[i] = im.alpha[i].dot(ws.C.col(0));
    if (m > 0) {
      out.A.row(i) = im.alpha[i].transpose() * ws.C.rightCols(m);
    }
    ws.S = ws.C;
    im.L[i].triangularView<Eigen::Lower>().solveInPlace(ws.S);
    out.M.noalias() -= ws.S.transpose() * ws.S;
  }
}

int GpPosterior::size() const { return impl_ ? impl_->N() : 0; }
int GpPosterior::state_dim() const {
  require(impl_ != nullptr, "GpPosterior: not initialized");
  return impl_->nx;
}
int GpPosterior::input_dim() const {
  require(impl_ != nullptr, "GpPosterior: not initialized");
  return impl_->m;
}
int GpPosterior::output_dim() const {
  require(impl_ != nullptr, "GpPosterior: not initialized");
  return static_cast<int>(impl_->kernels.size());
}
const CompositeKernel& GpPosterior::kernel(int i) const {
  require(impl_ != nullptr, "GpPosterior: not initialized");
  return impl_->kernels.at(i);
}
double GpPosterior::noise_scale(int i) const {
  require(impl_ != nullptr, "GpPosterior: not initialized");
  return impl_->noise[i];
}
double GpPosterior::jitter(int i) const {
  require(impl_ != nullptr, "GpPosterior: not initialized");
  return impl_->jitter[i];
}
std::vector<StateInput> GpPosterior::points() const {
  require(impl_ != nullptr, "GpPosterior: not initialized");
  std::vector<StateInput> pts(impl_->N());
  for (int q = 0; q < impl_->N(); ++q) {
    pts[q] = {impl_->X.row(q).transpose(), impl_->U.row(q).transpose()};
  }
  return pts;
}

}  // namespace gpcbf
