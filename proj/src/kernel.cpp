#include "gpcbf/kernel.hpp"

#include <cmath>

namespace gpcbf {

double SqExpKernel::operator()(const Vec& a, const Vec& b) const {
  double q = 0.0;
  for (int d = 0; d < lengthscales.size(); ++d) {
    const double r = (a[d] - b[d]) / lengthscales[d];
    q += r * r;
  }
  return signal_variance * std::exp(-0.5 * q);
}

void SqExpKernel::validate() const {
  require(signal_variance > 0.0, "SqExpKernel: signal variance must be > 0");
  require(lengthscales.size() > 0, "SqExpKernel: empty lengthscales");
  require((lengthscales.array() > 0.0).all(),
          "SqExpKernel: lengthscales must be > 0");
}

SqExpKernel SqExpKernel::isotropic(double signal_variance, double lengthscale,
                                   int n) {
  SqExpKernel k;
  k.signal_variance = signal_variance;
  k.lengthscales = Vec::Constant(n, lengthscale);
  return k;
}

double CompositeKernel::eval(const StateInput& a, const StateInput& b) const {
  require(a.x.size() == base.dim() && b.x.size() == base.dim(),
          "CompositeKernel::eval: state dimension mismatch");
  require(a.u.size() == input_dim() && b.u.size() == input_dim(),
          "CompositeKernel::eval: input dimension mismatch");
  double v = base(a.x, b.x);
  for (int j = 0; j < input_dim(); ++j) {
    const double w = a.u[j] * b.u[j];
    if (w != 0.0) v += w * channels[j](a.x, b.x);
  }
  return v;
}

double CompositeKernel::diag(const StateInput& z) const {
  double v = base.signal_variance;
  for (int j = 0; j < input_dim(); ++j) {
    v += z.u[j] * z.u[j] * channels[j].signal_variance;
  }
  return v;
}

double CompositeKernel::signal_variance_sum() const {
  double s = base.signal_variance;
  for (const auto& c : channels) s += c.signal_variance;
  return s;
}

void CompositeKernel::validate() const {
  base.validate();
  for (const auto& c : channels) {
    c.validate();
    require(c.dim() == base.dim(),
            "CompositeKernel: channel lengthscale dimension mismatch");
  }
}

Mat gram_matrix(const CompositeKernel& k, const std::vector<StateInput>& pts) {
  const int n = static_cast<int>(pts.size());
  Mat K(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double v = k.eval(pts[i], pts[j]);
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

}  // namespace gpcbf
