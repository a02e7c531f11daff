#include "gpcbf/hyperfit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>

#include <json.hpp>

namespace gpcbf {

namespace {

constexpr double kJitterScale = 1e-10;  // matches GpPosterior

// Packing of one output dim's hyperparameters into log space. With ard the
// lengthscale block has state_dim entries per kernel, otherwise one shared.
struct ParamLayout {
  int nx = 0;
  int m = 0;
  bool ard = true;
  int ls_count() const { return ard ? nx : 1; }
  int per_kernel() const { return 1 + ls_count(); }
  int total() const { return (1 + m) * per_kernel(); }
};

Vec pack(const CompositeKernel& k, const ParamLayout& lay) {
  Vec theta(lay.total());
  int at = 0;
  auto put = [&](const SqExpKernel& s) {
    theta[at++] = std::log(s.signal_variance);
    for (int d = 0; d < lay.ls_count(); ++d) {
      theta[at++] = std::log(s.lengthscales[d]);
    }
  };
  put(k.base);
  for (const auto& c : k.channels) put(c);
  return theta;
}

CompositeKernel unpack(const Vec& theta, const ParamLayout& lay) {
  CompositeKernel k;
  int at = 0;
  auto take = [&]() {
    SqExpKernel s;
    s.signal_variance = std::exp(theta[at++]);
    s.lengthscales.resize(lay.nx);
    if (lay.ard) {
      for (int d = 0; d < lay.nx; ++d) s.lengthscales[d] = std::exp(theta[at++]);
    } else {
      s.lengthscales.setConstant(std::exp(theta[at++]));
    }
    return s;
  };
  k.base = take();
  k.channels.resize(lay.m);
  for (int j = 0; j < lay.m; ++j) k.channels[j] = take();
  return k;
}

// Keeps Nelder-Mead out of degenerate corners (collapsed or exploded
// lengthscales, vanishing signal); quadratic penalty outside [lo, hi].
struct LogBounds {
  Vec lo, hi;
  double penalty(const Vec& theta) const {
    double p = 0.0;
    for (int i = 0; i < theta.size(); ++i) {
      if (theta[i] < lo[i]) p += 1e3 * (lo[i] - theta[i]) * (lo[i] - theta[i]);
      if (theta[i] > hi[i]) p += 1e3 * (theta[i] - hi[i]) * (theta[i] - hi[i]);
    }
    return p;
  }
};

LogBounds make_bounds(const std::vector<Measurement>& data, int output_dim,
                      const ParamLayout& lay) {
  const int N = static_cast<int>(data.size());
  Vec span = Vec::Ones(lay.nx);
  for (int d = 0; d < lay.nx; ++d) {
    double mn = data[0].z.x[d], mx = mn;
    for (const auto& me : data) {
      mn = std::min(mn, me.z.x[d]);
      mx = std::max(mx, me.z.x[d]);
    }
    span[d] = std::max(mx - mn, 1e-2);
  }
  double ymean = 0.0;
  for (const auto& me : data) ymean += me.y[output_dim];
  ymean /= N;
  double yvar = 0.0;
  for (const auto& me : data) {
    yvar += (me.y[output_dim] - ymean) * (me.y[output_dim] - ymean);
  }
  const double ystd = std::max(std::sqrt(yvar / std::max(N - 1, 1)),
                               std::max(std::abs(ymean), 1e-3));
  Vec urms = Vec::Ones(lay.m);
  for (int j = 0; j < lay.m; ++j) {
    double s = 0.0;
    for (const auto& me : data) s += me.z.u[j] * me.z.u[j];
    urms[j] = std::max(std::sqrt(s / N), 1e-3);
  }

  LogBounds b;
  b.lo.resize(lay.total());
  b.hi.resize(lay.total());
  int at = 0;
  auto fill = [&](double sig_scale) {
    b.lo[at] = std::log(1e-8 * sig_scale * sig_scale);
    b.hi[at] = std::log(1e2 * sig_scale * sig_scale);
    ++at;
    for (int d = 0; d < lay.ls_count(); ++d) {
      const double sp = lay.ard ? span[d] : span.maxCoeff();
      b.lo[at] = std::log(0.05 * sp);
      b.hi[at] = std::log(50.0 * sp);
      ++at;
    }
  };
  fill(ystd);
  for (int j = 0; j < lay.m; ++j) fill(ystd / urms[j]);
  return b;
}

// Standard Nelder-Mead on a scalar objective; minimizes.
Vec nelder_mead(const std::function<double(const Vec&)>& f, const Vec& start,
                double step, int max_iters, double* best_val) {
  const int n = static_cast<int>(start.size());
  std::vector<Vec> xs(n + 1, start);
  std::vector<double> fs(n + 1);
  for (int i = 1; i <= n; ++i) xs[i][i - 1] += step;
  for (int i = 0; i <= n; ++i) fs[i] = f(xs[i]);

  auto order = [&] {
    std::vector<int> idx(n + 1);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fs[a] < fs[b]; });
    std::vector<Vec> xs2(n + 1);
    std::vector<double> fs2(n + 1);
    for (int i = 0; i <= n; ++i) {
      xs2[i] = xs[idx[i]];
      fs2[i] = fs[idx[i]];
    }
    xs.swap(xs2);
    fs.swap(fs2);
  };

  for (int it = 0; it < max_iters; ++it) {
    order();
    if (std::abs(fs[n] - fs[0]) < 1e-9 * (1.0 + std::abs(fs[0]))) break;
    Vec centroid = Vec::Zero(n);
    for (int i = 0; i < n; ++i) centroid += xs[i];
    centroid /= n;

    Vec xr = centroid + (centroid - xs[n]);
    double fr = f(xr);
    if (fr < fs[0]) {
      Vec xe = centroid + 2.0 * (centroid - xs[n]);
      double fe = f(xe);
      if (fe < fr) {
        xs[n] = xe;
        fs[n] = fe;
      } else {
        xs[n] = xr;
        fs[n] = fr;
      }
    } else if (fr < fs[n - 1]) {
      xs[n] = xr;
      fs[n] = fr;
    } else {
      Vec xc = centroid + 0.5 * (xs[n] - centroid);
      double fc = f(xc);
      if (fc < fs[n]) {
        xs[n] = xc;
        fs[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
          fs[i] = f(xs[i]);
        }
      }
    }
  }
  order();
  *best_val = fs[0];
  return xs[0];
}

}  // namespace

double log_marginal_likelihood(const CompositeKernel& kernel,
                               double noise_scale,
                               const std::vector<Measurement>& data,
                               int output_dim) {
  const int N = static_cast<int>(data.size());
  require(N > 0, "log_marginal_likelihood: empty dataset");
  require(output_dim >= 0 && output_dim < data[0].y.size(),
          "log_marginal_likelihood: output dim out of range");
  std::vector<StateInput> pts(N);
  Vec y(N);
  for (int q = 0; q < N; ++q) {
    pts[q] = data[q].z;
    y[q] = data[q].y[output_dim];
  }
  Mat K = gram_matrix(kernel, pts);
  K.diagonal().array() +=
      noise_scale * noise_scale + kJitterScale * kernel.signal_variance_sum();
  Eigen::LLT<Mat> llt(K);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("log_marginal_likelihood: factorization failed");
  }
  const Vec alpha = llt.solve(y);
  double logdet = 0.0;
  for (int i = 0; i < N; ++i) logdet += std::log(llt.matrixL()(i, i));
  return -0.5 * y.dot(alpha) - logdet - 0.5 * N * std::log(2.0 * M_PI);
}

std::vector<CompositeKernel> fit_hyperparameters(
    const std::vector<Measurement>& data,
    const std::vector<CompositeKernel>& init, const Vec& noise_scales,
    const FitOptions& opts) {
  require(!data.empty(), "fit_hyperparameters: empty dataset");
  require(!init.empty(), "fit_hyperparameters: no init kernels");
  require(static_cast<int>(init.size()) == noise_scales.size(),
          "fit_hyperparameters: noise scale count mismatch");
  require(static_cast<int>(init.size()) == data[0].y.size(),
          "fit_hyperparameters: kernel count must match output dims");
  for (const auto& k : init) k.validate();
  require(opts.restarts >= 1, "fit_hyperparameters: restarts must be >= 1");

  std::vector<CompositeKernel> out(init.size());
  for (int i = 0; i < static_cast<int>(init.size()); ++i) {
    ParamLayout lay{init[i].state_dim(), init[i].input_dim(), opts.ard};
    const LogBounds bounds = make_bounds(data, i, lay);
    const Vec theta0 = pack(init[i], lay);

    auto objective = [&](const Vec& theta) {
      double val;
      try {
        val = -log_marginal_likelihood(unpack(theta, lay), noise_scales[i],
                                       data, i);
      } catch (const NumericalError&) {
        return 1e12;  // pathological corner of hyperparameter space
      }
      return val + bounds.penalty(theta);
    };

    // Seed mixes the output dim so dims do not share perturbations.
    std::mt19937_64 rng(opts.seed * 0x9e3779b97f4a7c15ULL + i);
    std::normal_distribution<double> perturb(0.0, 0.8);

    double best_val = objective(theta0);
    Vec best_theta = theta0;
    for (int s = 0; s < opts.restarts; ++s) {
      Vec start = theta0;
      if (s > 0) {
        for (int d = 0; d < start.size(); ++d) {
          start[d] += perturb(rng);
          start[d] = std::clamp(start[d], bounds.lo[d], bounds.hi[d]);
        }
      }
      double val;
      Vec theta = nelder_mead(objective, start, 0.3, opts.max_iters, &val);
      if (val < best_val) {
        best_val = val;
        best_theta = theta;
      }
    }
    out[i] = unpack(best_theta, lay);
    // Init must never win on a technicality: if the penalty-free likelihood of
    // the candidate is worse than init's (or not computable), keep init.
    try {
      if (log_marginal_likelihood(out[i], noise_scales[i], data, i) <
          log_marginal_likelihood(init[i], noise_scales[i], data, i)) {
        out[i] = init[i];
      }
    } catch (const NumericalError&) {
      out[i] = init[i];
    }
  }
  return out;
}

void save_hyperparameters(const std::string& path,
                          const std::vector<CompositeKernel>& kernels,
                          const Vec& noise_scales) {
  require(static_cast<int>(kernels.size()) == noise_scales.size(),
          "save_hyperparameters: noise scale count mismatch");
  nlohmann::json root;
  auto dump_kernel = [](const SqExpKernel& k) {
    nlohmann::json j;
    j["signal_variance"] = k.signal_variance;
    j["lengthscales"] = std::vector<double>(
        k.lengthscales.data(), k.lengthscales.data() + k.lengthscales.size());
    return j;
  };
  for (int i = 0; i < static_cast<int>(kernels.size()); ++i) {
    nlohmann::json dim;
    dim["noise_scale"] = noise_scales[i];
    dim["base"] = dump_kernel(kernels[i].base);
    for (const auto& c : kernels[i].channels) {
      dim["channels"].push_back(dump_kernel(c));
    }
    if (kernels[i].channels.empty()) {
      dim["channels"] = nlohmann::json::array();
    }
    root["output_dims"].push_back(dim);
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("save_hyperparameters: cannot write " + path);
  out << root.dump(2) << "\n";
}

std::pair<std::vector<CompositeKernel>, Vec> load_hyperparameters(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_hyperparameters: cannot read " + path);
  nlohmann::json root;
  try {
    in >> root;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("load_hyperparameters: bad JSON in " + path + ": " +
                      e.what());
  }
  auto parse_kernel = [&](const nlohmann::json& j) {
    SqExpKernel k;
    k.signal_variance = j.at("signal_variance").get<double>();
    const auto ls = j.at("lengthscales").get<std::vector<double>>();
    k.lengthscales = Eigen::Map<const Vec>(ls.data(), ls.size());
    return k;
  };
  std::vector<CompositeKernel> kernels;
  std::vector<double> noise;
  try {
    for (const auto& dim : root.at("output_dims")) {
      CompositeKernel k;
      k.base = parse_kernel(dim.at("base"));
      for (const auto& c : dim.at("channels")) {
        k.channels.push_back(parse_kernel(c));
      }
      k.validate();
      kernels.push_back(std::move(k));
      noise.push_back(dim.at("noise_scale").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("load_hyperparameters: missing field in " + path + ": " +
                      e.what());
  }
  require(!kernels.empty(), "load_hyperparameters: no output dims in file");
  return {kernels, Eigen::Map<const Vec>(noise.data(), noise.size())};
}

}  // namespace gpcbf
