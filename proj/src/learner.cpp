#include "dhs/learner.hpp"

#include <algorithm>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/SVD>

#include "dhs/error.hpp"

namespace dhs {

QMatrix::QMatrix(Matrix theta, long n, long m)
    : theta_(symmetrize(theta)), n_(n), m_(m) {
  if (theta_.rows() != n + m || theta_.cols() != n + m) {
    throw Error(ErrorKind::DimensionMismatch, "Theta must be (n+m) x (n+m)");
  }
}

QMatrix model_theta(const AugmentedSystem& aug, const Matrix& P) {
  Matrix theta(aug.n + aug.m, aug.n + aug.m);
  const Matrix PA = P * aug.A;
  const Matrix PB = P * aug.B;
  theta.topLeftCorner(aug.n, aug.n) = aug.Q + aug.A.transpose() * PA;
  theta.topRightCorner(aug.n, aug.m) = aug.N + aug.A.transpose() * PB;
  theta.bottomLeftCorner(aug.m, aug.n) =
      aug.N.transpose() + aug.B.transpose() * PA;
  theta.bottomRightCorner(aug.m, aug.m) = aug.R + aug.B.transpose() * PB;
  return QMatrix(std::move(theta), aug.n, aug.m);
}

void DataBatch::append(const DataBatch& more) {
  if (Z.size() == 0) {
    *this = more;
    return;
  }
  Matrix z(Z.rows(), Z.cols() + more.Z.cols());
  z << Z, more.Z;
  Matrix zeta(Zeta.rows(), Zeta.cols() + more.Zeta.cols());
  zeta << Zeta, more.Zeta;
  Z = std::move(z);
  Zeta = std::move(zeta);
}

ProbingNoise::ProbingNoise(const ProbingNoiseConfig& config, long channels)
    : config_(config) {
  const long per_channel = config.sinusoids_per_channel;
  const long total = channels * per_channel;
  std::vector<double> grid(static_cast<std::size_t>(total));
  for (long i = 0; i < total; ++i) {
    const double t = total > 1 ? static_cast<double>(i) / (total - 1) : 0.0;
    grid[static_cast<std::size_t>(i)] =
        config.omega_min * std::pow(config.omega_max / config.omega_min, t);
  }
  // Raw engine output keeps the phases identical across standard libraries.
  std::mt19937_64 rng(config.seed);
  frequencies_.resize(static_cast<std::size_t>(channels));
  phases_.resize(static_cast<std::size_t>(channels));
  for (long c = 0; c < channels; ++c) {
    for (long j = 0; j < per_channel; ++j) {
      frequencies_[static_cast<std::size_t>(c)].push_back(
          grid[static_cast<std::size_t>(j * channels + c)]);
      const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      phases_[static_cast<std::size_t>(c)].push_back(2.0 * std::numbers::pi *
                                                     unit);
    }
  }
}

Vector ProbingNoise::operator()(long k) const {
  Vector out = Vector::Zero(channels());
  if (config_.amplitude == 0.0) return out;
  const double envelope =
      config_.amplitude *
      std::max(std::pow(config_.decay, static_cast<double>(k)), config_.floor);
  for (long c = 0; c < channels(); ++c) {
    const auto& w = frequencies_[static_cast<std::size_t>(c)];
    const auto& phi = phases_[static_cast<std::size_t>(c)];
    double sum = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      sum += std::sin(w[j] * static_cast<double>(k) + phi[j]);
    }
    out(c) = envelope * sum;
  }
  return out;
}

void validate_noise(const ProbingNoiseConfig& config, long state_dim) {
  const long needed = (state_dim + 2) / 2;  // ceil((n+1)/2)
  if (config.sinusoids_per_channel < needed) {
    throw Error(ErrorKind::ValidationFailed,
                "probing noise needs at least " + std::to_string(needed) +
                    " sinusoids per channel for PE of order " +
                    std::to_string(state_dim + 1));
  }
  if (!(config.omega_min > 0.0) || !(config.omega_max > config.omega_min) ||
      !(config.omega_max < std::numbers::pi)) {
    throw Error(ErrorKind::ValidationFailed,
                "probing frequencies must satisfy 0 < min < max < pi");
  }
  if (!(config.amplitude >= 0.0) || !(config.decay > 0.0) ||
      !(config.decay <= 1.0) || !(config.floor >= 0.0) || !(config.floor <= 1.0)) {
    throw Error(ErrorKind::ValidationFailed,
                "probing amplitude must be >= 0, decay in (0, 1] and floor in [0, 1]");
  }
}

long required_samples(long n, long m) { return (n + 1) * m + n; }

PeReport pe_report(const DataBatch& batch) {
  PeReport report;
  report.required = batch.Z.rows();
  if (batch.Z.size() == 0) return report;
  Eigen::BDCSVD<Matrix> svd(batch.Z);
  const Vector& s = svd.singularValues();
  report.sigma_max = s(0);
  report.sigma_min = s(s.size() - 1);
  if (report.sigma_max > 0.0) {
    report.rank = static_cast<long>(
        (s.array() > kRankTolerance * report.sigma_max).count());
  }
  return report;
}

PeReport check_pe(const DataBatch& batch) {
  if (batch.samples() == 0) {
    throw Error(ErrorKind::RankDeficient, "empty batch");
  }
  PeReport report = pe_report(batch);
  if (!report.ok()) {
    throw RankDeficientError(report.rank, report.required,
                             "batch is not persistently exciting");
  }
  return report;
}

EstimationMethod parse_method(std::string_view name) {
  if (name == "matrix") return EstimationMethod::Matrix;
  if (name == "scalar-ls") return EstimationMethod::ScalarLeastSquares;
  throw Error(ErrorKind::ParseError,
              "unknown estimation method '" + std::string(name) + "'");
}

std::string_view to_string(EstimationMethod method) {
  return method == EstimationMethod::Matrix ? "matrix" : "scalar-ls";
}

namespace {

QMatrix estimate_matrix(const DataBatch& batch, const Matrix& Qbar) {
  const Matrix phi = batch.Zeta * pseudoinverse(batch.Z);
  try {
    return QMatrix(solve_discrete_lyapunov(phi, Qbar), batch.n(), batch.m());
  } catch (const Error& err) {
    if (err.kind() != ErrorKind::NotContractive) throw;
    throw Error(ErrorKind::NotContractive,
                "estimated transition is not contractive; the policy that "
                "generated the data does not stabilize the plant");
  }
}

QMatrix estimate_scalar(const DataBatch& batch, const Matrix& Qbar) {
  const long d = batch.Z.rows();
  const long unknowns = d * (d + 1) / 2;
  const long rows = batch.samples();
  if (rows < unknowns) {
    throw RankDeficientError(rows, unknowns,
                             "fewer scalar equations than unknowns");
  }
  Matrix regression(rows, unknowns);
  Vector rhs(rows);
  for (long k = 0; k < rows; ++k) {
    const auto z = batch.Z.col(k);
    const auto zeta = batch.Zeta.col(k);
    long col = 0;
    for (long i = 0; i < d; ++i) {
      for (long j = i; j < d; ++j) {
        const double weight = i == j ? 1.0 : 2.0;
        regression(k, col++) = weight * (z(i) * z(j) - zeta(i) * zeta(j));
      }
    }
    rhs(k) = z.dot(Qbar * z);
  }
  Eigen::BDCSVD<Matrix> svd(regression, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double condition =
      s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1)
                            : std::numeric_limits<double>::infinity();
  if (!(condition <= 1e12)) {
    throw Error(ErrorKind::IllConditioned,
                "scalar regression condition number " +
                    std::to_string(condition) + " exceeds 1e12");
  }
  const Vector params = svd.solve(rhs);
  Matrix theta(d, d);
  long col = 0;
  for (long i = 0; i < d; ++i) {
    for (long j = i; j < d; ++j) {
      theta(i, j) = params(col);
      theta(j, i) = params(col);
      ++col;
    }
  }
  return QMatrix(std::move(theta), batch.n(), batch.m());
}

}  // namespace

QMatrix estimate_theta(const DataBatch& batch, const Matrix& Qbar,
                       EstimationMethod method) {
  const long d = batch.n() + batch.m();
  if (batch.Z.rows() != d || batch.Zeta.rows() != d ||
      batch.Zeta.cols() != batch.Z.cols() || Qbar.rows() != d ||
      Qbar.cols() != d) {
    throw Error(ErrorKind::DimensionMismatch, "batch and Qbar disagree");
  }
  check_pe(batch);
  return method == EstimationMethod::Matrix ? estimate_matrix(batch, Qbar)
                                            : estimate_scalar(batch, Qbar);
}

Matrix improve_policy(const QMatrix& theta) {
  const Matrix uu = theta.uu();
  Eigen::LLT<Matrix> llt(uu);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::SingularBlock, "Theta_uu is not positive definite");
  }
  return llt.solve(Matrix(theta.ue()));
}

Matrix improve_policy(const QMatrix& theta, const Matrix& A, const Matrix& B) {
  Matrix K = improve_policy(theta);
  const double radius = spectral_radius(A - B * K);
  if (!(radius < 1.0)) {
    throw Error(ErrorKind::DestabilizingUpdate,
                "improved gain has closed-loop radius " +
                    std::to_string(radius));
  }
  return K;
}

Matrix initial_controller(const DhsPlant& nominal, const DispatchWeights& weights,
                          const Matrix& Qe, const Matrix& Re) {
  const AugmentedSystem aug = build_augmented(nominal, weights, Qe, Re);
  Matrix K = solve_lqr(aug.A, aug.B, aug.Q, aug.N, aug.R).K;
  const double radius = spectral_radius(aug.closed_loop(K));
  if (!(radius < 1.0)) {
    throw Error(ErrorKind::NotStabilizable,
                "nominal gain has closed-loop radius " + std::to_string(radius));
  }
  return K;
}

DataBatch collect_batch(Environment& env, const Matrix& K,
                        const ProbingNoise& noise, long samples) {
  const long n = K.cols();
  const long m = K.rows();
  DataBatch batch;
  batch.K = K;
  batch.first_step = env.step_index();
  batch.Z.resize(n + m, samples);
  batch.Zeta.resize(n + m, samples);
  for (long s = 0; s < samples; ++s) {
    if (env.remaining() <= 0) {
      throw Error(ErrorKind::HorizonExhausted,
                  "environment ran out of steps during data collection");
    }
    const Vector eps = env.state();
    const Vector du = -K * eps + noise(env.step_index());
    env.apply(du);
    const Vector next = env.state();
    batch.Z.col(s) << eps, du;
    batch.Zeta.col(s) << next, -K * next;
  }
  return batch;
}

namespace {

bool recoverable(const Error& err) {
  return err.kind() == ErrorKind::RankDeficient ||
         err.kind() == ErrorKind::IllConditioned;
}

}  // namespace

PolicyIterationResult run_policy_iteration(
    Environment& env, const Matrix& K0, const Matrix& Qbar,
    const PolicyIterationOptions& options) {
  const long n = K0.cols();
  const long m = K0.rows();
  const long chunk = required_samples(n, m);
  validate_noise(options.noise, n);
  if (options.model) {
    const auto& [A, B] = *options.model;
    const double radius = spectral_radius(A - B * K0);
    if (!(radius < 1.0)) {
      throw Error(ErrorKind::NotStabilizable,
                  "initial gain does not stabilize the plant (radius " +
                      std::to_string(radius) + ")");
    }
  }
  const ProbingNoise noise(options.noise, m);

  PolicyIterationResult result;
  result.K = K0;
  for (int i = 0;; ++i) {
    if (options.stop_on_convergence && i >= options.iteration_cap) {
      throw Error(ErrorKind::IterationCapExceeded,
                  "no convergence after " +
                      std::to_string(options.iteration_cap) + " iterations");
    }
    if (!options.stop_on_convergence && env.remaining() < chunk) break;

    DataBatch batch = collect_batch(env, result.K, noise, chunk);
    std::optional<QMatrix> theta;
    while (!theta) {
      try {
        theta = estimate_theta(batch, Qbar, options.method);
      } catch (const Error& err) {
        const bool room = batch.samples() + chunk <=
                              options.max_extension_factor * chunk &&
                          env.remaining() >= chunk;
        if (!recoverable(err) || !room) throw;
        batch.append(collect_batch(env, result.K, noise, chunk));
      }
    }
    if (i == 0) result.first_batch = batch;

    IterationRecord record;
    record.iteration = i + 1;
    record.start_step = batch.first_step;
    record.samples = batch.samples();
    record.pe_rank = pe_report(batch).rank;
    record.K_used = result.K;
    record.Theta = theta->full();
    record.K_next = options.model ? improve_policy(*theta, options.model->first,
                                                   options.model->second)
                                  : improve_policy(*theta);
    record.gain_delta = (record.K_next - result.K).norm();
    record.oracle_distance =
        options.oracle_gain
            ? (record.K_next - *options.oracle_gain).norm() /
                  options.oracle_gain->norm()
            : std::numeric_limits<double>::quiet_NaN();
    record.spectral_radius =
        options.model
            ? spectral_radius(options.model->first -
                              options.model->second * record.K_next)
            : std::numeric_limits<double>::quiet_NaN();

    result.K = record.K_next;
    if (result.first_update_step < 0) result.first_update_step = env.step_index();
    if (options.on_update) options.on_update(record.iteration, result.K);
    const bool done = record.gain_delta < options.eps;
    result.log.push_back(std::move(record));
    if (done) {
      result.converged = true;
      if (options.stop_on_convergence) break;
    }
  }
  return result;
}

}  // namespace dhs
