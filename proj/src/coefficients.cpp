#include "mkvlab/coefficients.hpp"

#include "mkvlab/distances.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mkvlab {

namespace {

class GenericFrozen : public FrozenCoefficients {
 public:
  GenericFrozen(const CoefficientField& field, double t, const EmpiricalMeasure* mu)
      : field_(field), t_(t), mu_(mu) {}
  Vec drift(const Vec& x) const override { return field_.drift(t_, x, mu_); }
  Mat diffusion(const Vec& x) const override { return field_.diffusion(t_, x, mu_); }

 private:
  const CoefficientField& field_;
  double t_;
  const EmpiricalMeasure* mu_;
};

class AffineFrozen : public FrozenCoefficients {
 public:
  AffineFrozen(Mat B, Vec c, Mat a) : B_(std::move(B)), c_(std::move(c)), a_(std::move(a)) {}
  Vec drift(const Vec& x) const override { return B_ * x + c_; }
  Mat diffusion(const Vec&) const override { return a_; }
  bool constant_diffusion() const override { return true; }

 private:
  Mat B_;
  Vec c_;
  Mat a_;
};

Mat identity(int d) { return Mat::Identity(d, d); }

void check_square(const Mat& m, int d, const char* what) {
  if (m.rows() != d || m.cols() != d)
    throw std::invalid_argument(std::string(what) + " must be " + std::to_string(d) + "x" +
                                std::to_string(d));
}

}  // namespace

std::unique_ptr<FrozenCoefficients> CoefficientField::freeze(double t,
                                                             const EmpiricalMeasure* mu) const {
  return std::make_unique<GenericFrozen>(*this, t, mu);
}

LinearField::LinearField(Mat B, Vec c, Mat a) : B_(std::move(B)), c_(std::move(c)), a_(std::move(a)) {
  const int d = static_cast<int>(c_.size());
  if (d < 1 || d > kMaxDim) throw std::invalid_argument("dimension out of range");
  check_square(B_, d, "B");
  check_square(a_, d, "a");
  sqrt_spd(a_);
  meta_.K = 0.0;
}

Vec LinearField::drift0(double, const Vec& x, const EmpiricalMeasure*) const {
  return B_ * x + c_;
}

Vec LinearField::drift1(double, const Vec& x, const EmpiricalMeasure*) const {
  return Vec::Zero(x.size());
}

std::unique_ptr<FrozenCoefficients> LinearField::freeze(double, const EmpiricalMeasure*) const {
  return std::make_unique<AffineFrozen>(B_, c_, a_);
}

MeanFieldOu::MeanFieldOu(int dim, double theta, double scale)
    : dim_(dim), theta_(theta), scale_(scale) {
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("dimension out of range");
  if (!(scale > 0.0)) throw std::invalid_argument("diffusion scale must be positive");
  meta_.K = 0.0;
  meta_.rho = [theta](double) { return std::abs(theta); };
  meta_.psi = PsiModulus::linear();
  meta_.k = 2.0;
}

Vec MeanFieldOu::drift0(double, const Vec& x, const EmpiricalMeasure*) const {
  return -theta_ * x;
}

Vec MeanFieldOu::drift1(double, const Vec&, const EmpiricalMeasure* mu) const {
  if (!mu) throw std::invalid_argument("mean_field_ou needs a measure argument");
  return theta_ * Vec(mu->mean());
}

Mat MeanFieldOu::diffusion(double, const Vec&, const EmpiricalMeasure*) const {
  return scale_ * identity(dim_);
}

std::unique_ptr<FrozenCoefficients> MeanFieldOu::freeze(double, const EmpiricalMeasure* mu) const {
  if (!mu) throw std::invalid_argument("mean_field_ou needs a measure argument");
  return std::make_unique<AffineFrozen>(-theta_ * identity(dim_), theta_ * Vec(mu->mean()),
                                        scale_ * identity(dim_));
}

namespace {

void require_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) throw std::domain_error(std::string(what) + " is not finite");
}

void require_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) throw std::domain_error(std::string(what) + " is not finite");
}

class ExaAssembled : public CoefficientField {
 public:
  explicit ExaAssembled(ExaKernels k) : k_(std::move(k)) {
    if (k_.dim < 1 || k_.dim > kMaxDim) throw std::invalid_argument("dimension out of range");
    if (!(k_.lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
    if (!k_.b0 || !k_.b_tilde || !k_.sigma_tilde)
      throw std::invalid_argument("exa kernels must all be set");
    meta_.K = k_.K;
    meta_.psi = k_.psi;
    const double K = k_.K;
    meta_.rho = [K](double) { return K; };
  }

  int dim() const override { return k_.dim; }
  bool measure_dependent() const override { return true; }
  std::string name() const override { return "exa"; }

  Vec drift0(double t, const Vec& x, const EmpiricalMeasure* mu) const override {
    Vec b = k_.b0(t, x);
    require_finite(b, "b0");
    if (!k_.b_tilde_lipschitz) b += integral(t, x, mu);
    return b;
  }

  Vec drift1(double t, const Vec& x, const EmpiricalMeasure* mu) const override {
    if (!k_.b_tilde_lipschitz) return Vec::Zero(k_.dim);
    return integral(t, x, mu);
  }

  Mat diffusion(double t, const Vec& x, const EmpiricalMeasure* mu) const override {
    if (!mu) throw std::invalid_argument("exa field needs a measure argument");
    Mat acc = k_.lambda * identity(k_.dim);
    for (Eigen::Index i = 0; i < mu->size(); ++i) {
      const Mat s = k_.sigma_tilde(t, x, Vec(mu->point(i)));
      require_finite(s, "sigma_tilde");
      acc += mu->weight(i) * s * s.transpose();
    }
    return 0.5 * acc;
  }

 private:
  Vec integral(double t, const Vec& x, const EmpiricalMeasure* mu) const {
    if (!mu) throw std::invalid_argument("exa field needs a measure argument");
    Vec acc = Vec::Zero(k_.dim);
    for (Eigen::Index i = 0; i < mu->size(); ++i) {
      const Vec v = k_.b_tilde(t, x, Vec(mu->point(i)));
      require_finite(v, "b_tilde");
      acc += mu->weight(i) * v;
    }
    return acc;
  }

  ExaKernels k_;
};

Vec exa_b0(const ExaParams& p, const Vec& x) {
  switch (p.b0) {
    case ExaParams::B0::zero:
      return Vec::Zero(x.size());
    case ExaParams::B0::linear:
      return -p.b0_c * x;
    case ExaParams::B0::singular: {
      const double r = x.norm();
      if (r == 0.0) return Vec::Zero(x.size());
      return -p.b0_c * std::pow(r, -1.0 - p.b0_gamma) * x;
    }
  }
  return Vec::Zero(x.size());
}

double exa_declared_K(const ExaParams& p) {
  return std::max({p.kappa, p.kappa_y, p.kappa_sigma * p.kappa_sigma});
}

class ExaSeparableFrozen : public FrozenCoefficients {
 public:
  ExaSeparableFrozen(const ExaParams& p, double psi_mean, double sigma_mean)
      : p_(p), psi_mean_(psi_mean) {
    a_ = 0.5 * (p.lambda + p.kappa_sigma * p.kappa_sigma * sigma_mean) * identity(p.dim);
  }
  Vec drift(const Vec& x) const override {
    Vec b = exa_b0(p_, x) - p_.kappa * x;
    b(0) += p_.kappa_y * psi_mean_;
    return b;
  }
  Mat diffusion(const Vec&) const override { return a_; }
  bool constant_diffusion() const override { return true; }

 private:
  const ExaParams& p_;
  double psi_mean_;
  Mat a_;
};

class ExaSeparable : public CoefficientField {
 public:
  explicit ExaSeparable(ExaParams p) : p_(std::move(p)) {
    if (p_.dim < 1 || p_.dim > kMaxDim) throw std::invalid_argument("dimension out of range");
    if (!(p_.lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
    meta_.K = exa_declared_K(p_);
    meta_.psi = p_.psi;
    const double ky = p_.kappa_y;
    meta_.rho = [ky](double) { return ky; };
    meta_.alpha = 1.0;
  }

  int dim() const override { return p_.dim; }
  bool measure_dependent() const override { return true; }
  std::string name() const override { return "exa"; }

  Vec drift0(double, const Vec& x, const EmpiricalMeasure*) const override {
    return exa_b0(p_, x);
  }
  Vec drift1(double, const Vec& x, const EmpiricalMeasure* mu) const override {
    const auto [psi_mean, sigma_mean] = moments(mu);
    (void)sigma_mean;
    Vec b = -p_.kappa * x;
    b(0) += p_.kappa_y * psi_mean;
    return b;
  }
  Mat diffusion(double, const Vec&, const EmpiricalMeasure* mu) const override {
    const auto [psi_mean, sigma_mean] = moments(mu);
    (void)psi_mean;
    return 0.5 * (p_.lambda + p_.kappa_sigma * p_.kappa_sigma * sigma_mean) * identity(p_.dim);
  }
  std::unique_ptr<FrozenCoefficients> freeze(double, const EmpiricalMeasure* mu) const override {
    const auto [psi_mean, sigma_mean] = moments(mu);
    return std::make_unique<ExaSeparableFrozen>(p_, psi_mean, sigma_mean);
  }

 private:
  std::pair<double, double> moments(const EmpiricalMeasure* mu) const {
    if (!mu) throw std::invalid_argument("exa field needs a measure argument");
    double psi_mean = 0.0, sigma_mean = 0.0;
    for (Eigen::Index i = 0; i < mu->size(); ++i) {
      const double v = p_.psi(mu->points().row(i).norm());
      const double s = std::min(v, 1.0);
      psi_mean += mu->weight(i) * v;
      sigma_mean += mu->weight(i) * s * s;
    }
    return {psi_mean, sigma_mean};
  }

  ExaParams p_;
};

class Perturbed : public CoefficientField {
 public:
  Perturbed(FieldPtr base, double eps, Vec u, Mat S)
      : base_(std::move(base)), eps_(eps), u_(std::move(u)), S_(std::move(S)) {
    const int d = base_->dim();
    if (u_.size() != d) throw std::invalid_argument("perturbation u has wrong dimension");
    check_square(S_, d, "perturbation S");
    if ((S_ - S_.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw std::invalid_argument("perturbation S must be symmetric");
    meta_ = base_->metadata();
  }

  int dim() const override { return base_->dim(); }
  bool measure_dependent() const override { return base_->measure_dependent(); }
  bool time_singular() const override { return base_->time_singular(); }
  std::string name() const override { return base_->name() + "+perturbation"; }
  Vec drift0(double t, const Vec& x, const EmpiricalMeasure* mu) const override {
    return base_->drift0(t, x, mu) + eps_ * u_;
  }
  Vec drift1(double t, const Vec& x, const EmpiricalMeasure* mu) const override {
    return base_->drift1(t, x, mu);
  }
  Mat diffusion(double t, const Vec& x, const EmpiricalMeasure* mu) const override {
    return base_->diffusion(t, x, mu) + eps_ * S_;
  }
  std::unique_ptr<FrozenCoefficients> freeze(double t, const EmpiricalMeasure* mu) const override {
    class Frozen : public FrozenCoefficients {
     public:
      Frozen(std::unique_ptr<FrozenCoefficients> inner, const Perturbed& outer)
          : inner_(std::move(inner)), outer_(outer) {}
      Vec drift(const Vec& x) const override { return inner_->drift(x) + outer_.eps_ * outer_.u_; }
      Mat diffusion(const Vec& x) const override {
        return inner_->diffusion(x) + outer_.eps_ * outer_.S_;
      }
      bool constant_diffusion() const override { return inner_->constant_diffusion(); }

     private:
      std::unique_ptr<FrozenCoefficients> inner_;
      const Perturbed& outer_;
    };
    return std::make_unique<Frozen>(base_->freeze(t, mu), *this);
  }

 private:
  FieldPtr base_;
  double eps_;
  Vec u_;
  Mat S_;
};

class LambdaField : public CoefficientField {
 public:
  LambdaField(LambdaSpec spec, FieldMetadata meta) : spec_(std::move(spec)) {
    if (spec_.dim < 1 || spec_.dim > kMaxDim) throw std::invalid_argument("dimension out of range");
    if (!spec_.diffusion) throw std::invalid_argument("lambda field needs a diffusion");
    meta_ = std::move(meta);
  }
  int dim() const override { return spec_.dim; }
  bool measure_dependent() const override { return spec_.measure_dependent; }
  bool time_singular() const override { return spec_.time_singular; }
  std::string name() const override { return spec_.name; }
  Vec drift0(double t, const Vec& x, const EmpiricalMeasure* mu) const override {
    return spec_.drift0 ? spec_.drift0(t, x, mu) : Vec(Vec::Zero(spec_.dim));
  }
  Vec drift1(double t, const Vec& x, const EmpiricalMeasure* mu) const override {
    return spec_.drift1 ? spec_.drift1(t, x, mu) : Vec(Vec::Zero(spec_.dim));
  }
  Mat diffusion(double t, const Vec& x, const EmpiricalMeasure* mu) const override {
    return spec_.diffusion(t, x, mu);
  }

 private:
  LambdaSpec spec_;
};

}  // namespace

FieldPtr assemble_exa(const ExaKernels& kernels) { return std::make_shared<ExaAssembled>(kernels); }

ExaKernels exa_kernels(const ExaParams& p) {
  ExaKernels k;
  k.dim = p.dim;
  k.lambda = p.lambda;
  k.psi = p.psi;
  k.K = exa_declared_K(p);
  k.sigma_bound = p.kappa_sigma;
  k.b0 = [p](double, const Vec& x) { return exa_b0(p, x); };
  k.b_tilde = [p](double, const Vec& x, const Vec& y) {
    Vec b = -p.kappa * x;
    b(0) += p.kappa_y * p.psi(y.norm());
    return b;
  };
  k.sigma_tilde = [p](double, const Vec&, const Vec& y) {
    return Mat(p.kappa_sigma * std::min(p.psi(y.norm()), 1.0) * Mat::Identity(p.dim, p.dim));
  };
  return k;
}

FieldPtr make_exa_field(const ExaParams& p) { return std::make_shared<ExaSeparable>(p); }

FieldPtr perturb(FieldPtr base, double eps, const Vec& u, const Mat& S) {
  return std::make_shared<Perturbed>(std::move(base), eps, u, S);
}

FieldPtr make_lambda_field(LambdaSpec spec, FieldMetadata meta) {
  return std::make_shared<LambdaField>(std::move(spec), std::move(meta));
}

namespace {

[[noreturn]] void config_fail(const std::string& path, const std::string& reason) {
  throw std::invalid_argument("field." + path + ": " + reason);
}

double number_at(const nlohmann::json& j, const std::string& key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) config_fail(key, "expected a number");
  return j.at(key).get<double>();
}

Mat matrix_at(const nlohmann::json& j, const std::string& key, int d, double fallback_scalar) {
  if (!j.contains(key)) return fallback_scalar * Mat::Identity(d, d);
  const auto& v = j.at(key);
  if (v.is_number()) return v.get<double>() * Mat::Identity(d, d);
  if (!v.is_array() || static_cast<int>(v.size()) != d)
    config_fail(key, "expected a number or a " + std::to_string(d) + "x" + std::to_string(d) +
                         " array");
  Mat m(d, d);
  for (int i = 0; i < d; ++i) {
    if (!v[static_cast<std::size_t>(i)].is_array() ||
        static_cast<int>(v[static_cast<std::size_t>(i)].size()) != d)
      config_fail(key + "[" + std::to_string(i) + "]", "expected " + std::to_string(d) + " numbers");
    for (int c = 0; c < d; ++c) m(i, c) = v[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Vec vector_at(const nlohmann::json& j, const std::string& key, int d) {
  if (!j.contains(key)) return Vec::Zero(d);
  const auto& v = j.at(key);
  if (v.is_number()) return Vec::Constant(d, v.get<double>());
  if (!v.is_array() || static_cast<int>(v.size()) != d)
    config_fail(key, "expected a number or " + std::to_string(d) + " numbers");
  Vec out(d);
  for (int i = 0; i < d; ++i) out(i) = v[static_cast<std::size_t>(i)].get<double>();
  return out;
}

}  // namespace

FieldPtr field_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("field: expected an object");
  if (!j.contains("family")) config_fail("family", "missing");
  const std::string family = j.at("family").get<std::string>();
  const double dim_raw = number_at(j, "dim", 1);
  if (dim_raw < 1 || dim_raw > kMaxDim || dim_raw != std::floor(dim_raw))
    config_fail("dim", "must be an integer in [1, " + std::to_string(kMaxDim) + "]");
  const int d = static_cast<int>(dim_raw);
  FieldPtr field;
  if (family == "frozen") {
    const Mat B = matrix_at(j, "B", d, 0.0);
    const Vec c = vector_at(j, "c", d);
    const Mat a = matrix_at(j, "a", d, 1.0);
    try {
      field = std::make_shared<LinearField>(B, c, a);
    } catch (const std::domain_error& e) {
      config_fail("a", e.what());
    }
  } else if (family == "mean_field_ou" || family == "mean-field-OU") {
    const double scale = number_at(j, "a", 1.0);
    if (!(scale > 0.0)) config_fail("a", "must be positive");
    field = std::make_shared<MeanFieldOu>(d, number_at(j, "theta", 1.0), scale);
  } else if (family == "exa" || family == "exa-kernels") {
    ExaParams p;
    p.dim = d;
    p.lambda = number_at(j, "lambda", p.lambda);
    if (!(p.lambda > 0.0)) config_fail("lambda", "must be positive");
    p.kappa = number_at(j, "kappa", p.kappa);
    p.kappa_y = number_at(j, "kappa_y", p.kappa_y);
    p.kappa_sigma = number_at(j, "kappa_sigma", p.kappa_sigma);
    if (j.contains("psi")) {
      try {
        p.psi = PsiModulus::from_json(j.at("psi"));
      } catch (const std::exception& e) {
        config_fail("psi", e.what());
      }
    }
    if (j.contains("b0")) {
      const auto& b0 = j.at("b0");
      const std::string kind = b0.value("kind", "zero");
      if (kind == "zero") p.b0 = ExaParams::B0::zero;
      else if (kind == "linear") p.b0 = ExaParams::B0::linear;
      else if (kind == "singular") p.b0 = ExaParams::B0::singular;
      else config_fail("b0.kind", "unknown kind '" + kind + "'");
      p.b0_c = number_at(b0, "c", 0.0);
      p.b0_gamma = number_at(b0, "gamma", p.b0_gamma);
      if (p.b0 == ExaParams::B0::singular && !(p.b0_gamma > 0.0 && p.b0_gamma < 1.0))
        config_fail("b0.gamma", "must lie in (0, 1)");
    }
    field = make_exa_field(p);
  } else {
    config_fail("family", "unknown family '" + family + "'");
  }
  return field;
}

namespace {

// Smallest eigenvalue accepted as positive, relative to the largest.
constexpr double kSpdFloor = 1e-14;

[[noreturn]] void not_spd(double eigenvalue) {
  std::ostringstream msg;
  msg << "sqrt_spd: eigenvalue " << eigenvalue << " is not positive";
  throw std::domain_error(msg.str());
}

}  // namespace

Mat sqrt_spd(const Mat& m) {
  if (m.rows() != m.cols()) throw std::domain_error("sqrt_spd: matrix is not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::domain_error("sqrt_spd: matrix is not symmetric");
  if (m.rows() == 1) {
    if (!(m(0, 0) > kSpdFloor)) not_spd(m(0, 0));
    return Mat::Constant(1, 1, std::sqrt(m(0, 0)));
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  const double lo = es.eigenvalues().minCoeff();
  if (!(lo > kSpdFloor * std::max(1.0, es.eigenvalues().maxCoeff()))) not_spd(lo);
  const Vec root = es.eigenvalues().cwiseSqrt();
  Mat s = es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (s + s.transpose());
}

Eigen::MatrixXd sqrt_spd(const Eigen::MatrixXd& m) {
  if (m.rows() > kMaxDim) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    const double lo = es.eigenvalues().minCoeff();
    if (!(lo > kSpdFloor * std::max(1.0, es.eigenvalues().maxCoeff()))) not_spd(lo);
    return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
  }
  return Eigen::MatrixXd(sqrt_spd(Mat(m)));
}

bool scr_k_membership(double p, double q, int d) {
  return p > 2.0 && q > 2.0 && static_cast<double>(d) / p + 2.0 / q < 1.0;
}

M0Result compute_m0(double p0, double q0, int d) {
  if (!scr_k_membership(p0, q0, d))
    throw std::invalid_argument("compute_m0: (p0, q0) is not in the admissible class for d = " +
                                std::to_string(d));
  M0Result r;
  const double s = static_cast<double>(d) / p0 + 2.0 / q0;
  r.closed_form = std::max({p0 / (p0 - 1.0), q0 / (q0 - 1.0), 2.0 / (2.0 - s)});

  const auto admissible = [&](double m) {
    return (m - 1.0) * p0 / m > 1.0 && (m - 1.0) * q0 / m > 1.0 &&
           static_cast<double>(d) * m / (p0 * (m - 1.0)) + 2.0 * m / (q0 * (m - 1.0)) < 2.0;
  };
  double lo = 1.0, hi = 2.0;
  if (!admissible(hi)) throw std::logic_error("compute_m0: m = 2 is not admissible");
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    (admissible(mid) ? hi : lo) = mid;
  }
  r.bisection = hi;
  if (std::abs(r.closed_form - r.bisection) > 1e-9)
    throw std::logic_error("compute_m0: closed form and bisection disagree");
  r.value = r.closed_form;
  return r;
}

LpqNorm tilde_lpq_norm(const SpaceTimeFunction& f, double p, double q, double s, double t,
                       const std::vector<Eigen::VectorXd>& centers, int spatial_cells,
                       int time_nodes) {
  if (!(p >= 1.0) || !std::isfinite(p) || !(q >= 1.0) || !std::isfinite(q))
    throw std::invalid_argument("tilde_lpq_norm: p and q must be finite and >= 1");
  if (!(t > s)) throw std::invalid_argument("tilde_lpq_norm: need s < t");
  if (centers.empty()) throw std::invalid_argument("tilde_lpq_norm: empty centre grid");
  if (time_nodes < 2) throw std::invalid_argument("tilde_lpq_norm: need >= 2 time nodes");
  const auto d = static_cast<int>(centers.front().size());
  if (spatial_cells <= 0) spatial_cells = d == 1 ? 400 : d == 2 ? 200 : d == 3 ? 64 : 16;

  // Offsets of cell midpoints inside the unit ball.
  const double h = 2.0 / spatial_cells;
  const double cell_volume = std::pow(h, d);
  std::vector<Eigen::VectorXd> offsets;
  long long total = 1;
  for (int c = 0; c < d; ++c) total *= spatial_cells;
  Eigen::VectorXd y(d);
  for (long long idx = 0; idx < total; ++idx) {
    long long rest = idx;
    for (int c = 0; c < d; ++c) {
      y(c) = -1.0 + h * (static_cast<double>(rest % spatial_cells) + 0.5);
      rest /= spatial_cells;
    }
    if (y.squaredNorm() <= 1.0) offsets.push_back(y);
  }

  const double dt = (t - s) / (time_nodes - 1);
  LpqNorm out;
  out.spatial_cells = spatial_cells;
  out.time_nodes = time_nodes;
  out.centers = centers.size();
  for (const auto& z : centers) {
    if (z.size() != d) throw std::invalid_argument("tilde_lpq_norm: centres differ in dimension");
    double time_integral = 0.0;
    for (int n = 0; n < time_nodes; ++n) {
      const double r = s + dt * n;
      double lp = 0.0;
      for (const auto& off : offsets) lp += std::pow(std::abs(f(r, z + off)), p);
      const double norm = std::pow(lp * cell_volume, 1.0 / p);
      const double w = (n == 0 || n == time_nodes - 1) ? 0.5 : 1.0;
      time_integral += w * dt * std::pow(norm, q);
    }
    out.value = std::max(out.value, std::pow(time_integral, 1.0 / q));
  }
  return out;
}

Vec divergence(const MatrixField& a, const Vec& x, std::optional<double> h) {
  if (h && !(*h > 0.0)) throw std::invalid_argument("divergence: h must be positive");
  const double step = h.value_or(1e-4 * (1.0 + x.norm()));
  const Eigen::Index d = x.size();
  Vec div = Vec::Zero(d);
  Vec xp = x, xm = x;
  for (Eigen::Index j = 0; j < d; ++j) {
    xp(j) = x(j) + step;
    xm(j) = x(j) - step;
    const Mat ap = a(xp);
    const Mat am = a(xm);
    for (Eigen::Index i = 0; i < d; ++i) div(i) += (ap(i, j) - am(i, j)) / (2.0 * step);
    xp(j) = xm(j) = x(j);
  }
  return div;
}

nlohmann::json AssumptionReport::to_json() const {
  return {{"predicate", predicate},
          {"passed", passed},
          {"measured_constant", measured_constant},
          {"declared_constant", declared_constant},
          {"sample_description", sample_description}};
}

MeasurePairSampler random_atom_pairs(int dim, int max_atoms, double box) {
  if (max_atoms < 2) throw std::invalid_argument("random_atom_pairs: need max_atoms >= 2");
  return [=](PathStream& rng) {
    std::uniform_int_distribution<int> count(2, max_atoms);
    std::uniform_real_distribution<double> coord(-box, box);
    auto draw = [&] {
      EmpiricalMeasure::Points pts(count(rng), dim);
      for (Eigen::Index i = 0; i < pts.rows(); ++i)
        for (int c = 0; c < dim; ++c) pts(i, c) = coord(rng);
      return EmpiricalMeasure::uniform(std::move(pts));
    };
    auto first = draw();
    return std::make_pair(std::move(first), draw());
  };
}

LipschitzCheck check_measure_lipschitz(const CoefficientField& field,
                                       const MeasurePairSampler& sampler,
                                       const LipschitzCheckOptions& options) {
  const FieldMetadata& meta = field.metadata();
  const int d = field.dim();
  std::vector<Eigen::VectorXd> xs = options.x_grid;
  if (xs.empty()) {
    for (int i = 0; i < 9; ++i) {
      Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
      x(0) = -2.0 + 0.5 * i;
      xs.push_back(x);
    }
  }
  LipschitzCheck out;
  double a_ratio = 0.0, div_ratio = 0.0, b_ratio = 0.0;
  PathStream rng(options.seed, 0x11b5u);
  OtOptions ot;
  ot.max_lp_cells = 1'000'000;
  for (int n = 0; n < options.n_pairs; ++n) {
    const auto [g, gt] = sampler(rng);
    if (g.dim() != d || gt.dim() != d)
      throw std::invalid_argument("check_measure_lipschitz: sampler dimension mismatch");
    const double D = w_psi_primal(g, gt, meta.psi, ot).value +
                     wasserstein_k(g, gt, meta.k, OtMethod::exact_lp, ot).value;
    if (!(D > 0.0)) {
      ++out.skipped;
      continue;
    }
    for (double t : options.t_grid) {
      const double rho = meta.rho(t);
      for (const auto& xd : xs) {
        const Vec x = xd;
        const double da = (field.diffusion(t, x, &g) - field.diffusion(t, x, &gt))
                              .jacobiSvd()
                              .singularValues()(0);
        a_ratio = std::max(a_ratio, da / D);
        const Vec dv = divergence([&](const Vec& y) { return field.diffusion(t, y, &g); }, x) -
                       divergence([&](const Vec& y) { return field.diffusion(t, y, &gt); }, x);
        div_ratio = std::max(div_ratio, dv.norm() / D);
        const double db = (field.drift(t, x, &g) - field.drift(t, x, &gt)).norm();
        if (rho > 0.0) {
          b_ratio = std::max(b_ratio, db / (rho * D));
        } else if (db > 0.0) {
          b_ratio = std::numeric_limits<double>::infinity();
        }
      }
    }
  }
  std::ostringstream desc;
  desc << options.n_pairs << " sampled measure pairs (" << out.skipped << " skipped), "
       << options.t_grid.size() << " times x " << xs.size() << " points, D = W_psi["
       << meta.psi.description() << "] + W_" << meta.k;
  const double slack = options.slack;
  out.diffusion = {"diffusion_measure_lipschitz", a_ratio <= slack * meta.K, a_ratio, meta.K,
                   desc.str()};
  out.divergence = {"divergence_measure_lipschitz", div_ratio <= slack * meta.K + 1e-6, div_ratio,
                    meta.K, desc.str()};
  out.drift = {"drift_measure_lipschitz_over_rho", b_ratio <= slack, b_ratio, 1.0, desc.str()};
  return out;
}

}  // namespace mkvlab
