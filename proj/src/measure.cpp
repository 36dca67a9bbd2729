#include "mkvlab/measure.hpp"

#include "mkvlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mkvlab {

double stable_sum(const Eigen::VectorXd& v) {
  double sum = 0.0, comp = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double t = sum + v(i);
    if (std::abs(sum) >= std::abs(v(i)))
      comp += (sum - t) + v(i);
    else
      comp += (v(i) - t) + sum;
    sum = t;
  }
  return sum + comp;
}

EmpiricalMeasure::EmpiricalMeasure(Points points, Eigen::VectorXd weights)
    : points_(std::move(points)), weights_(std::move(weights)) {
  if (points_.rows() < 1) throw std::invalid_argument("measure needs at least one atom");
  if (points_.cols() < 1) throw std::invalid_argument("measure needs dimension >= 1");
  if (weights_.size() != points_.rows())
    throw std::invalid_argument("measure: weight count does not match atom count");
  if (!points_.allFinite()) throw std::invalid_argument("measure: non-finite atom");
  if ((weights_.array() < 0.0).any() || !weights_.allFinite())
    throw std::invalid_argument("measure: weights must be finite and nonnegative");
  const double total = stable_sum(weights_);
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("measure: weights sum to " + std::to_string(total) + ", not 1");
}

EmpiricalMeasure EmpiricalMeasure::uniform(Points points) {
  const auto n = points.rows();
  if (n < 1) throw std::invalid_argument("measure needs at least one atom");
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  return EmpiricalMeasure(std::move(points), std::move(w));
}

EmpiricalMeasure EmpiricalMeasure::dirac(const Eigen::VectorXd& x) {
  Points p(1, x.size());
  p.row(0) = x.transpose();
  return EmpiricalMeasure(std::move(p), Eigen::VectorXd::Ones(1));
}

EmpiricalMeasure EmpiricalMeasure::on_line(const std::vector<double>& xs,
                                           const std::vector<double>& weights) {
  Points p(static_cast<Eigen::Index>(xs.size()), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) p(static_cast<Eigen::Index>(i), 0) = xs[i];
  if (weights.empty()) return uniform(std::move(p));
  Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(weights.data(),
                                                        static_cast<Eigen::Index>(weights.size()));
  return EmpiricalMeasure(std::move(p), std::move(w));
}

Eigen::VectorXd EmpiricalMeasure::mean() const {
  return (points_.transpose() * weights_).eval();
}

Eigen::MatrixXd EmpiricalMeasure::covariance() const {
  const Eigen::VectorXd m = mean();
  Eigen::MatrixXd centered = points_.rowwise() - m.transpose();
  return centered.transpose() * weights_.asDiagonal() * centered;
}

double EmpiricalMeasure::moment(double k) const {
  double s = 0.0;
  for (Eigen::Index i = 0; i < size(); ++i) s += weights_(i) * std::pow(points_.row(i).norm(), k);
  return s;
}

double EmpiricalMeasure::psi_moment(const PsiModulus& psi) const {
  double s = 0.0;
  for (Eigen::Index i = 0; i < size(); ++i) s += weights_(i) * psi(points_.row(i).norm());
  return s;
}

EmpiricalMeasure EmpiricalMeasure::merged(double tol, bool keep_zero) const {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < dim(); ++c) {
      if (points_(a, c) < points_(b, c)) return true;
      if (points_(a, c) > points_(b, c)) return false;
    }
    return false;
  });
  std::vector<Eigen::Index> reps;
  std::vector<double> mass;
  for (Eigen::Index idx : order) {
    if (weights_(idx) == 0.0 && !keep_zero) continue;
    // Sorted order keeps equal points adjacent; near-equal points within tol
    // are merged with the most recent representative.
    if (!reps.empty() &&
        (points_.row(idx) - points_.row(reps.back())).cwiseAbs().maxCoeff() <= tol) {
      mass.back() += weights_(idx);
      continue;
    }
    reps.push_back(idx);
    mass.push_back(weights_(idx));
  }
  Points p(static_cast<Eigen::Index>(reps.size()), dim());
  Eigen::VectorXd w(static_cast<Eigen::Index>(reps.size()));
  for (std::size_t i = 0; i < reps.size(); ++i) {
    p.row(static_cast<Eigen::Index>(i)) = points_.row(reps[i]);
    w(static_cast<Eigen::Index>(i)) = mass[i];
  }
  w /= stable_sum(w);
  return EmpiricalMeasure(std::move(p), std::move(w));
}

std::vector<Eigen::Index> EmpiricalMeasure::stratified_indices(Eigen::Index n, Eigen::Index m,
                                                               std::uint64_t seed) {
  std::vector<Eigen::Index> idx;
  if (m >= n) {
    idx.resize(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    return idx;
  }
  PathStream stream(seed, 0x5eed5u);
  const double offset = static_cast<double>(stream() >> 11) * 0x1.0p-53;
  const double stride = static_cast<double>(n) / static_cast<double>(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    auto i = static_cast<Eigen::Index>((static_cast<double>(j) + offset) * stride);
    idx.push_back(std::min(i, n - 1));
  }
  return idx;
}

EmpiricalMeasure EmpiricalMeasure::stratified_subsample(Eigen::Index m, std::uint64_t seed) const {
  if (m >= size()) return *this;
  const auto idx = stratified_indices(size(), m, seed);
  Points p(m, dim());
  for (Eigen::Index j = 0; j < m; ++j) p.row(j) = points_.row(idx[static_cast<std::size_t>(j)]);
  return uniform(std::move(p));
}

nlohmann::json EmpiricalMeasure::to_json() const {
  nlohmann::json atoms = nlohmann::json::array();
  for (Eigen::Index i = 0; i < size(); ++i) {
    std::vector<double> x(points_.row(i).data(), points_.row(i).data() + dim());
    atoms.push_back({{"weight", weights_(i)}, {"x", x}});
  }
  return {{"dim", dim()}, {"atoms", atoms}};
}

EmpiricalMeasure EmpiricalMeasure::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("atoms") || !j["atoms"].is_array() || j["atoms"].empty())
    throw std::invalid_argument("measure: expected an object with a non-empty 'atoms' array");
  const auto& atoms = j["atoms"];
  const auto d = static_cast<Eigen::Index>(atoms[0].at("x").size());
  Points p(static_cast<Eigen::Index>(atoms.size()), d);
  Eigen::VectorXd w(static_cast<Eigen::Index>(atoms.size()));
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const auto& x = atoms[i].at("x");
    if (static_cast<Eigen::Index>(x.size()) != d)
      throw std::invalid_argument("measure: atoms differ in dimension");
    for (Eigen::Index c = 0; c < d; ++c)
      p(static_cast<Eigen::Index>(i), c) = x[static_cast<std::size_t>(c)].get<double>();
    w(static_cast<Eigen::Index>(i)) = atoms[i].at("weight").get<double>();
  }
  return EmpiricalMeasure(std::move(p), std::move(w));
}

std::string EmpiricalMeasure::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "weight";
  for (Eigen::Index c = 0; c < dim(); ++c) os << ",x" << (c + 1);
  os << '\n';
  for (Eigen::Index i = 0; i < size(); ++i) {
    os << weights_(i);
    for (Eigen::Index c = 0; c < dim(); ++c) os << ',' << points_(i, c);
    os << '\n';
  }
  return os.str();
}

void EmpiricalMeasure::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_csv();
}

EmpiricalMeasure EmpiricalMeasure::parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (rows.empty() && line_no == 1) continue;  // header
      throw std::invalid_argument("measure CSV line " + std::to_string(line_no) +
                                  ": non-numeric cell");
    }
    if (row.size() < 2)
      throw std::invalid_argument("measure CSV line " + std::to_string(line_no) +
                                  ": need weight and at least one coordinate");
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::invalid_argument("measure CSV line " + std::to_string(line_no) +
                                  ": column count differs from first row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("measure CSV has no atoms");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.front().size() - 1);
  Points p(n, d);
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    w(i) = r[0];
    for (Eigen::Index c = 0; c < d; ++c) p(i, c) = r[static_cast<std::size_t>(c + 1)];
  }
  return EmpiricalMeasure(std::move(p), std::move(w));
}

EmpiricalMeasure EmpiricalMeasure::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

bool same_law(const EmpiricalMeasure& a, const EmpiricalMeasure& b, double tol) {
  if (a.dim() != b.dim()) return false;
  const auto ma = a.merged(tol);
  const auto mb = b.merged(tol);
  if (ma.size() != mb.size()) return false;
  for (Eigen::Index i = 0; i < ma.size(); ++i) {
    if ((ma.points().row(i) - mb.points().row(i)).cwiseAbs().maxCoeff() > tol) return false;
    if (std::abs(ma.weight(i) - mb.weight(i)) > tol) return false;
  }
  return true;
}

}  // namespace mkvlab
