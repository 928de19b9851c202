#include "nodemap/dimred.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace nodemap::dimred {

PcaResult pca(const Matrix& centred, int k) {
  const auto n = centred.rows();
  const auto p = centred.cols();
  if (k < 0) throw InputError("number of components must be non-negative");
  if (k > std::min<Eigen::Index>(n - 1, p))
    throw InputError("k exceeds rank: " + std::to_string(k) + " components requested from a " + std::to_string(n) +
                     "x" + std::to_string(p) + " matrix");
  PcaResult out;
  out.loadings.resize(p, k);
  out.variances.resize(k);
  if (k == 0) return out;

  Eigen::BDCSVD<Matrix> svd(centred, Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double tol = static_cast<double>(std::max(n, p)) * std::numeric_limits<double>::epsilon() * s(0);
  if (!(s(k - 1) > tol)) throw InputError("k exceeds rank: component " + std::to_string(k) + " has zero variance");

  for (int j = 0; j < k; ++j) {
    Vector v = svd.matrixV().col(j);
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0) v = -v;
    out.loadings.col(j) = v;
    out.variances(j) = s(j) * s(j) / static_cast<double>(n - 1);
  }
  return out;
}

namespace {

struct NodalRows {
  Matrix x;
  std::vector<Component> labels;
};

NodalRows nodal_rows(const ManualTrainingSet& train, const std::vector<bool>* include = nullptr) {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < train.labels.size(); ++i) {
    if (train.labels[i] == Component::NonNodal) continue;
    if (include && !(*include)[i]) continue;
    idx.push_back(static_cast<Eigen::Index>(i));
  }
  NodalRows out;
  out.x.resize(static_cast<Eigen::Index>(idx.size()), train.spectra.rows.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.x.row(static_cast<Eigen::Index>(r)) = train.spectra.rows.row(idx[r]);
    out.labels.push_back(train.labels[static_cast<std::size_t>(idx[r])]);
  }
  return out;
}

struct ClassSplit {
  double mean_normal = 0.0;
  double mean_metastatic = 0.0;
  double pooled_variance = 0.0;
};

ClassSplit split_scores(const Vector& t, const std::vector<Component>& labels) {
  double sum[2] = {0, 0};
  double cnt[2] = {0, 0};
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const int c = labels[static_cast<std::size_t>(i)] == Component::Metastatic ? 1 : 0;
    sum[c] += t(i);
    cnt[c] += 1;
  }
  ClassSplit out;
  out.mean_normal = sum[0] / cnt[0];
  out.mean_metastatic = sum[1] / cnt[1];
  double ss = 0.0;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double m = labels[static_cast<std::size_t>(i)] == Component::Metastatic ? out.mean_metastatic : out.mean_normal;
    ss += (t(i) - m) * (t(i) - m);
  }
  out.pooled_variance = ss / (cnt[0] + cnt[1] - 2.0);
  return out;
}

ExternalFit fit_nodal(const NodalRows& rows, int k_ext) {
  const auto m = rows.x.rows();
  std::size_t n_met = 0;
  for (auto l : rows.labels) n_met += (l == Component::Metastatic);
  const std::size_t n_norm = rows.labels.size() - n_met;
  if (n_met == 0 || n_norm == 0) throw InputError("both normal and metastatic rows are required");
  if (m < 3) throw InputError("too few training rows");

  ExternalFit fit;
  fit.train_mean = rows.x.colwise().mean().transpose();
  const Matrix xc = rows.x.rowwise() - fit.train_mean.transpose();
  const PcaResult pc = pca(xc, k_ext);
  const Matrix s = xc * pc.loadings;

  Vector mean_n = Vector::Zero(k_ext);
  Vector mean_c = Vector::Zero(k_ext);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (rows.labels[static_cast<std::size_t>(i)] == Component::Metastatic)
      mean_c += s.row(i).transpose();
    else
      mean_n += s.row(i).transpose();
  }
  mean_n /= static_cast<double>(n_norm);
  mean_c /= static_cast<double>(n_met);

  Matrix within = Matrix::Zero(k_ext, k_ext);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Vector d =
        s.row(i).transpose() - (rows.labels[static_cast<std::size_t>(i)] == Component::Metastatic ? mean_c : mean_n);
    within.noalias() += d * d.transpose();
  }
  within /= static_cast<double>(m - 2);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(within);
  const double max_eig = eig.eigenvalues().maxCoeff();
  const double min_eig = eig.eigenvalues().minCoeff();
  if (!(max_eig > 0.0)) throw NumericError("within-class scatter is zero");
  if (min_eig <= 1e-12 * max_eig) {
    within += (1e-8 * within.trace() / static_cast<double>(k_ext)) * Matrix::Identity(k_ext, k_ext);
    fit.regularised = true;
  }
  Eigen::LDLT<Matrix> ldlt(within);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) throw NumericError("singular within-class scatter");
  const Vector w = ldlt.solve(mean_c - mean_n);
  if (!w.allFinite()) throw NumericError("singular within-class scatter");

  fit.q_ext = pc.loadings * w;
  Vector t = xc * fit.q_ext;
  const ClassSplit split = split_scores(t, rows.labels);
  if (!(split.pooled_variance > 0.0)) throw NumericError("canonical score has zero within-class variance");
  double scale = 1.0 / std::sqrt(split.pooled_variance);
  if (split.mean_metastatic < split.mean_normal) scale = -scale;
  fit.q_ext *= scale;
  fit.scores = xc * fit.q_ext;
  fit.labels = rows.labels;
  return fit;
}

}  // namespace

ExternalFit fit_external(const ManualTrainingSet& train, int k_ext) {
  validate_spectra(train.spectra);
  if (k_ext < 1) throw InputError("k_ext must be at least 1");
  return fit_nodal(nodal_rows(train), k_ext);
}

KSelection choose_k_ext(const ManualTrainingSet& train, std::span<const int> candidates) {
  if (candidates.empty()) throw InputError("empty candidate list");
  std::map<std::string, std::set<Component>> site_classes;
  for (std::size_t i = 0; i < train.labels.size(); ++i) {
    if (train.labels[i] != Component::NonNodal) site_classes[train.site_ids[i]].insert(train.labels[i]);
  }
  std::size_t sites_n = 0, sites_c = 0;
  for (const auto& [site, classes] : site_classes) {
    sites_n += classes.count(Component::Normal);
    sites_c += classes.count(Component::Metastatic);
  }
  if (sites_n < 2 || sites_c < 2) throw InputError("leave-one-site-out needs at least 2 sites per class");

  KSelection out;
  out.accuracy.reserve(candidates.size());
  for (int k : candidates) {
    double total = 0.0;
    for (const auto& [site, classes] : site_classes) {
      std::vector<bool> keep(train.labels.size());
      for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = train.site_ids[i] != site;
      const ExternalFit fit = fit_nodal(nodal_rows(train, &keep), k);
      const ClassSplit split = split_scores(fit.scores, fit.labels);
      std::size_t correct = 0, held = 0;
      for (std::size_t i = 0; i < keep.size(); ++i) {
        if (keep[i] || train.labels[i] == Component::NonNodal) continue;
        const double t = (train.spectra.rows.row(static_cast<Eigen::Index>(i)).transpose() - fit.train_mean).dot(fit.q_ext);
        const auto predicted = std::abs(t - split.mean_metastatic) < std::abs(t - split.mean_normal)
                                   ? Component::Metastatic
                                   : Component::Normal;
        correct += (predicted == train.labels[i]);
        ++held;
      }
      total += static_cast<double>(correct) / static_cast<double>(held);
    }
    out.accuracy.push_back(total / static_cast<double>(site_classes.size()));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const bool better = out.accuracy[i] > out.accuracy[best] ||
                        (out.accuracy[i] == out.accuracy[best] && candidates[i] < candidates[best]);
    if (better) best = i;
  }
  out.chosen = candidates[best];
  return out;
}

Matrix project_orthogonal(const Matrix& x, const Vector& q_ext) {
  const double qq = q_ext.squaredNorm();
  if (!(qq > 0.0)) throw InputError("zero q_ext");
  if (x.cols() != q_ext.size()) throw InputError("dimension mismatch");
  return x - (x * q_ext) * (q_ext.transpose() / qq);
}

Matrix ReductionBasis::projection() const {
  Matrix w(q_ext.size(), dimension());
  w.col(0) = q_ext;
  if (k_int > 0) w.rightCols(k_int) = project_orthogonal(q_int.transpose(), q_ext).transpose();
  return w;
}

ReductionBasis fit_node_basis(const Matrix& node_spectra, const Vector& train_mean, const Vector& q_ext, int k_int,
                              int k_ext) {
  if (node_spectra.cols() != train_mean.size() || q_ext.size() != train_mean.size())
    throw InputError("dimension mismatch");
  if (k_int < 0) throw InputError("k_int must be non-negative");
  const Matrix centred = node_spectra.rowwise() - train_mean.transpose();
  const Matrix tilde = project_orthogonal(centred, q_ext);
  PcaResult pc = pca(tilde, k_int);

  // Remove the rounding-level component along q_ext and re-orthonormalise.
  const Vector qhat = q_ext.normalized();
  for (int j = 0; j < k_int; ++j) {
    Vector v = pc.loadings.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      v -= qhat * qhat.dot(v);
      for (int i = 0; i < j; ++i) v -= pc.loadings.col(i) * pc.loadings.col(i).dot(v);
    }
    pc.loadings.col(j) = v.normalized();
  }

  ReductionBasis basis;
  basis.train_mean = train_mean;
  basis.q_ext = q_ext;
  basis.q_int = std::move(pc.loadings);
  basis.k_int = k_int;
  basis.k_ext = k_ext;
  return basis;
}

Matrix reduce(const Matrix& x, const ReductionBasis& basis) {
  if (x.cols() != basis.train_mean.size()) throw InputError("dimension mismatch");
  const Matrix centred = x.rowwise() - basis.train_mean.transpose();
  Matrix out(x.rows(), basis.dimension());
  out.col(0) = centred * basis.q_ext;
  if (basis.k_int > 0) out.rightCols(basis.k_int) = project_orthogonal(centred, basis.q_ext) * basis.q_int;
  return out;
}

Moments sample_moments(const Matrix& rows) {
  if (rows.rows() < 2) throw InputError("class too small");
  Moments m;
  m.count = static_cast<std::size_t>(rows.rows());
  m.mean = rows.colwise().mean().transpose();
  const Matrix centred = rows.rowwise() - m.mean.transpose();
  m.cov = (centred.transpose() * centred) / static_cast<double>(rows.rows() - 1);
  m.cov = 0.5 * (m.cov + m.cov.transpose()).eval();
  return m;
}

PriorMoments prior_moments(const Matrix& reduced, std::span<const Component> labels) {
  if (static_cast<std::size_t>(reduced.rows()) != labels.size()) throw InputError("label count mismatch");
  const auto k = reduced.cols();
  auto rows_of = [&](Component c) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) idx.push_back(static_cast<Eigen::Index>(i));
    if (static_cast<Eigen::Index>(idx.size()) < k + 1)
      throw InputError(std::string("class too small: ") + std::string(to_string(c)) + " needs at least k+1 rows");
    Matrix out(static_cast<Eigen::Index>(idx.size()), k);
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = reduced.row(idx[r]);
    return out;
  };
  return PriorMoments{sample_moments(rows_of(Component::Normal)), sample_moments(rows_of(Component::Metastatic))};
}

Moments project_moments(const Moments& spectral, const ReductionBasis& basis) {
  if (spectral.mean.size() != basis.train_mean.size()) throw InputError("dimension mismatch");
  const Matrix w = basis.projection();
  Moments out;
  out.count = spectral.count;
  out.mean = w.transpose() * (spectral.mean - basis.train_mean);
  out.cov = w.transpose() * spectral.cov * w;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

}  // namespace nodemap::dimred
