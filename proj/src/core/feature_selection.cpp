/**
 * Copyright 2026 The ihd Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "feature_selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "error.hpp"

namespace ihd {

std::string SelectorMethodName(SelectorMethod m) {
  switch (m) {
    case SelectorMethod::kStdTopK: return "std_topk";
    case SelectorMethod::kHeadWeight: return "head_weight";
    case SelectorMethod::kPca: return "pca";
  }
  return "unknown";
}

SelectorMethod ParseSelectorMethod(const std::string &name) {
  if (name == "std_topk") return SelectorMethod::kStdTopK;
  if (name == "head_weight") return SelectorMethod::kHeadWeight;
  if (name == "pca") return SelectorMethod::kPca;
  throw ValidationError("unknown selector method '" + name +
                        "' (expected std_topk, head_weight or pca)");
}

std::string HeadWeightModeName(HeadWeightMode m) {
  return m == HeadWeightMode::kLargest ? "largest" : "smallest";
}

HeadWeightMode ParseHeadWeightMode(const std::string &name) {
  if (name == "largest") return HeadWeightMode::kLargest;
  if (name == "smallest") return HeadWeightMode::kSmallest;
  throw ValidationError("unknown head-weight mode '" + name +
                        "' (expected largest or smallest)");
}

namespace {

// Indices of the k best scores; `higher` picks the largest. Ties go to the
// lower index. Returned ascending.
std::vector<std::size_t> TopK(const std::vector<double> &scores, std::size_t k,
                              bool higher) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return higher ? scores[a] > scores[b] : scores[a] < scores[b];
                   });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

void CheckK(std::size_t k, std::size_t d) {
  IHD_CHECK(k >= 1 && k <= d, ValidationError, "selector k=", k,
            " must be in [1, ", d, "]");
}

}  // namespace

FittedSelector FitStd(const Matrix &features, std::size_t k) {
  const std::size_t n = features.rows, d = features.cols;
  IHD_CHECK(n >= 2, ValidationError, "fit_std needs at least 2 rows, got ", n);
  CheckK(k, d);
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) mean[c] += features.at(r, c);
  for (auto &m : mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const double e = features.at(r, c) - mean[c];
      var[c] += e * e;
    }
  std::vector<double> sd(d);
  for (std::size_t c = 0; c < d; ++c)
    sd[c] = std::sqrt(var[c] / static_cast<double>(n - 1));
  FittedSelector s;
  s.method = SelectorMethod::kStdTopK;
  s.input_dim = d;
  s.indices = TopK(sd, k, true);
  return s;
}

FittedSelector FitHeadWeight(const Matrix &head, std::size_t k,
                             HeadWeightMode mode) {
  IHD_CHECK(head.rows == kNumClasses, ValidationError,
            "head weight matrix must have ", kNumClasses, " rows, got ",
            head.rows);
  const std::size_t d = head.cols;
  CheckK(k, d);
  std::vector<double> score(d, 0.0);
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t t = 0; t < head.rows; ++t)
      score[c] = std::max(score[c], std::fabs(head.at(t, c)));
  FittedSelector s;
  s.method = SelectorMethod::kHeadWeight;
  s.input_dim = d;
  s.indices = TopK(score, k, mode == HeadWeightMode::kLargest);
  return s;
}

Matrix SampleCovariance(const Matrix &features, std::vector<double> &mean) {
  const std::size_t n = features.rows, d = features.cols;
  IHD_CHECK(n >= 2, ValidationError, "covariance needs at least 2 rows");
  mean.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) mean[c] += features.at(r, c);
  for (auto &m : mean) m /= static_cast<double>(n);
  Matrix cov(d, d);
  std::vector<double> row(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) row[c] = features.at(r, c) - mean[c];
    for (std::size_t i = 0; i < d; ++i) {
      const double ri = row[i];
      double *out = &cov.values[i * d];
      for (std::size_t j = i; j < d; ++j) out[j] += ri * row[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      cov.at(i, j) *= inv;
      cov.at(j, i) = cov.at(i, j);
    }
  return cov;
}

EigenResult JacobiEigen(const Matrix &symmetric, std::size_t max_sweeps) {
  const std::size_t d = symmetric.rows;
  IHD_CHECK(d == symmetric.cols && d > 0, ValidationError,
            "Jacobi needs a non-empty square matrix, got ", symmetric.rows, "x",
            symmetric.cols);
  Matrix a = symmetric;
  Matrix v(d, d);  // columns are eigenvectors
  for (std::size_t i = 0; i < d; ++i) v.at(i, i) = 1.0;

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j) s += 2.0 * a.at(i, j) * a.at(i, j);
    return std::sqrt(s);
  };
  double total = 0.0;
  for (double x : a.values) total += x * x;
  total = std::sqrt(total);
  const double tol = std::max(total, 1e-300) * 1e-15;

  EigenResult result;
  std::size_t sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    if (off_norm() <= tol) break;
    for (std::size_t p = 0; p + 1 < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a.at(p, q);
        if (apq == 0.0) continue;
        const double app = a.at(p, p), aqq = a.at(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        a.at(p, q) = a.at(q, p) = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  const double residual = off_norm();
  if (residual > tol)
    throw RuntimeError(detail::Concat("Jacobi did not converge after ",
                                      max_sweeps, " sweeps; off-diagonal norm ",
                                      residual));
  result.sweeps = sweep;

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return a.at(x, x) > a.at(y, y);
  });
  result.values.resize(d);
  result.vectors = Matrix(d, d);
  for (std::size_t r = 0; r < d; ++r) {
    const std::size_t col = order[r];
    result.values[r] = a.at(col, col);
    std::size_t arg = 0;
    for (std::size_t k = 1; k < d; ++k)
      if (std::fabs(v.at(k, col)) > std::fabs(v.at(arg, col))) arg = k;
    const double sign = v.at(arg, col) < 0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < d; ++k) result.vectors.at(r, k) = sign * v.at(k, col);
  }
  return result;
}

FittedSelector FitPca(const Matrix &features, std::size_t k,
                      std::size_t max_fit_samples) {
  IHD_CHECK(max_fit_samples >= 2, ValidationError,
            "PCA fit sample size must be >= 2");
  Matrix fit = features;
  if (fit.rows > max_fit_samples) {
    fit.rows = max_fit_samples;
    fit.values.resize(fit.rows * fit.cols);
  }
  const std::size_t n = fit.rows, d = fit.cols;
  IHD_CHECK(n >= 2, ValidationError, "fit_pca needs at least 2 rows, got ", n);
  IHD_CHECK(k >= 1 && k <= std::min(n - 1, d), ValidationError, "PCA k=", k,
            " must be in [1, min(N-1, D)] = [1, ", std::min(n - 1, d), "]");
  FittedSelector s;
  s.method = SelectorMethod::kPca;
  s.input_dim = d;
  const Matrix cov = SampleCovariance(fit, s.mean);
  EigenResult eig = JacobiEigen(cov);
  s.eigenvalues.assign(eig.values.begin(), eig.values.begin() + k);
  s.basis = Matrix(k, d);
  std::copy(eig.vectors.values.begin(), eig.vectors.values.begin() + k * d,
            s.basis.values.begin());
  return s;
}

FittedSelector FitSelector(const SelectorSpec &spec, const Matrix &features,
                           const Matrix &head) {
  switch (spec.method) {
    case SelectorMethod::kStdTopK: return FitStd(features, spec.k);
    case SelectorMethod::kHeadWeight: return FitHeadWeight(head, spec.k, spec.mode);
    case SelectorMethod::kPca: return FitPca(features, spec.k, spec.pca_fit_samples);
  }
  throw ValidationError("unknown selector method");
}

std::size_t FittedSelector::output_dim() const {
  return method == SelectorMethod::kPca ? basis.rows : indices.size();
}

std::vector<double> FittedSelector::Transform(
    const std::vector<double> &embedding) const {
  IHD_CHECK(embedding.size() == input_dim, ValidationError,
            "selector expects an embedding of length ", input_dim, ", got ",
            embedding.size());
  std::vector<double> out(output_dim(), 0.0);
  if (method != SelectorMethod::kPca) {
    for (std::size_t i = 0; i < indices.size(); ++i) out[i] = embedding[indices[i]];
    return out;
  }
  for (std::size_t r = 0; r < basis.rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < input_dim; ++c)
      acc += basis.at(r, c) * (embedding[c] - mean[c]);
    out[r] = acc;
  }
  return out;
}

Matrix FittedSelector::TransformRows(const Matrix &embeddings) const {
  Matrix out(embeddings.rows, output_dim());
  std::vector<double> row(embeddings.cols);
  for (std::size_t r = 0; r < embeddings.rows; ++r) {
    std::copy_n(&embeddings.values[r * embeddings.cols], embeddings.cols, row.begin());
    const auto t = Transform(row);
    std::copy(t.begin(), t.end(), &out.values[r * out.cols]);
  }
  return out;
}

// Stored as float32 like every other checkpoint array; PCA parameters lose
// precision on save, which only matters beyond ~1e-7 relative.
std::vector<NamedArray> FittedSelector::ToArrays() const {
  std::vector<NamedArray> out;
  out.push_back(ScalarArray("selector/method",
                            {static_cast<double>(static_cast<int>(method))}));
  out.push_back(ScalarArray("selector/input_dim", {static_cast<double>(input_dim)}));
  if (method != SelectorMethod::kPca) {
    std::vector<double> idx(indices.begin(), indices.end());
    out.push_back(ScalarArray("selector/indices", idx));
    return out;
  }
  out.push_back(ScalarArray("selector/mean", mean));
  NamedArray b{"selector/basis",
               {static_cast<std::uint32_t>(basis.rows),
                static_cast<std::uint32_t>(basis.cols)},
               std::vector<float>(basis.values.begin(), basis.values.end())};
  out.push_back(std::move(b));
  out.push_back(ScalarArray("selector/eigenvalues", eigenvalues));
  return out;
}

FittedSelector FittedSelector::FromArrays(const std::vector<NamedArray> &arrays) {
  FittedSelector s;
  const auto &m = FindArray(arrays, "selector/method");
  IHD_CHECK(m.values.size() == 1 && m.values[0] >= 0 && m.values[0] <= 2,
            FormatError, "selector/method is invalid");
  s.method = static_cast<SelectorMethod>(static_cast<int>(m.values[0]));
  const auto &d = FindArray(arrays, "selector/input_dim");
  IHD_CHECK(d.values.size() == 1 && d.values[0] >= 1, FormatError,
            "selector/input_dim is invalid");
  s.input_dim = static_cast<std::size_t>(d.values[0]);
  if (s.method != SelectorMethod::kPca) {
    const auto &idx = FindArray(arrays, "selector/indices");
    for (float v : idx.values) {
      IHD_CHECK(v >= 0 && v < static_cast<float>(s.input_dim), FormatError,
                "selector index ", v, " out of range [0, ", s.input_dim, ")");
      IHD_CHECK(s.indices.empty() || static_cast<std::size_t>(v) > s.indices.back(),
                FormatError, "selector indices must be strictly increasing");
      s.indices.push_back(static_cast<std::size_t>(v));
    }
    IHD_CHECK(!s.indices.empty(), FormatError, "selector has no indices");
    return s;
  }
  const auto &mean = FindArray(arrays, "selector/mean");
  const auto &basis = FindArray(arrays, "selector/basis");
  const auto &ev = FindArray(arrays, "selector/eigenvalues");
  IHD_CHECK(mean.values.size() == s.input_dim && basis.dims.size() == 2 &&
                basis.dims[1] == s.input_dim && basis.dims[0] >= 1 &&
                ev.values.size() == basis.dims[0],
            FormatError, "PCA selector arrays have inconsistent shapes");
  s.mean.assign(mean.values.begin(), mean.values.end());
  s.basis = Matrix(basis.dims[0], basis.dims[1]);
  s.basis.values.assign(basis.values.begin(), basis.values.end());
  s.eigenvalues.assign(ev.values.begin(), ev.values.end());
  return s;
}

}  // namespace ihd
