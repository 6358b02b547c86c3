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
#ifndef IHD_CORE_FEATURE_SELECTION_HPP_
#define IHD_CORE_FEATURE_SELECTION_HPP_

// Reduces D-dim slice embeddings to k dims before the sequence model.

#include <cstddef>
#include <string>
#include <vector>

#include "scan_io.hpp"

namespace ihd {

enum class SelectorMethod { kStdTopK, kHeadWeight, kPca };
enum class HeadWeightMode { kLargest, kSmallest };

std::string SelectorMethodName(SelectorMethod m);
SelectorMethod ParseSelectorMethod(const std::string &name);
std::string HeadWeightModeName(HeadWeightMode m);
HeadWeightMode ParseHeadWeightMode(const std::string &name);

struct SelectorSpec {
  SelectorMethod method = SelectorMethod::kPca;
  std::size_t k = 120;
  HeadWeightMode mode = HeadWeightMode::kSmallest;  // head_weight only
  std::size_t pca_fit_samples = 30000;
};

// Row-major N x D matrix.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}
  double &at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

class FittedSelector {
 public:
  SelectorMethod method = SelectorMethod::kStdTopK;
  std::size_t input_dim = 0;
  // Index methods.
  std::vector<std::size_t> indices;
  // PCA.
  std::vector<double> mean;         // D
  Matrix basis;                     // k x D, orthonormal rows
  std::vector<double> eigenvalues;  // k, non-increasing

  std::size_t output_dim() const;
  std::vector<double> Transform(const std::vector<double> &embedding) const;
  Matrix TransformRows(const Matrix &embeddings) const;

  std::vector<NamedArray> ToArrays() const;
  static FittedSelector FromArrays(const std::vector<NamedArray> &arrays);
};

FittedSelector FitStd(const Matrix &features, std::size_t k);
// `head` is 6 x D.
FittedSelector FitHeadWeight(const Matrix &head, std::size_t k,
                             HeadWeightMode mode);
FittedSelector FitPca(const Matrix &features, std::size_t k,
                      std::size_t max_fit_samples = 30000);
FittedSelector FitSelector(const SelectorSpec &spec, const Matrix &features,
                           const Matrix &head);

struct EigenResult {
  std::vector<double> values;  // non-increasing
  Matrix vectors;              // row i is the eigenvector for values[i]
  std::size_t sweeps = 0;
};

// Cyclic Jacobi on a symmetric matrix. Throws RuntimeError with the remaining
// off-diagonal norm if it has not converged after `max_sweeps`.
EigenResult JacobiEigen(const Matrix &symmetric, std::size_t max_sweeps = 100);

Matrix SampleCovariance(const Matrix &features, std::vector<double> &mean);

}  // namespace ihd

#endif  // IHD_CORE_FEATURE_SELECTION_HPP_
