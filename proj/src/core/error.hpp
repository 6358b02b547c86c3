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
#ifndef IHD_CORE_ERROR_HPP_
#define IHD_CORE_ERROR_HPP_

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace ihd {

// Validation errors are caused by bad inputs (arguments, config, files) and
// are detected before any output is written. Runtime errors are everything
// else: numerical failures, I/O failures while writing, internal invariants.
enum class ErrorKind { kValidation, kRuntime };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string &what)
      : Error(ErrorKind::kValidation, what) {}
};

class RuntimeError : public Error {
 public:
  explicit RuntimeError(const std::string &what)
      : Error(ErrorKind::kRuntime, what) {}
};

// Malformed or corrupt file contents.
class FormatError : public ValidationError {
 public:
  explicit FormatError(const std::string &what) : ValidationError(what) {}
};

// Operand shapes do not conform for an op.
class ShapeError : public RuntimeError {
 public:
  explicit ShapeError(const std::string &what) : RuntimeError(what) {}
};

namespace detail {
template <typename... Args>
std::string Concat(Args &&...args) {
  std::ostringstream os;
  (os << ... << std::forward<Args>(args));
  return os.str();
}
}  // namespace detail

#define IHD_CHECK(cond, ExcType, ...)                          \
  do {                                                         \
    if (!(cond)) throw ExcType(::ihd::detail::Concat(__VA_ARGS__)); \
  } while (0)

}  // namespace ihd

#endif  // IHD_CORE_ERROR_HPP_
