/* Copyright 2026 The hefriendly Authors.
 * This program is Licensed under the Apache License, Version 2.0
 * (the "License"); you may not use this file except in compliance
 * with the License. You may obtain a copy of the License at
 *   http://www.apache.org/licenses/LICENSE-2.0
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. See accompanying LICENSE file.
 */
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hef {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not conform to what an operation expects.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation precondition (bad argument range, wrong mode...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Stored state violates a data invariant (e.g. negative variance).
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf where finite values are required.
class NumericError : public Error {
 public:
  static constexpr std::size_t kNoNode = static_cast<std::size_t>(-1);

  explicit NumericError(const std::string& what, std::size_t node = kNoNode)
      : Error(what), node_(node) {}

  /// Tape node index that produced the value, or kNoNode.
  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  IoError(const std::string& what, std::string path)
      : Error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Batch-norm folding could not be applied.
class FoldError : public Error {
 public:
  using Error::Error;
};

/// Graph could not be finalized into an HE-friendly form.
class FinalizeError : public Error {
 public:
  using Error::Error;
};

}  // namespace hef
