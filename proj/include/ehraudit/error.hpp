// Copyright 2026 The EHR Audit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EHRAUDIT_ERROR_HPP_
#define EHRAUDIT_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace ehraudit {

// Error categories. The numeric values are part of the C API.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kParse = 2,
  kIo = 3,
  kCapabilityMissing = 4,
  kDegenerateInput = 5,
  kUnknownCode = 6,
  kNumeric = 7,
  kProtocol = 8,
  kNotFound = 9,
  kInternal = 10,
};

const char* ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace ehraudit

#endif  // EHRAUDIT_ERROR_HPP_
