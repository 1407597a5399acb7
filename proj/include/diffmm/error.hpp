// Copyright 2026 The diffmm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace diffmm {

// Error categories map one-to-one onto CLI exit codes (see exit_code()).
enum class ErrorKind {
  kShape,
  kConfig,
  kUsage,
  kParse,
  kFormat,
  kFile,
  kCheckpoint,
  kState,
  kNumeric,
  kDomain,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kUsage: return "usage error";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kFile: return "file error";
    case ErrorKind::kCheckpoint: return "checkpoint error";
    case ErrorKind::kState: return "state error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kDomain: return "domain error";
  }
  return "error";
}

// 0 success, 2 usage/config, 3 data/format, 4 numeric failure.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kUsage:
    case ErrorKind::kDomain:
    case ErrorKind::kState:
      return 2;
    case ErrorKind::kShape:
    case ErrorKind::kParse:
    case ErrorKind::kFormat:
    case ErrorKind::kFile:
    case ErrorKind::kCheckpoint:
      return 3;
    case ErrorKind::kNumeric:
      return 4;
  }
  return 1;
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, std::string(kind_name(kind)) + ": " + what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace diffmm
