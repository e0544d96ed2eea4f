// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MAFNET_ERROR_HPP
#define MAFNET_ERROR_HPP

#include <stdexcept>
#include <string>

namespace mafnet {

enum class ErrorCode {
  kFormat = 1,
  kData,
  kIo,
  kShape,
  kParam,
  kDegenerateRange,
  kConfig,
  kDivergence,
};

const char* error_code_name(ErrorCode code) noexcept;

/// Base of every library exception; carries a stable code that the C API
/// forwards unchanged.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define MAFNET_DEFINE_ERROR(Name, Code)                                   \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(ErrorCode::Code, what) {} \
  };

MAFNET_DEFINE_ERROR(FormatError, kFormat)
MAFNET_DEFINE_ERROR(DataError, kData)
MAFNET_DEFINE_ERROR(IoError, kIo)
MAFNET_DEFINE_ERROR(ShapeError, kShape)
MAFNET_DEFINE_ERROR(ParamError, kParam)
MAFNET_DEFINE_ERROR(DegenerateRangeError, kDegenerateRange)
MAFNET_DEFINE_ERROR(ConfigError, kConfig)
MAFNET_DEFINE_ERROR(DivergenceError, kDivergence)

#undef MAFNET_DEFINE_ERROR

}  // namespace mafnet

#endif  // MAFNET_ERROR_HPP
