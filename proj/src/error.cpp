// Copyright (c) 2026 The MAFNet-HSI Authors
// SPDX-License-Identifier: Apache-2.0

#include "mafnet/error.hpp"

namespace mafnet {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kFormat: return "FormatError";
    case ErrorCode::kData: return "DataError";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kShape: return "ShapeError";
    case ErrorCode::kParam: return "ParamError";
    case ErrorCode::kDegenerateRange: return "DegenerateRangeError";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kDivergence: return "DivergenceError";
  }
  return "Error";
}

}  // namespace mafnet
