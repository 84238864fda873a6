#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace evk {

enum class ErrorKind {
  ParseError,
  EmptyMesh,
  DegenerateExtent,
  InvalidArgument,
  BadMagic,
  DimOverflow,
  NonFinite,
  IoError,
  ZeroDepth,
  SizeMismatch,
  EmptyMask,
  DomainMismatch,
  DimMismatch,
  DenoiserFailure,
  ShapeMismatch,
  EmptyCloud,
  MissingNormals,
  TooSmall,
  EmbedderFailure,
  WidthMismatch,
  PoolTooSmall,
  MissingArtifact,
  StageFailure,
  NoReports,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace evk
