#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace caleb {

enum class ErrorCode {
  MissingColumn,
  WidthMismatch,
  NonNumericCell,
  UnknownLabel,
  ClassTooSmall,
  EmptyDataset,
  SchemaMismatch,
  BadCovariance,
  BadSchema,
  BadConfig,
  ShapeMismatch,
  NonFiniteActivation,
  StaleTape,
  LabelOutOfRange,
  NonFiniteLoss,
  UntrainedModel,
  WrongVariant,
  EmptyMinority,
  EmptyHistogram,
  SingleClass,
  EmptyTrain,
  LengthMismatch,
  UnknownCategory,
  DegenerateSample,
  MissingExternalData,
  TestLeak,
  Io,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::WidthMismatch: return "WidthMismatch";
    case ErrorCode::NonNumericCell: return "NonNumericCell";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::BadCovariance: return "BadCovariance";
    case ErrorCode::BadSchema: return "BadSchema";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::StaleTape: return "StaleTape";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::UntrainedModel: return "UntrainedModel";
    case ErrorCode::WrongVariant: return "WrongVariant";
    case ErrorCode::EmptyMinority: return "EmptyMinority";
    case ErrorCode::EmptyHistogram: return "EmptyHistogram";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::EmptyTrain: return "EmptyTrain";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::DegenerateSample: return "DegenerateSample";
    case ErrorCode::MissingExternalData: return "MissingExternalData";
    case ErrorCode::TestLeak: return "TestLeak";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library. `row` and `col` are set only by the
/// CSV loader and refer to the 0-based data row and feature column.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what,
        std::optional<std::size_t> row = std::nullopt,
        std::optional<std::size_t> col = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        row_(row),
        col_(col) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> row() const noexcept { return row_; }
  std::optional<std::size_t> col() const noexcept { return col_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> row_;
  std::optional<std::size_t> col_;
};

}  // namespace caleb
