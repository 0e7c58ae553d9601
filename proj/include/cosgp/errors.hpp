#pragma once

#include <stdexcept>
#include <string>

namespace cosgp {

/// Base for all library errors. `ValidationError` maps to CLI exit code 1,
/// `NumericalError` to exit code 2.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ValidationError : public Error {
public:
  using Error::Error;
};

class NumericalError : public Error {
public:
  using Error::Error;
};

// --- validation-type failures ---------------------------------------------

class RegionOutsideGrid : public ValidationError {
public:
  explicit RegionOutsideGrid(const std::string& region_id)
      : ValidationError("region '" + region_id + "' intersects no grid pixel") {}
};

class DegenerateGeometry : public ValidationError {
public:
  explicit DegenerateGeometry(const std::string& region_id)
      : ValidationError("region '" + region_id + "' has zero area") {}
};

class MissingOutcome : public ValidationError {
public:
  explicit MissingOutcome(const std::string& ids)
      : ValidationError("no outcome value for region(s): " + ids) {}
};

class DimensionMismatch : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class EmptyInput : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class TooFewSamples : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class TooFewDraws : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class TooFewRegions : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class EmptyCell : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class UnknownGroup : public ValidationError {
public:
  explicit UnknownGroup(const std::string& what) : ValidationError(what) {}
};

class HashMismatch : public ValidationError {
public:
  using ValidationError::ValidationError;
};

// --- numerical failures ----------------------------------------------------

class NotPSD : public NumericalError {
public:
  explicit NotPSD(const std::string& msg)
      : NumericalError("matrix not positive semidefinite: " + msg) {}
};

class AllRejected : public NumericalError {
public:
  explicit AllRejected(int chain)
      : NumericalError("chain " + std::to_string(chain) +
                       " accepted no proposal after warm-up") {}
};

class NonFinite : public NumericalError {
public:
  using NumericalError::NumericalError;
};

}  // namespace cosgp
