#pragma once

#include <stdexcept>

namespace gam {

// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public Error { public: using Error::Error; };
class ParseError : public Error { public: using Error::Error; };
class ValidationError : public Error { public: using Error::Error; };
class EmptyDatasetError : public Error { public: using Error::Error; };
class SplitError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class DimensionError : public Error { public: using Error::Error; };
class DomainError : public Error { public: using Error::Error; };
class StateError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };
class FormatError : public Error { public: using Error::Error; };
class VersionError : public Error { public: using Error::Error; };

}  // namespace gam
