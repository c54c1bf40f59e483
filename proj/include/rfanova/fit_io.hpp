#pragma once

#include "rfanova/estimation.hpp"

#include <iosfwd>
#include <stdexcept>
#include <string>

namespace rfanova {

class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kFitFormat = "rfanova-fit";
inline constexpr int kFitFormatVersion = 1;

/// Writes everything needed to predict without refitting: basis, B, kernel and
/// scale parameters, the curves themselves and the latent mode weights.
void write_fit(const ModelFit& model, std::ostream& out);
void save_fit(const ModelFit& model, const std::string& path);

/// Reads a fit file and re-solves the latent modes at the stored parameters.
ModelFit read_fit(std::istream& in);
ModelFit load_fit(const std::string& path);

}  // namespace rfanova
