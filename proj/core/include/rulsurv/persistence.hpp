#pragma once

#include <iosfwd>
#include <string>

#include "rulsurv/models.hpp"

namespace rulsurv {

/// Versioned text blob holding the model kind, grids, baselines, and
/// network parameters. Doubles are written in shortest round-trip form,
/// so a reloaded model predicts bit-identically.
void save_model(std::ostream& os, const FittedModel& model);
FittedModel load_model(std::istream& is);

void save_model_file(const std::string& path, const FittedModel& model);
FittedModel load_model_file(const std::string& path);

}  // namespace rulsurv
