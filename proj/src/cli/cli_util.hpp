#pragma once

// Helpers shared by the command implementations. Internal to src/cli.

#include <string>
#include <vector>

#include "otrecon/cli/config.hpp"
#include "otrecon/grid.hpp"
#include "otrecon/tomography.hpp"

namespace otrecon::cli::detail {

void write_text(const std::string& path, const std::string& content);

void write_manifest(const std::string& out_dir, const std::string& command, const Resolved& r,
                    const std::vector<std::string>& artifacts,
                    const std::vector<std::string>& extra = {});

// panels rescaled to [0,1] individually, composed side by side with a gap
DiscreteMeasure compose_panels(const std::vector<DiscreteMeasure>& panels, int gap = 2);

DiscreteMeasure sinogram_as_image(const tomo::Sinogram& s);

} // namespace otrecon::cli::detail
