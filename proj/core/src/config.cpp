#include "df/config.hpp"

#include <string>

namespace df {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid session config: " + what);
}

}  // namespace

void SessionConfig::validate() const {
  require(num_layers >= 1, "num_layers must be >= 1");
  require(num_heads >= 1, "num_heads must be >= 1");
  require(head_dim >= 1, "head_dim must be >= 1");
  require(hw >= 1, "hw must be >= 1");
  require(window_len >= 2, "window_len must be >= 2");
  require(denoise_steps >= 1, "denoise_steps must be >= 1");
  require(ar_steps >= 1, "ar_steps must be >= 1");
  require(dummy_count <= total_heads(),
          "dummy_count " + std::to_string(dummy_count) + " exceeds total heads " +
              std::to_string(total_heads()));
  require(subsample_ratio > 0.0 && subsample_ratio <= 1.0, "subsample_ratio must be in (0, 1]");
  require(!probe.denoise_step || *probe.denoise_step < denoise_steps,
          "probe denoise step out of range");
  require(!merged_window || *merged_window >= 2, "merged_window must be >= 2");
  require(!(merged_window && context_extension),
          "merged_window and context_extension are mutually exclusive");
}

}  // namespace df
