#pragma once

// The nine candidate rows of the trainset-generation example, with their
// cross-entropy losses as printed.

#include <string>
#include <utility>
#include <vector>

namespace fixtures {

inline const std::vector<std::pair<std::string, double>>& table4_rows() {
  static const std::vector<std::pair<std::string, double>> rows = {
      {"When [...] encrypted and [...] real location.", 4.582982},
      {"When [...] encrypted and [...] computer.", 4.613022},
      {"When [...] not visible to most websites and [...] true location.", 4.570329},
      {"When [...] encrypted so that it [...] ISP.", 4.608329},
      {"When [...] anonymous, and it [...] address.", 4.626064},
      {"When [...] secure and [...] actual computer.", 4.691911},
      {"When [...] secure and [...] true location.", 4.651963},
      {"When [...] anonymous and [...] actual home address or computer.", 4.637465},
      {"When [...] anonymous and [...] ISP.", 4.672797},
  };
  return rows;
}

inline constexpr double kTable4Selected = 4.691911;

}  // namespace fixtures
