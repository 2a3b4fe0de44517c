// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace elfstore {

enum class Errc {
  invalid_config,
  invalid_argument,
  not_found,
  wrong_role,
  invalid_merge,
  no_edges,
  no_edge,
  insufficient_capacity,
  no_capacity,
  already_exists,
  lease_unavailable,
  lease_lost,
  stale_version,
  integrity,
  unavailable,
  put_failed,
  partial_update,
  nothing_to_fail,
  protocol,
  internal,
};

std::string_view to_string(Errc code);
// Unknown names map to Errc::internal.
Errc errc_from_string(std::string_view name);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace elfstore
