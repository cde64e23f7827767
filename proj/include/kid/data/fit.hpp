// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "kid/knowledge/format.hpp"

namespace kid::data {

// Serializes `t` in `format` within `max_bytes`: trailing knowledge items
// are dropped first (never cut mid-item), then the plain tail is cut at a
// UTF-8 boundary.
std::string fit_description(const knowledge::AugmentedText& t, knowledge::Format format,
                            std::size_t max_bytes);

}  // namespace kid::data
