// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kid/knowledge/corpus.hpp"

namespace kid::testutil {
using knowledge::corpus::random_augmented_text;
using knowledge::corpus::random_string;
}  // namespace kid::testutil
