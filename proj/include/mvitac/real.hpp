// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace mvitac {

#ifdef MVITAC_DOUBLE
using Real = double;
#else
using Real = float;
#endif

}  // namespace mvitac
