#pragma once

#include "neurosel/core.hpp"
#include "neurosel/error.hpp"
#include "neurosel/fingerprint.hpp"
#include "neurosel/forest.hpp"
#include "neurosel/importance.hpp"
#include "neurosel/logistic.hpp"
#include "neurosel/multisource.hpp"
#include "neurosel/nsd.hpp"
#include "neurosel/select.hpp"
#include "neurosel/transfer.hpp"

namespace neurosel {

inline constexpr std::string_view kVersion = "0.1.0";

}  // namespace neurosel
