// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

// Umbrella header.

#ifndef EALM_EALM_HPP_
#define EALM_EALM_HPP_

#include "ealm/error.hpp"
#include "ealm/half.hpp"
#include "ealm/lm_config.hpp"
#include "ealm/meter.hpp"
#include "ealm/metrics.hpp"
#include "ealm/pack.hpp"
#include "ealm/pipeline/config.hpp"
#include "ealm/pipeline/dataset.hpp"
#include "ealm/pipeline/report.hpp"
#include "ealm/pipeline/runner.hpp"
#include "ealm/prune.hpp"
#include "ealm/quant.hpp"
#include "ealm/rank.hpp"
#include "ealm/rng.hpp"
#include "ealm/tensors.hpp"
#include "ealm/tinylm.hpp"

#endif  // EALM_EALM_HPP_
