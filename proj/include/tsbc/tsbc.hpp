// Copyright 2026 The tsbc Authors
// SPDX-License-Identifier: Apache-2.0

// Core library. The harness headers (tsbc/harness/*) additionally need
// nlohmann/json on the include path.

#pragma once

#include "tsbc/dataset.hpp"
#include "tsbc/divergence.hpp"
#include "tsbc/error.hpp"
#include "tsbc/gaussian.hpp"
#include "tsbc/nn/adam.hpp"
#include "tsbc/nn/architecture.hpp"
#include "tsbc/nn/network.hpp"
#include "tsbc/nn/tensor.hpp"
#include "tsbc/nn/weights_io.hpp"
#include "tsbc/pnm.hpp"
#include "tsbc/random.hpp"
#include "tsbc/sim/collect.hpp"
#include "tsbc/sim/course.hpp"
#include "tsbc/sim/expert.hpp"
#include "tsbc/sim/render.hpp"
#include "tsbc/sim/rollout.hpp"
#include "tsbc/training.hpp"
#include "tsbc/tsallis.hpp"
#include "tsbc/vbp/export.hpp"
#include "tsbc/vbp/visualbackprop.hpp"
