// Copyright 2026 The simulseq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "simulseq/bridge.hpp"
#include "simulseq/conformance.hpp"
#include "simulseq/core.hpp"
#include "simulseq/decoding.hpp"
#include "simulseq/errors.hpp"
#include "simulseq/metrics.hpp"
#include "simulseq/model.hpp"
#include "simulseq/parallel.hpp"
#include "simulseq/rl.hpp"
#include "simulseq/rng.hpp"
#include "simulseq/stopping.hpp"
#include "simulseq/toy_model.hpp"
