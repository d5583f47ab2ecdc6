// Copyright 2026 The R2SNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

/// @file r2s.hpp
/// Everything except the command-line front end.

#include "r2s/bfnet.hpp"
#include "r2s/checkpoint.hpp"
#include "r2s/config.hpp"
#include "r2s/datagen.hpp"
#include "r2s/errors.hpp"
#include "r2s/geometry.hpp"
#include "r2s/losses.hpp"
#include "r2s/metrics.hpp"
#include "r2s/netcore.hpp"
#include "r2s/pipeline.hpp"
#include "r2s/r2snet.hpp"
#include "r2s/tensor.hpp"
#include "r2s/training.hpp"
